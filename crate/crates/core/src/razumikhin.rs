//! Lyapunov-Razumikhin certificate: decay budget, attraction radius,
//! comparison rate and the envelope constants.

use serde::{Deserialize, Serialize};

use crate::envelope::{inf_as_null, EstimateCurve};
use crate::error::{invalid, Error, Result};
use crate::model::{DelaySystem, GrowthConstants, LyapunovConstants};
use crate::roots::positive_power_root;

pub const DEFAULT_ALPHA: f64 = 2.0;
/// Default `delta = H (1 - DELTA_MARGIN)`.
pub const DELTA_MARGIN: f64 = 1e-6;
/// Automatic `rho = (1 - RHO_MARGIN) min(dbar, cap2, cap3)`.
pub const RHO_MARGIN: f64 = 1e-3;
const ROOT_TOLERANCE: f64 = 1e-12;
const IDENTITY_TOLERANCE: f64 = 1e-9;

/// `k4` and the admissible-radius cap `H = (w / k4)^(1/(mu-1))`.
pub fn compute_k4_h(
    lyap: &LyapunovConstants,
    growth: &GrowthConstants,
    h: f64,
    mu: f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    if !(alpha > 1.0) {
        return Err(invalid("alpha", format!("{alpha} must exceed 1")));
    }
    if !(h >= 0.0) {
        return Err(invalid("h", "must be nonnegative"));
    }
    lyap.validate()?;
    let g = lyap.gamma;
    let r = alpha * lyap.k1 / lyap.k0;
    let k4 = 2.0 * h * growth.m * growth.m2 * lyap.k2
        * r.powf(mu / g)
        * (1.0 + r.powf((mu - 1.0) / g));
    let big_h = (lyap.w / k4).powf(1.0 / (mu - 1.0));
    Ok((k4, big_h))
}

/// `k5 = w - k4 delta^(mu-1)`, positive exactly when `delta < H`.
pub fn compute_k5(w: f64, k4: f64, delta: f64, mu: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    let k5 = w - k4 * delta.powf(mu - 1.0);
    if k5 > 0.0 {
        Ok(k5)
    } else {
        Err(Error::Infeasible { constraint: "k5 = w - k4 delta^(mu-1) > 0", value: k5 })
    }
}

/// `kappa = (k0/k1)^(1/gamma)` and `K = (1 + (mu-1) m h (kappa delta)^(mu-1))^(1/(mu-1))`.
pub fn compute_kappa_k(lyap: &LyapunovConstants, m: f64, h: f64, mu: f64, delta: f64) -> (f64, f64) {
    let kappa = (lyap.k0 / lyap.k1).powf(1.0 / lyap.gamma);
    let e = mu - 1.0;
    let big_k = (1.0 + e * m * h * (kappa * delta).powf(e)).powf(1.0 / e);
    (kappa, big_k)
}

/// Positive root of `Delta + m h Delta^mu = kappa delta / K`.
pub fn solve_delta_razumikhin(m: f64, h: f64, mu: f64, kappa: f64, big_k: f64, delta: f64) -> f64 {
    positive_power_root(1.0, 1.0, m * h, mu, kappa * delta / big_k)
}

/// Upper limits on the comparison rate `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoCaps {
    /// `k5 k1^(-(gamma+mu-1)/gamma)`
    pub dbar: f64,
    /// from `1 + 2 h rho e k0^e delta^(mu-1) < alpha^e`, `e = (mu-1)/gamma`
    #[serde(with = "inf_as_null")]
    pub cap2: f64,
    /// from `1 - rho e k1^e K^(mu-1) h Delta^(mu-1) > 0`
    #[serde(with = "inf_as_null")]
    pub cap3: f64,
}

impl RhoCaps {
    pub fn min(&self) -> f64 {
        self.dbar.min(self.cap2).min(self.cap3)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RhoInputs {
    pub gamma: f64,
    pub mu: f64,
    pub h: f64,
    pub k0: f64,
    pub k1: f64,
    pub k5: f64,
    pub alpha: f64,
    pub delta: f64,
    pub big_k: f64,
    pub big_delta: f64,
}

impl RhoInputs {
    fn e(&self) -> f64 {
        (self.mu - 1.0) / self.gamma
    }

    pub fn caps(&self) -> RhoCaps {
        let e = self.e();
        let g = self.gamma;
        let dbar = self.k5 * self.k1.powf(-(g + self.mu - 1.0) / g);
        let cap2 = (self.alpha.powf(e) - 1.0)
            / (2.0 * self.h * e * self.k0.powf(e) * self.delta.powf(self.mu - 1.0));
        let cap3 = 1.0
            / (e * self.k1.powf(e) * self.big_k.powf(self.mu - 1.0) * self.h
                * self.big_delta.powf(self.mu - 1.0));
        RhoCaps { dbar, cap2, cap3 }
    }

    /// Left-hand sides of the three admissibility conditions at `rho`.
    pub fn conditions(&self, rho: f64) -> RhoConditions {
        let e = self.e();
        let caps = self.caps();
        RhoConditions {
            rho,
            dbar: caps.dbar,
            second_lhs: 1.0 + 2.0 * self.h * rho * e * self.k0.powf(e) * self.delta.powf(self.mu - 1.0),
            second_rhs: self.alpha.powf(e),
            third_lhs: 1.0
                - rho * e * self.k1.powf(e) * self.big_k.powf(self.mu - 1.0) * self.h
                    * self.big_delta.powf(self.mu - 1.0),
        }
    }
}

/// Evaluated admissibility conditions for a comparison rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoConditions {
    pub rho: f64,
    pub dbar: f64,
    pub second_lhs: f64,
    pub second_rhs: f64,
    pub third_lhs: f64,
}

impl RhoConditions {
    pub fn holds(&self) -> bool {
        self.rho > 0.0
            && self.rho < self.dbar
            && self.second_lhs < self.second_rhs
            && self.third_lhs > 0.0
    }

    fn check(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::Infeasible { constraint: "rho > 0", value: self.rho });
        }
        if !(self.rho < self.dbar) {
            return Err(Error::Infeasible { constraint: "rho < dbar", value: self.rho - self.dbar });
        }
        if !(self.second_lhs < self.second_rhs) {
            return Err(Error::Infeasible {
                constraint: "1 + 2 h rho e k0^e delta^(mu-1) < alpha^e",
                value: self.second_lhs - self.second_rhs,
            });
        }
        if !(self.third_lhs > 0.0) {
            return Err(Error::Infeasible {
                constraint: "1 - rho e k1^e K^(mu-1) h Delta^(mu-1) > 0",
                value: self.third_lhs,
            });
        }
        Ok(())
    }
}

/// `rho = (1 - RHO_MARGIN) min(dbar, cap2, cap3)`, verified afterwards.
pub fn select_rho(inputs: &RhoInputs) -> Result<f64> {
    let rho = (1.0 - RHO_MARGIN) * inputs.caps().min();
    inputs.conditions(rho).check()?;
    Ok(rho)
}

/// Envelope pre-constants and final constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RazumikhinEstimate {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `A = delta/Delta`, `B = rho e k1^e (K (1 + m h Delta^(mu-1)))^(mu-1)`,
/// `c1 = A / (1 - B h Delta^(mu-1))^(1/(mu-1))`, `c2 = B / (1 - B h Delta^(mu-1))`.
pub fn razumikhin_estimate(inputs: &RhoInputs, m: f64, rho: f64) -> Result<RazumikhinEstimate> {
    let mu = inputs.mu;
    let e = inputs.e();
    let dm = inputs.big_delta.powf(mu - 1.0);
    let a = inputs.delta / inputs.big_delta;
    let b = rho * e * inputs.k1.powf(e) * (inputs.big_k * (1.0 + m * inputs.h * dm)).powf(mu - 1.0);
    let denom = 1.0 - b * inputs.h * dm;
    if !(denom > 0.0) {
        return Err(Error::Infeasible { constraint: "1 - B h Delta^(mu-1) > 0", value: denom });
    }
    Ok(RazumikhinEstimate {
        a,
        b,
        c1: a / denom.powf(1.0 / (mu - 1.0)),
        c2: b / denom,
    })
}

/// `K (|phi| + m h |phi|^mu)`, a bound for `|x(t)|` on `[0, h]`.
pub fn short_time_bound(phi_norm: f64, m: f64, h: f64, mu: f64, big_k: f64) -> f64 {
    big_k * (phi_norm + m * h * phi_norm.powf(mu))
}

/// Solution of `z' = -rho z^((gamma+mu-1)/gamma)` with `z(h) = z0`.
pub fn comparison_solution(z0: f64, rho: f64, gamma: f64, mu: f64, h: f64, t: f64) -> f64 {
    if z0 == 0.0 {
        return 0.0;
    }
    let e = (mu - 1.0) / gamma;
    z0 * (1.0 + rho * e * z0.powf(e) * (t - h)).powf(-1.0 / e)
}

/// Free parameters; `None` selects the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RazumikhinParams {
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RazumikhinCertificate {
    pub mu: f64,
    pub gamma: f64,
    pub h: f64,
    pub m: f64,
    pub k0: f64,
    pub k1: f64,
    pub w: f64,
    pub alpha: f64,
    pub delta: f64,
    #[serde(rename = "H", with = "inf_as_null")]
    pub big_h: f64,
    pub k4: f64,
    pub k5: f64,
    pub kappa: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    pub caps: RhoCaps,
    pub rho: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl RazumikhinCertificate {
    pub fn build(system: &DelaySystem, params: &RazumikhinParams) -> Result<Self> {
        let lc = system.lyapunov.constants;
        let growth = system.growth;
        let (h, mu) = (system.delay(), system.mu());
        let alpha = params.alpha.unwrap_or(DEFAULT_ALPHA);
        let (k4, big_h) = compute_k4_h(&lc, &growth, h, mu, alpha)?;
        let delta = match params.delta {
            Some(d) => d,
            None if big_h.is_finite() => big_h * (1.0 - DELTA_MARGIN),
            None => return Err(invalid("delta", "required when the delay is zero")),
        };
        let k5 = compute_k5(lc.w, k4, delta, mu)?;
        let (kappa, big_k) = compute_kappa_k(&lc, growth.m, h, mu, delta);
        let big_delta = solve_delta_razumikhin(growth.m, h, mu, kappa, big_k, delta);
        let inputs = RhoInputs {
            gamma: lc.gamma,
            mu,
            h,
            k0: lc.k0,
            k1: lc.k1,
            k5,
            alpha,
            delta,
            big_k,
            big_delta,
        };
        let rho = match params.rho {
            Some(r) => {
                inputs.conditions(r).check()?;
                r
            }
            None => select_rho(&inputs)?,
        };
        let est = razumikhin_estimate(&inputs, growth.m, rho)?;
        Ok(RazumikhinCertificate {
            mu,
            gamma: lc.gamma,
            h,
            m: growth.m,
            k0: lc.k0,
            k1: lc.k1,
            w: lc.w,
            alpha,
            delta,
            big_h,
            k4,
            k5,
            kappa,
            big_k,
            big_delta,
            caps: inputs.caps(),
            rho,
            a: est.a,
            b: est.b,
            c1: est.c1,
            c2: est.c2,
        })
    }

    fn inputs(&self) -> RhoInputs {
        RhoInputs {
            gamma: self.gamma,
            mu: self.mu,
            h: self.h,
            k0: self.k0,
            k1: self.k1,
            k5: self.k5,
            alpha: self.alpha,
            delta: self.delta,
            big_k: self.big_k,
            big_delta: self.big_delta,
        }
    }

    pub fn rho_conditions(&self) -> RhoConditions {
        self.inputs().conditions(self.rho)
    }

    /// Residual of the attraction-radius equation, relative to its right side.
    pub fn root_residual(&self) -> f64 {
        let rhs = self.kappa * self.delta / self.big_k;
        (self.big_delta + self.m * self.h * self.big_delta.powf(self.mu) - rhs).abs() / rhs
    }

    /// Re-verifies every invariant of the certificate.
    pub fn check(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < self.big_h) {
            return Err(Error::Infeasible { constraint: "0 < delta < H", value: self.delta });
        }
        let k5 = self.w - self.k4 * self.delta.powf(self.mu - 1.0);
        if !(k5 > 0.0) || (k5 - self.k5).abs() > 1e-12 * self.w {
            return Err(Error::Infeasible { constraint: "k5 = w - k4 delta^(mu-1) > 0", value: k5 });
        }
        let r = self.root_residual();
        if !(r < ROOT_TOLERANCE) {
            return Err(Error::Infeasible { constraint: "Delta + m h Delta^mu = kappa delta / K", value: r });
        }
        self.rho_conditions().check()?;
        let ident = (self.a - self.delta / self.big_delta).abs() / self.a;
        if !(ident < IDENTITY_TOLERANCE) {
            return Err(Error::Infeasible { constraint: "A = delta / Delta", value: ident });
        }
        let dm = self.big_delta.powf(self.mu - 1.0);
        let denom = 1.0 - self.b * self.h * dm;
        if !(denom > 0.0) {
            return Err(Error::Infeasible { constraint: "1 - B h Delta^(mu-1) > 0", value: denom });
        }
        if self.c1 < self.a || self.c2 > self.b / denom * (1.0 + 1e-12) {
            return Err(Error::Infeasible { constraint: "c1 >= A, c2 <= B / (1 - B h Delta^(mu-1))", value: self.c1 - self.a });
        }
        Ok(())
    }

    pub fn curve(&self) -> EstimateCurve {
        EstimateCurve { c1: self.c1, c2: self.c2, mu: self.mu }
    }

    pub fn short_time_bound(&self, phi_norm: f64) -> f64 {
        short_time_bound(phi_norm, self.m, self.h, self.mu, self.big_k)
    }

    /// Initial value `k1 K^gamma (|phi| + m h |phi|^mu)^gamma` of the
    /// comparison solution at `t = h`.
    pub fn comparison_start(&self, phi_norm: f64) -> f64 {
        self.k1 * self.short_time_bound(phi_norm).powf(self.gamma)
    }

    pub fn comparison(&self, phi_norm: f64, t: f64) -> f64 {
        comparison_solution(self.comparison_start(phi_norm), self.rho, self.gamma, self.mu, self.h, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> (LyapunovConstants, GrowthConstants) {
        (
            LyapunovConstants { gamma: 2.0, k0: 1.0, k1: 1.0, k2: 2.0, k3: 2.0, w: 1.0 },
            GrowthConstants { m: 1.0, m1: 3.0, m2: 1.5 },
        )
    }

    #[test]
    fn k4_and_h_example1() {
        let (l, g) = ex1();
        let (k4, big_h) = compute_k4_h(&l, &g, 10.0, 3.0, 2.0).unwrap();
        let oracle = 2.0 * 10.0 * 1.5 * 2.0 * 2f64.powf(1.5) * 3.0;
        assert!((k4 - oracle).abs() < 1e-12 * oracle);
        assert!((big_h - 0.044319).abs() < 1e-6);
    }

    #[test]
    fn k5_limits() {
        assert!((compute_k5(1.0, 509.116882, 0.01, 3.0).unwrap() - 0.949088).abs() < 1e-6);
        assert_eq!(compute_k5(1.0, 509.0, 1e-200, 3.0).unwrap(), 1.0);
        assert!(matches!(compute_k5(1.0, 509.0, 0.05, 3.0), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn no_delay_means_no_inflation() {
        let (l, _) = ex1();
        assert_eq!(compute_kappa_k(&l, 1.0, 0.0, 3.0, 0.3), (1.0, 1.0));
    }

    #[test]
    fn comparison_solution_solves_its_equation() {
        let (z0, rho, g, mu, h) = (0.7, 0.3, 2.0, 3.0, 1.0);
        assert_eq!(comparison_solution(z0, rho, g, mu, h, h), z0);
        assert_eq!(comparison_solution(0.0, rho, g, mu, h, 5.0), 0.0);
        for t in [1.5, 3.0, 40.0] {
            let s = 1e-5;
            let d = (comparison_solution(z0, rho, g, mu, h, t + s)
                - comparison_solution(z0, rho, g, mu, h, t - s))
                / (2.0 * s);
            let z = comparison_solution(z0, rho, g, mu, h, t);
            let want = -rho * z.powf((g + mu - 1.0) / g);
            assert!(((d - want) / want).abs() < 1e-6);
        }
    }

    #[test]
    fn estimate_rejects_violated_denominator() {
        let inputs = RhoInputs {
            gamma: 2.0,
            mu: 3.0,
            h: 10.0,
            k0: 1.0,
            k1: 1.0,
            k5: 0.9,
            alpha: 2.0,
            delta: 0.04,
            big_k: 1.01,
            big_delta: 0.039,
        };
        assert!(razumikhin_estimate(&inputs, 1.0, 1e3).is_err());
        assert!(razumikhin_estimate(&inputs, 1.0, 0.1).is_ok());
    }
}
