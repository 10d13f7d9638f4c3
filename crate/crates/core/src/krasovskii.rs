//! Lyapunov-Krasovskii functional and certificate, general and scalar paths.

use serde::{Deserialize, Serialize};

use crate::envelope::{inf_as_null, EstimateCurve};
use crate::error::{invalid, Error, Result};
use crate::history::HistorySegment;
use crate::integrator::Trajectory;
use crate::model::{DelaySystem, GrowthConstants, HomogeneousRhs, LyapunovConstants, LyapunovData};
use crate::quadrature::simpson;
use crate::roots::positive_power_root;
use crate::sampling::euclidean;

pub const DELTA_MARGIN: f64 = 1e-6;
/// Absolute slack when comparing finite-difference `dv/dt` with its bounds.
pub const DERIVATIVE_SLACK: f64 = 1e-8;
const ROOT_TOLERANCE: f64 = 1e-12;
const IDENTITY_TOLERANCE: f64 = 1e-9;

/// `w = w0 + w1 + h w2` with all three parts positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSplit {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

impl WeightSplit {
    pub fn new(w: f64, h: f64, w1: f64, w2: f64) -> Result<Self> {
        if !(w1 > 0.0) {
            return Err(invalid("w1", "must be positive"));
        }
        if !(w2 > 0.0) {
            return Err(invalid("w2", "must be positive"));
        }
        let w0 = w - w1 - h * w2;
        if !(w0 > 0.0) {
            return Err(Error::Infeasible { constraint: "w0 = w - w1 - h w2 > 0", value: w0 });
        }
        Ok(WeightSplit { w0, w1, w2 })
    }

    /// `(w/2, w/(4h))`, leaving `w0 = w/4`.
    pub fn default_for(w: f64, h: f64) -> Result<Self> {
        Self::new(w, h, 0.5 * w, 0.25 * w / h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrasovskiiPath {
    General,
    Scalar,
}

/// Bound constants of the functional for one `(chi, delta, weights)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrasovskiiConstants {
    #[serde(rename = "H1", with = "inf_as_null")]
    pub h1: f64,
    #[serde(rename = "H2", with = "inf_as_null")]
    pub h2: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub b: f64,
    pub beta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
}

impl KrasovskiiConstants {
    /// Fails unless `delta < min(H1, H2)` and `a1, a2, c > 0`.
    pub fn require_feasible(&self, delta: f64) -> Result<()> {
        let cap = self.h1.min(self.h2);
        if !(delta > 0.0 && delta < cap) {
            return Err(Error::Infeasible { constraint: "0 < delta < min(H1, H2)", value: delta - cap });
        }
        for (constraint, value) in [("a1 > 0", self.a1), ("a2 > 0", self.a2), ("c > 0", self.c)] {
            if !(value > 0.0) {
                return Err(Error::Infeasible { constraint, value });
            }
        }
        Ok(())
    }
}

/// Bound constants for a general system; not checked for feasibility.
pub fn general_constants(
    lyap: &LyapunovConstants,
    growth: &GrowthConstants,
    h: f64,
    mu: f64,
    chi: f64,
    delta: f64,
    weights: &WeightSplit,
) -> KrasovskiiConstants {
    let (k0, k1, k2, k3, g) = (lyap.k0, lyap.k1, lyap.k2, lyap.k3, lyap.gamma);
    let (m, m1) = (growth.m, growth.m1);
    let WeightSplit { w0, w1, w2 } = *weights;
    let e = mu - 1.0;
    let dm = delta.powf(e);
    let spread = h * k2 * m * (1.0 + chi.powf(-2.0 * mu));
    let l = m * m1 * k2 + m * m * k3;
    let b1 = k1 + 2.0 * h * m * k2 * dm;
    let b2 = (m * k2 + w1 + h * w2) * dm;
    let c1 = w0 - 4.0 * h * l * dm;
    let c2 = w2 - 2.0 * l * dm;
    let h2_base = (w0 / (4.0 * h * l)).min(w1 / (2.0 * h * l)).min(w2 / (2.0 * l));
    KrasovskiiConstants {
        h1: (k0 / spread).powf(1.0 / e),
        h2: h2_base.powf(1.0 / e),
        a1: k0 - spread * dm,
        a2: w1 - k2 * m * chi.powf(2.0 * (g - 1.0)),
        b1,
        b2,
        b: b1.max(b2),
        beta: (2.0 * k2 * m + w1 + h * w2) * h,
        l,
        c1,
        c2,
        c: c1.min(c2),
    }
}

/// Bound constants for `x' = alpha1 x^mu + alpha2 y^mu` with `V = x^2`.
pub fn scalar_constants(
    alpha1: f64,
    alpha2: f64,
    h: f64,
    mu: f64,
    chi: f64,
    delta: f64,
    weights: &WeightSplit,
) -> KrasovskiiConstants {
    let WeightSplit { w0, w1, w2 } = *weights;
    let a2abs = alpha2.abs();
    let e = mu - 1.0;
    let dm = delta.powf(e);
    let l = a2abs * (alpha1 + alpha2).abs();
    let b1 = 1.0 + a2abs * h;
    let b2 = (a2abs * (1.0 + a2abs * h) * dm + w1 + h * w2) * dm;
    let c1 = w0 - h * l * dm;
    let c2 = w2 - l * dm;
    KrasovskiiConstants {
        h1: (w1 * chi * chi / a2abs).powf(1.0 / e),
        h2: (w0 / (h * l)).min(w2 / l).powf(1.0 / e),
        a1: 1.0 - chi * chi * h * a2abs,
        a2: w1 - a2abs / (chi * chi) * dm,
        b1,
        b2,
        b: b1.max(b2),
        beta: (2.0 * a2abs + alpha2 * alpha2 * h * dm + w1 + h * w2) * h,
        l,
        c1,
        c2,
        c: c1.min(c2),
    }
}

/// `L1` in `(|x|^q + int |x|^q)^(p/q) <= L1 (|x|^p + int |x|^p)`, equal to
/// `(2 max(1, h))^(p/q - 1)`.
pub fn mixed_power_l1(p: f64, q: f64, h: f64) -> Result<f64> {
    if !(p > q && q >= 1.0) {
        return Err(invalid("p", format!("need p > q >= 1, got p = {p}, q = {q}")));
    }
    Ok((2.0 * h.max(1.0)).powf(p / q - 1.0))
}

/// Scalar case `q = 2`, `p = 2k`: `2^(k-2) (1+h)^(k-1)` for integer `k >= 2`.
pub fn even_power_l1(k: f64, h: f64) -> Result<f64> {
    if !(k >= 2.0 && k.fract() == 0.0) {
        return Err(invalid("k", format!("{k} must be an integer of at least 2")));
    }
    Ok(2f64.powf(k - 2.0) * (1.0 + h).powf(k - 1.0))
}

/// Positive root of `k1 D^gamma + beta D^(gamma+mu-1) = a1 delta^gamma`;
/// the scalar path is `k1 = 1`, `gamma = 2`.
pub fn solve_delta_krasovskii(k1: f64, beta: f64, a1: f64, delta: f64, gamma: f64, mu: f64) -> f64 {
    positive_power_root(k1, gamma, beta, gamma + mu - 1.0, a1 * delta.powf(gamma))
}

/// Envelope constants `(c1_hat, c2_hat)`.
pub fn krasovskii_estimate(
    path: KrasovskiiPath,
    k1: f64,
    gamma: f64,
    mu: f64,
    h: f64,
    big_delta: f64,
    consts: &KrasovskiiConstants,
) -> (f64, f64) {
    let e = mu - 1.0;
    let lead = k1 + consts.beta * big_delta.powf(e);
    let c1 = (lead / consts.a1).powf(1.0 / gamma);
    let c2 = match path {
        KrasovskiiPath::General => {
            consts.c / consts.b * (e / gamma) * (lead / (2.0 * consts.b * h.max(1.0))).powf(e / gamma)
        }
        KrasovskiiPath::Scalar => {
            consts.c * e / consts.b * (lead / (2.0 * consts.b * (1.0 + h))).powf(e / 2.0)
        }
    };
    (c1, c2)
}

/// Whether `rhs` is `alpha1 x^mu + alpha2 y^mu` with odd integer `mu >= 3`
/// and `lyap` is `x^2`.
pub fn scalar_path_applies(rhs: &HomogeneousRhs, lyap: &LyapunovData) -> Option<(f64, f64)> {
    let deg = rhs.degree();
    let odd = deg.is_integer() && deg.numer() >= 3 && deg.numer() % 2 == 1;
    if rhs.dim() != 1 || !odd {
        return None;
    }
    let c = lyap.constants;
    let is_square = c.gamma == 2.0 && (lyap.value(&[1.0]) - 1.0).abs() < 1e-12 && (lyap.value(&[-0.5]) - 0.25).abs() < 1e-12;
    if !is_square {
        return None;
    }
    rhs.scalar_coefficients()
}

/// Free parameters; `None` selects the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KrasovskiiParams {
    #[serde(default)]
    pub chi: Option<f64>,
    #[serde(default)]
    pub w1: Option<f64>,
    #[serde(default)]
    pub w2: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub path: Option<KrasovskiiPath>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrasovskiiCertificate {
    pub path: KrasovskiiPath,
    pub mu: f64,
    pub gamma: f64,
    pub h: f64,
    pub k1: f64,
    /// `alpha2` of the scalar equation; zero on the general path.
    pub alpha2: f64,
    pub chi: f64,
    pub delta: f64,
    pub weights: WeightSplit,
    #[serde(flatten)]
    pub constants: KrasovskiiConstants,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
}

impl KrasovskiiCertificate {
    pub fn build(system: &DelaySystem, params: &KrasovskiiParams) -> Result<Self> {
        let lc = system.lyapunov.constants;
        let (h, mu) = (system.delay(), system.mu());
        if !(h > 0.0) {
            return Err(invalid("h", "the functional needs a positive delay"));
        }
        let scalar = scalar_path_applies(&system.rhs, &system.lyapunov);
        let path = match (params.path, scalar) {
            (Some(KrasovskiiPath::Scalar), None) => {
                return Err(invalid("path", "scalar path needs x' = a1 x^mu + a2 y^mu, odd integer mu >= 3, V = x^2"))
            }
            (Some(p), _) => p,
            (None, Some(_)) => KrasovskiiPath::Scalar,
            (None, None) => KrasovskiiPath::General,
        };
        let w1 = params.w1.unwrap_or(0.5 * lc.w);
        let w2 = params.w2.unwrap_or(0.25 * lc.w / h);
        let weights = WeightSplit::new(lc.w, h, w1, w2)?;
        let e = mu - 1.0;
        let (alpha1, alpha2) = scalar.unwrap_or((0.0, 0.0));
        let (gamma, k1, chi) = match path {
            KrasovskiiPath::General => {
                // a2 = w1 / 2
                let chi = params
                    .chi
                    .unwrap_or((w1 / (2.0 * lc.k2 * system.growth.m)).powf(1.0 / (2.0 * (lc.gamma - 1.0))));
                (lc.gamma, lc.k1, chi)
            }
            // a1 = 1/2
            KrasovskiiPath::Scalar => (2.0, 1.0, params.chi.unwrap_or((0.5 / (h * alpha2.abs())).sqrt())),
        };
        if !(chi > 0.0) {
            return Err(invalid("chi", "must be positive"));
        }
        let consts_at = |delta: f64| match path {
            KrasovskiiPath::General => general_constants(&lc, &system.growth, h, mu, chi, delta, &weights),
            KrasovskiiPath::Scalar => scalar_constants(alpha1, alpha2, h, mu, chi, delta, &weights),
        };
        let delta = match params.delta {
            Some(d) => d,
            None => {
                let caps = consts_at(0.0);
                let lead = match path {
                    // maximizes a1 delta^gamma
                    KrasovskiiPath::General => caps.h1 * (gamma / (gamma + e)).powf(1.0 / e),
                    // a2 = w1 / 2
                    KrasovskiiPath::Scalar => caps.h1 * 0.5f64.powf(1.0 / e),
                };
                lead.min(caps.h2 * (1.0 - DELTA_MARGIN))
            }
        };
        let constants = consts_at(delta);
        constants.require_feasible(delta)?;
        let l1 = match path {
            KrasovskiiPath::General => mixed_power_l1(gamma + e, gamma, h)?,
            KrasovskiiPath::Scalar => even_power_l1((mu + 1.0) / 2.0, h)?,
        };
        let l2 = constants.c / (constants.b.powf((gamma + e) / gamma) * l1);
        let big_delta = solve_delta_krasovskii(k1, constants.beta, constants.a1, delta, gamma, mu);
        let (c1_hat, c2_hat) = krasovskii_estimate(path, k1, gamma, mu, h, big_delta, &constants);
        Ok(KrasovskiiCertificate {
            path,
            mu,
            gamma,
            h,
            k1,
            alpha2,
            chi,
            delta,
            weights,
            constants,
            l1,
            l2,
            big_delta,
            c1_hat,
            c2_hat,
        })
    }

    /// Residual of the attraction-radius equation, relative to its right side.
    pub fn root_residual(&self) -> f64 {
        let d = self.big_delta;
        let rhs = self.constants.a1 * self.delta.powf(self.gamma);
        let lhs = self.k1 * d.powf(self.gamma) + self.constants.beta * d.powf(self.gamma + self.mu - 1.0);
        (lhs - rhs).abs() / rhs
    }

    pub fn check(&self) -> Result<()> {
        self.constants.require_feasible(self.delta)?;
        if self.path == KrasovskiiPath::General && self.constants.b < self.k1 {
            return Err(Error::Infeasible { constraint: "b >= k1", value: self.constants.b - self.k1 });
        }
        let r = self.root_residual();
        if !(r < ROOT_TOLERANCE) {
            return Err(Error::Infeasible { constraint: "attraction-radius equation", value: r });
        }
        let ident = (self.c1_hat - self.delta / self.big_delta).abs() / self.c1_hat;
        if !(ident < IDENTITY_TOLERANCE) {
            return Err(Error::Infeasible { constraint: "c1_hat = delta / Delta", value: ident });
        }
        Ok(())
    }

    pub fn curve(&self) -> EstimateCurve {
        EstimateCurve { c1: self.c1_hat, c2: self.c2_hat, mu: self.mu }
    }

    /// Exponent `gamma + mu - 1` of the integral terms.
    pub fn power(&self) -> f64 {
        self.gamma + self.mu - 1.0
    }
}

/// The functional `v` on a delay window, general or scalar form.
#[derive(Clone, Copy, Debug)]
pub struct Functional<'a> {
    pub rhs: &'a HomogeneousRhs,
    pub lyap: &'a LyapunovData,
    pub weights: WeightSplit,
    pub path: KrasovskiiPath,
}

impl<'a> Functional<'a> {
    pub fn new(system: &'a DelaySystem, cert: &KrasovskiiCertificate) -> Self {
        Functional {
            rhs: &system.rhs,
            lyap: &system.lyapunov,
            weights: cert.weights,
            path: cert.path,
        }
    }

    fn power(&self) -> f64 {
        match self.path {
            KrasovskiiPath::General => self.lyap.gamma() + self.rhs.mu() - 1.0,
            KrasovskiiPath::Scalar => self.rhs.mu() + 1.0,
        }
    }

    /// `v` from node values on a uniform grid over `[-h, 0]`, flattened
    /// node-major.
    pub fn value_samples(&self, window: &[f64]) -> Result<f64> {
        let n = self.rhs.dim();
        let nodes = window.len() / n;
        if nodes < 5 || !window.len().is_multiple_of(n) {
            return Err(Error::GridTooCoarse(nodes.saturating_sub(1)));
        }
        let h = self.rhs.delay();
        let spacing = h / (nodes - 1) as f64;
        let node = |i: usize| &window[i * n..(i + 1) * n];
        let now = node(nodes - 1);
        let p = self.power();
        let WeightSplit { w1, w2, .. } = self.weights;
        let weighted: Vec<f64> = (0..nodes)
            .map(|i| {
                let theta = -h + i as f64 * spacing;
                (w1 + (h + theta) * w2) * euclidean(node(i)).powf(p)
            })
            .collect();
        let tail = simpson(&weighted, spacing);
        match self.path {
            KrasovskiiPath::Scalar => {
                let (_, alpha2) = self.rhs.scalar_coefficients().ok_or_else(|| {
                    invalid("path", "scalar functional needs a scalar two-term system")
                })?;
                let mu = self.rhs.degree();
                let powered: Vec<f64> = (0..nodes).map(|i| mu.pow(window[i])).collect();
                let inner = now[0] + alpha2 * simpson(&powered, spacing);
                Ok(inner * inner + tail)
            }
            KrasovskiiPath::General => {
                let mut f = vec![0.0; n];
                let mut comps: Vec<Vec<f64>> = vec![Vec::with_capacity(nodes); n];
                for i in 0..nodes {
                    self.rhs.eval_into(now, node(i), &mut f);
                    for k in 0..n {
                        comps[k].push(f[k]);
                    }
                }
                let grad = self.lyap.gradient(now);
                let cross: f64 = (0..n).map(|k| grad[k] * simpson(&comps[k], spacing)).sum();
                Ok(self.lyap.value(now) + cross + tail)
            }
        }
    }

    pub fn value(&self, phi: &HistorySegment) -> Result<f64> {
        let window: Vec<f64> = (0..=phi.intervals()).flat_map(|i| phi.node(i).to_vec()).collect();
        self.value_samples(&window)
    }
}

/// `v(phi)` for a history.
pub fn functional_value(
    phi: &HistorySegment,
    lyap: &LyapunovData,
    rhs: &HomogeneousRhs,
    weights: WeightSplit,
    path: KrasovskiiPath,
) -> Result<f64> {
    Functional { rhs, lyap, weights, path }.value(phi)
}

/// `v(phi)` next to its lower and upper bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sandwich {
    pub value: f64,
    /// `a1 |phi(0)|^gamma + a2 int |phi|^(gamma+mu-1)`
    pub lower: f64,
    /// `b (|phi(0)|^gamma + int |phi|^gamma)`
    pub upper_b: f64,
    /// `k1 |phi(0)|^gamma + beta |phi|_h^(gamma+mu-1)`
    pub upper_beta: f64,
}

impl Sandwich {
    pub fn holds(&self, slack: f64) -> bool {
        self.lower <= self.value + slack && self.value <= self.upper_b.min(self.upper_beta) + slack
    }
}

pub fn sandwich(functional: &Functional<'_>, cert: &KrasovskiiCertificate, phi: &HistorySegment) -> Result<Sandwich> {
    let value = functional.value(phi)?;
    let g = cert.gamma;
    let p = cert.power();
    let norms: Vec<f64> = (0..=phi.intervals()).map(|i| euclidean(phi.node(i))).collect();
    let now = norms[norms.len() - 1];
    let int = |q: f64| simpson(&norms.iter().map(|r| r.powf(q)).collect::<Vec<_>>(), phi.spacing());
    let k = &cert.constants;
    Ok(Sandwich {
        value,
        lower: k.a1 * now.powf(g) + k.a2 * int(p),
        upper_b: k.b * (now.powf(g) + int(g)),
        upper_beta: cert.k1 * now.powf(g) + k.beta * phi.sup_norm().powf(p),
    })
}

/// `v(x_t)` along a trajectory with its finite-difference derivative and
/// the two decay bounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FunctionalTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
    /// `-c (|x(t)|^p + int |x(t+s)|^p ds)`
    pub rate_bound: Vec<f64>,
    /// `-L2 v^(p/gamma)`
    pub power_bound: Vec<f64>,
}

impl FunctionalTrace {
    /// Largest excess of `dv/dt` over either bound.
    pub fn worst_excess(&self) -> f64 {
        self.derivatives
            .iter()
            .zip(self.rate_bound.iter().zip(&self.power_bound))
            .map(|(d, (r, p))| (d - r).max(d - p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.derivatives.is_empty() || self.worst_excess() <= slack
    }
}

/// Samples `v(x_t)` at every `stride`-th node (interior nodes only) and
/// compares the central-difference derivative with both bounds. Fails if
/// a sampled window leaves the `delta`-ball.
pub fn functional_derivative_trace(
    traj: &Trajectory,
    cert: &KrasovskiiCertificate,
    functional: &Functional<'_>,
    stride: usize,
) -> Result<FunctionalTrace> {
    let stride = stride.max(1);
    let dt = traj.step();
    let n = traj.dim();
    let p = cert.power();
    let mut out = FunctionalTrace::default();
    let mut i = 1;
    while i + 1 < traj.len() {
        let window = traj.window_samples(i);
        let norms: Vec<f64> = window.chunks(n).map(euclidean).collect();
        let sup = norms.iter().copied().fold(0.0, f64::max);
        if sup > cert.delta {
            return Err(Error::LeavesBall { t: traj.time(i), norm: sup, delta: cert.delta });
        }
        let v = functional.value_samples(&window)?;
        let before = functional.value_samples(&traj.window_samples(i - 1))?;
        let after = functional.value_samples(&traj.window_samples(i + 1))?;
        let powered: Vec<f64> = norms.iter().map(|r| r.powf(p)).collect();
        let now = powered[powered.len() - 1];
        out.times.push(traj.time(i));
        out.values.push(v);
        out.derivatives.push((after - before) / (2.0 * dt));
        out.rate_bound.push(-cert.constants.c * (now + simpson(&powered, dt)));
        out.power_bound.push(-cert.l2 * v.max(0.0).powf(p / cert.gamma));
        i += stride;
    }
    Ok(out)
}
