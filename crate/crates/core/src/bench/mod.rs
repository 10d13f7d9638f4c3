//! The two worked examples, their table presets, comparison reports and
//! figure data.

mod compare;
mod tables;

pub use compare::{compare, compare_system, write_figure_data, CompareConfig, ComparisonReport, DecadeVerdict, EnvelopeSample, Tighter};
pub use tables::{preset, reproduce_table, CellResult, CellStatus, Fixture, FixtureCell, TablePreset, TableReport, FIXTURE_JSON};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{DelaySystem, GrowthConstants, HomogeneousRhs, LyapunovConstants, LyapunovData, Monomial, PolyTerm};
use crate::power::Exponent;

/// A worked example with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum ExampleSpec {
    /// `x' = alpha1 x^3 + alpha2 x^3(t-h)` with `V = x^2`.
    Ex1 { alpha1: f64, alpha2: f64, h: f64 },
    /// `x1' = x2^mu`, `x2' = -x1^mu - x2^mu(t-h)` with
    /// `V = (x1^(mu+1) + x2^(mu+1))/(mu+1) + zeta x1^mu x2`.
    Ex2 { mu: Exponent, zeta: f64, h: f64 },
}

impl ExampleSpec {
    pub fn ex1() -> Self {
        ExampleSpec::Ex1 { alpha1: -1.0, alpha2: 0.5, h: 10.0 }
    }

    pub fn ex2() -> Self {
        ExampleSpec::Ex2 { mu: Exponent::integer(3), zeta: 0.1, h: 1.0 }
    }

    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            "ex1" => Ok(Self::ex1()),
            "ex2" => Ok(Self::ex2()),
            other => Err(invalid("example", format!("unknown example `{other}`, expected ex1 or ex2"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            ExampleSpec::Ex1 { .. } => "ex1",
            ExampleSpec::Ex2 { .. } => "ex2",
        }
    }

    pub fn delay(&self) -> f64 {
        match *self {
            ExampleSpec::Ex1 { h, .. } | ExampleSpec::Ex2 { h, .. } => h,
        }
    }
}

/// `eta = min(zeta, 1 - zeta(mu+1), zeta/(1+zeta) (1 - zeta (1+mu)^2 / 4))`.
pub fn eta(mu: f64, zeta: f64) -> f64 {
    zeta.min(1.0 - zeta * (mu + 1.0))
        .min(zeta / (1.0 + zeta) * (1.0 - zeta * (1.0 + mu) * (1.0 + mu) / 4.0))
}

pub fn build_example(spec: &ExampleSpec) -> Result<DelaySystem> {
    match *spec {
        ExampleSpec::Ex1 { alpha1, alpha2, h } => {
            if !(alpha1 + alpha2 < 0.0) {
                return Err(invalid("alpha1", "ex1 needs alpha1 + alpha2 < 0"));
            }
            let e = Exponent::integer;
            let rhs = HomogeneousRhs::polynomial(
                1,
                e(3),
                h,
                vec![
                    PolyTerm { target: 0, coeff: alpha1, x_exponents: vec![e(3)], y_exponents: vec![e(0)] },
                    PolyTerm { target: 0, coeff: alpha2, x_exponents: vec![e(0)], y_exponents: vec![e(3)] },
                ],
            )?;
            let lyap = LyapunovData::polynomial(
                1,
                vec![Monomial { coeff: 1.0, exponents: vec![e(2)] }],
                LyapunovConstants { gamma: 2.0, k0: 1.0, k1: 1.0, k2: 2.0, k3: 2.0, w: -2.0 * (alpha1 + alpha2) },
            )?;
            let growth = GrowthConstants {
                m: alpha1.abs().max(alpha2.abs()),
                m1: 3.0 * alpha1.abs(),
                m2: 3.0 * alpha2.abs(),
            };
            DelaySystem::new(rhs, lyap, growth)
        }
        ExampleSpec::Ex2 { mu, zeta, h } => {
            let m = mu.value();
            if !(m > 2.0 && mu.is_odd_rational()) {
                return Err(invalid("mu", "ex2 needs mu > 2 with odd numerator and denominator"));
            }
            let zmax = (1.0 / (m + 1.0)).min(4.0 / ((m + 1.0) * (m + 1.0)));
            if !(zeta > 0.0 && zeta < zmax) {
                return Err(invalid("zeta", format!("ex2 needs 0 < zeta < {zmax}")));
            }
            let z = Exponent::ZERO;
            let one = Exponent::integer(1);
            let rhs = HomogeneousRhs::polynomial(
                2,
                mu,
                h,
                vec![
                    PolyTerm { target: 0, coeff: 1.0, x_exponents: vec![z, mu], y_exponents: vec![z, z] },
                    PolyTerm { target: 1, coeff: -1.0, x_exponents: vec![mu, z], y_exponents: vec![z, z] },
                    PolyTerm { target: 1, coeff: -1.0, x_exponents: vec![z, z], y_exponents: vec![z, mu] },
                ],
            )?;
            let up = mu.plus_one();
            let constants = LyapunovConstants {
                gamma: m + 1.0,
                k0: 0.5f64.powf((m - 1.0) / 2.0) * (1.0 / (m + 1.0) - zeta),
                k1: 1.0 / (m + 1.0) + zeta,
                k2: ((1.0 + zeta * m).powi(2) + (1.0 + zeta).powi(2)).sqrt(),
                k3: m * (1.0 + zeta * m),
                w: eta(m, zeta) / 2f64.powf(m - 1.0),
            };
            let lyap = LyapunovData::polynomial(
                2,
                vec![
                    Monomial { coeff: 1.0 / (m + 1.0), exponents: vec![up, z] },
                    Monomial { coeff: 1.0 / (m + 1.0), exponents: vec![z, up] },
                    Monomial { coeff: zeta, exponents: vec![mu, one] },
                ],
                constants,
            )?;
            let growth = GrowthConstants { m: 2f64.sqrt(), m1: m, m2: m };
            DelaySystem::new(rhs, lyap, growth)
        }
    }
}
