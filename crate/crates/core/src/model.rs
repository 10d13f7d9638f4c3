//! Homogeneous delay systems `x'(t) = f(x(t), x(t-h))`, the Lyapunov
//! function of their delay-free counterpart, and the growth constants both
//! certificate families are built from.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::power::{signed_pow, Exponent};
use crate::sampling::{euclidean, unit_sphere_points, Halton};

/// Default number of quasi-random samples for constant estimation.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Inflation applied to sampled maxima, which underestimate true maxima.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.05;
/// Violations at or below this level count as passing.
pub const VALIDATION_TOLERANCE: f64 = 1e-9;

/// One monomial `coeff * prod x_j^{a_j} * prod y_j^{b_j}` feeding component `target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub target: usize,
    pub coeff: f64,
    pub x_exponents: Vec<Exponent>,
    pub y_exponents: Vec<Exponent>,
}

impl PolyTerm {
    pub fn total_degree(&self) -> Exponent {
        self.x_exponents
            .iter()
            .chain(&self.y_exponents)
            .fold(Exponent::ZERO, |acc, e| acc + *e)
    }
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    target: usize,
    coeff: f64,
    // index into the concatenation [x; y]
    factors: Vec<(usize, Exponent)>,
}

impl CompiledTerm {
    fn new(term: &PolyTerm) -> Self {
        let factors = term
            .x_exponents
            .iter()
            .chain(&term.y_exponents)
            .copied()
            .enumerate()
            .filter(|(_, e)| !e.is_zero())
            .collect();
        CompiledTerm {
            target: term.target,
            coeff: term.coeff,
            factors,
        }
    }

    #[inline]
    fn var(dim: usize, x: &[f64], y: &[f64], k: usize) -> f64 {
        if k < dim {
            x[k]
        } else {
            y[k - dim]
        }
    }

    #[inline]
    fn value(&self, dim: usize, x: &[f64], y: &[f64]) -> f64 {
        let mut v = self.coeff;
        for &(k, e) in &self.factors {
            v *= signed_pow(Self::var(dim, x, y, k), e);
        }
        v
    }

    fn derivative(&self, dim: usize, x: &[f64], y: &[f64], wrt: usize) -> f64 {
        let mut v = self.coeff;
        for &(k, e) in &self.factors {
            let base = Self::var(dim, x, y, k);
            if k == wrt {
                v *= e.value() * signed_pow(base, e.minus_one());
            } else {
                v *= signed_pow(base, e);
            }
        }
        v
    }
}

pub type FieldFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Field {
    Polynomial {
        terms: Vec<PolyTerm>,
        compiled: Vec<CompiledTerm>,
    },
    Closure {
        f: FieldFn,
        jac_x: Option<JacobianFn>,
        jac_y: Option<JacobianFn>,
    },
}

/// Right-hand side `f(x, y)` homogeneous of degree `mu > 1`, with delay `h`.
#[derive(Clone)]
pub struct HomogeneousRhs {
    dim: usize,
    degree: Exponent,
    delay: f64,
    field: Field,
    finite_differences: bool,
}

impl fmt::Debug for HomogeneousRhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomogeneousRhs")
            .field("dim", &self.dim)
            .field("degree", &self.degree)
            .field("delay", &self.delay)
            .field("polynomial", &self.terms().is_some())
            .finish()
    }
}

/// Jacobians of `f` with respect to the current and the delayed state.
#[derive(Clone, Debug)]
pub struct Partials {
    pub dx: DMatrix<f64>,
    pub dy: DMatrix<f64>,
    /// Set when the matrices come from central differences.
    pub finite_difference: bool,
}

fn check_common(dim: usize, degree: Exponent, delay: f64) -> Result<()> {
    if dim == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    if degree.value() <= 1.0 {
        return Err(invalid("mu", format!("degree {degree} must exceed 1")));
    }
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(invalid("h", format!("delay {delay} must be finite and nonnegative")));
    }
    Ok(())
}

impl HomogeneousRhs {
    /// Declarative polynomial right-hand side. Every term must have total
    /// degree exactly `degree`.
    pub fn polynomial(
        dim: usize,
        degree: Exponent,
        delay: f64,
        terms: Vec<PolyTerm>,
    ) -> Result<Self> {
        check_common(dim, degree, delay)?;
        for (i, t) in terms.iter().enumerate() {
            if t.target >= dim {
                return Err(invalid("terms", format!("term {i} targets component {}", t.target)));
            }
            if t.x_exponents.len() != dim || t.y_exponents.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.x_exponents.len().max(t.y_exponents.len()),
                });
            }
            if t.total_degree() != degree {
                return Err(invalid(
                    "terms",
                    format!("term {i} has degree {}, expected {degree}", t.total_degree()),
                ));
            }
        }
        let compiled = terms.iter().map(CompiledTerm::new).collect();
        Ok(HomogeneousRhs {
            dim,
            degree,
            delay,
            field: Field::Polynomial { terms, compiled },
            finite_differences: true,
        })
    }

    /// Right-hand side given by an evaluator writing `f(x, y)` into its
    /// third argument. Homogeneity is the caller's promise; check it with
    /// [`HomogeneousRhs::homogeneity_defect`].
    pub fn from_fn<F>(dim: usize, degree: Exponent, delay: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        check_common(dim, degree, delay)?;
        Ok(HomogeneousRhs {
            dim,
            degree,
            delay,
            field: Field::Closure {
                f: Arc::new(f),
                jac_x: None,
                jac_y: None,
            },
            finite_differences: true,
        })
    }

    /// Attaches analytic Jacobians to a closure-backed right-hand side.
    pub fn with_partials<JX, JY>(mut self, jx: JX, jy: JY) -> Self
    where
        JX: Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        JY: Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if let Field::Closure { jac_x, jac_y, .. } = &mut self.field {
            *jac_x = Some(Arc::new(jx));
            *jac_y = Some(Arc::new(jy));
        }
        self
    }

    pub fn with_finite_differences(mut self, enabled: bool) -> Self {
        self.finite_differences = enabled;
        self
    }

    pub fn with_delay(mut self, delay: f64) -> Result<Self> {
        check_common(self.dim, self.degree, delay)?;
        self.delay = delay;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> Exponent {
        self.degree
    }

    /// Homogeneity degree as a float.
    pub fn mu(&self) -> f64 {
        self.degree.value()
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn terms(&self) -> Option<&[PolyTerm]> {
        match &self.field {
            Field::Polynomial { terms, .. } => Some(terms),
            Field::Closure { .. } => None,
        }
    }

    pub fn has_analytic_partials(&self) -> bool {
        match &self.field {
            Field::Polynomial { .. } => true,
            Field::Closure { jac_x, jac_y, .. } => jac_x.is_some() && jac_y.is_some(),
        }
    }

    /// Writes `f(x, y)` into `out`. No dimension checks; hot path of the
    /// integrator.
    #[inline]
    pub fn eval_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.field {
            Field::Polynomial { compiled, .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for term in compiled {
                    out[term.target] += term.value(self.dim, x, y);
                }
            }
            Field::Closure { f, .. } => f(x, y, out),
        }
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        for v in [x, y] {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, y)?;
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, y, &mut out);
        Ok(out)
    }

    /// `||f(cx, cy) - c^mu f(x, y)||`.
    pub fn homogeneity_defect(&self, c: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        if !(c > 0.0) {
            return Err(invalid("c", "scale must be positive"));
        }
        let base = self.eval(x, y)?;
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
        let scaled = self.eval(&cx, &cy)?;
        let cmu = c.powf(self.mu());
        let diff: Vec<f64> = scaled.iter().zip(&base).map(|(s, b)| s - cmu * b).collect();
        Ok(euclidean(&diff))
    }

    pub fn partials(&self, x: &[f64], y: &[f64]) -> Result<Partials> {
        self.check_dims(x, y)?;
        let n = self.dim;
        match &self.field {
            Field::Polynomial { compiled, .. } => {
                let mut dx = DMatrix::zeros(n, n);
                let mut dy = DMatrix::zeros(n, n);
                for term in compiled {
                    for &(k, _) in &term.factors {
                        let d = term.derivative(n, x, y, k);
                        if k < n {
                            dx[(term.target, k)] += d;
                        } else {
                            dy[(term.target, k - n)] += d;
                        }
                    }
                }
                Ok(Partials {
                    dx,
                    dy,
                    finite_difference: false,
                })
            }
            Field::Closure {
                jac_x: Some(jx),
                jac_y: Some(jy),
                ..
            } => Ok(Partials {
                dx: jx(x, y),
                dy: jy(x, y),
                finite_difference: false,
            }),
            Field::Closure { .. } if self.finite_differences => Ok(self.central_differences(x, y)),
            Field::Closure { .. } => Err(Error::PartialsUnavailable),
        }
    }

    fn central_differences(&self, x: &[f64], y: &[f64]) -> Partials {
        let n = self.dim;
        let scale = (x.iter().chain(y).map(|v| v * v).sum::<f64>()).sqrt();
        let step = 1e-6 * (1.0 + scale);
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        let mut column = |which_y: bool, k: usize| -> Vec<f64> {
            let mut xp = x.to_vec();
            let mut yp = y.to_vec();
            let target = if which_y { &mut yp } else { &mut xp };
            target[k] += step;
            self.eval_into(&xp, &yp, &mut plus);
            let target = if which_y { &mut yp } else { &mut xp };
            target[k] -= 2.0 * step;
            self.eval_into(&xp, &yp, &mut minus);
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * step))
                .collect()
        };
        let mut dx = DMatrix::zeros(n, n);
        let mut dy = DMatrix::zeros(n, n);
        for k in 0..n {
            let cx = column(false, k);
            let cy = column(true, k);
            for i in 0..n {
                dx[(i, k)] = cx[i];
                dy[(i, k)] = cy[i];
            }
        }
        Partials {
            dx,
            dy,
            finite_difference: true,
        }
    }

    /// `(alpha1, alpha2)` when the system is the scalar equation
    /// `x' = alpha1 x^mu + alpha2 y^mu`.
    pub fn scalar_coefficients(&self) -> Option<(f64, f64)> {
        if self.dim != 1 {
            return None;
        }
        let terms = self.terms()?;
        let (mut a1, mut a2) = (0.0, 0.0);
        for t in terms {
            match (t.x_exponents[0].is_zero(), t.y_exponents[0].is_zero()) {
                (false, true) => a1 += t.coeff,
                (true, false) => a2 += t.coeff,
                _ => return None,
            }
        }
        Some((a1, a2))
    }
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a: f64, &b| a.max(b))
}

/// Multipliers `m`, `m1`, `m2` of the growth bounds
/// `||f|| <= m (|x|^mu + |y|^mu)` and
/// `||df/dx||, ||df/dy|| <= m1, m2 (|x|^(mu-1) + |y|^(mu-1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub m: f64,
    pub m1: f64,
    pub m2: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct GrowthSampling {
    pub samples: usize,
    pub safety_factor: f64,
    /// Offset into the quasi-random sequence; different offsets give
    /// disjoint sample sets.
    pub skip: u64,
}

impl Default for GrowthSampling {
    fn default() -> Self {
        GrowthSampling {
            samples: DEFAULT_SAMPLES,
            safety_factor: DEFAULT_SAFETY_FACTOR,
            skip: 0,
        }
    }
}

/// Sampled maxima of the three growth ratios over `|x|^mu + |y|^mu = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthMaxima {
    pub f: f64,
    pub dfdx: f64,
    pub dfdy: f64,
}

fn constraint_points(rhs: &HomogeneousRhs, samples: usize, skip: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = rhs.dim();
    let mu = rhs.mu();
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(samples + 8 * n);
    // signed axis points and diagonal pairings
    for i in 0..n {
        for sx in [1.0, -1.0] {
            for sy in [0.0, 1.0, -1.0] {
                let mut p = vec![0.0; 2 * n];
                p[i] = sx;
                p[n + i] = sy;
                raw.push(p);
            }
            let mut p = vec![0.0; 2 * n];
            p[n + i] = sx;
            raw.push(p);
        }
    }
    let mut seq = Halton::new(2 * n, skip);
    let mut u = vec![0.0; 2 * n];
    while raw.len() < samples + 8 * n {
        seq.next_point(&mut u);
        raw.push(u.iter().map(|v| 2.0 * v - 1.0).collect());
    }
    raw.into_iter()
        .filter_map(|p| {
            let (x, y) = p.split_at(n);
            let s = (euclidean(x).powf(mu) + euclidean(y).powf(mu)).powf(1.0 / mu);
            if s < 1e-9 {
                return None;
            }
            Some((x.iter().map(|v| v / s).collect(), y.iter().map(|v| v / s).collect()))
        })
        .collect()
}

/// Maxima of the growth ratios on the compact set `|x|^mu + |y|^mu = 1`.
pub fn sample_growth_maxima(rhs: &HomogeneousRhs, samples: usize, skip: u64) -> Result<GrowthMaxima> {
    if !rhs.has_analytic_partials() && !rhs.finite_differences {
        return Err(Error::PartialsUnavailable);
    }
    let mu = rhs.mu();
    let mut out = vec![0.0; rhs.dim()];
    let mut best = GrowthMaxima {
        f: 0.0,
        dfdx: 0.0,
        dfdy: 0.0,
    };
    for (x, y) in constraint_points(rhs, samples, skip) {
        rhs.eval_into(&x, &y, &mut out);
        best.f = best.f.max(euclidean(&out));
        let denom = euclidean(&x).powf(mu - 1.0) + euclidean(&y).powf(mu - 1.0);
        let p = rhs.partials(&x, &y)?;
        best.dfdx = best.dfdx.max(spectral_norm(&p.dx) / denom);
        best.dfdy = best.dfdy.max(spectral_norm(&p.dy) / denom);
    }
    Ok(best)
}

/// Estimates `m`, `m1`, `m2` by sampling with the default 1.05 inflation.
pub fn estimate_growth_constants(rhs: &HomogeneousRhs, sample_count: usize) -> Result<GrowthConstants> {
    estimate_growth_constants_with(
        rhs,
        &GrowthSampling {
            samples: sample_count,
            ..GrowthSampling::default()
        },
    )
}

pub fn estimate_growth_constants_with(
    rhs: &HomogeneousRhs,
    sampling: &GrowthSampling,
) -> Result<GrowthConstants> {
    if sampling.samples < 1000 {
        return Err(invalid("sample_count", "at least 1000 samples are required"));
    }
    if !(sampling.safety_factor >= 1.0) {
        return Err(invalid("safety_factor", "must be at least 1"));
    }
    let max = sample_growth_maxima(rhs, sampling.samples, sampling.skip)?;
    let s = sampling.safety_factor;
    // a vanishing partial still needs a positive multiplier
    let floor = f64::MIN_POSITIVE.sqrt();
    Ok(GrowthConstants {
        m: (s * max.f).max(floor),
        m1: (s * max.dfdx).max(floor),
        m2: (s * max.dfdy).max(floor),
    })
}

impl GrowthConstants {
    /// Ratios sampled-maximum / claimed-constant; every ratio <= 1 means the
    /// claimed constants certify the sample set.
    pub fn check(&self, rhs: &HomogeneousRhs, samples: usize, skip: u64) -> Result<GrowthMaxima> {
        let max = sample_growth_maxima(rhs, samples, skip)?;
        Ok(GrowthMaxima {
            f: max.f / self.m,
            dfdx: max.dfdx / self.m1,
            dfdy: max.dfdy / self.m2,
        })
    }
}

/// Constants of the delay-free Lyapunov function `V`, homogeneous of
/// degree `gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConstants {
    pub gamma: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub w: f64,
}

impl LyapunovConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 2.0) {
            return Err(invalid("gamma", format!("{} must be at least 2", self.gamma)));
        }
        for (name, v) in [
            ("k0", self.k0),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("w", self.w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        if self.k0 > self.k1 {
            return Err(invalid("k0", "k0 must not exceed k1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<Exponent>,
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum LyapunovFn {
    Polynomial(Vec<Monomial>),
    Closure {
        value: ScalarFn,
        gradient: GradientFn,
        hessian: HessianFn,
    },
}

#[derive(Clone)]
pub struct LyapunovData {
    dim: usize,
    func: LyapunovFn,
    pub constants: LyapunovConstants,
}

impl fmt::Debug for LyapunovData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovData")
            .field("dim", &self.dim)
            .field("constants", &self.constants)
            .finish()
    }
}

impl LyapunovData {
    pub fn polynomial(dim: usize, terms: Vec<Monomial>, constants: LyapunovConstants) -> Result<Self> {
        constants.validate()?;
        for (i, t) in terms.iter().enumerate() {
            if t.exponents.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.exponents.len(),
                });
            }
            let deg: f64 = t.exponents.iter().map(Exponent::value).sum();
            if (deg - constants.gamma).abs() > 1e-12 * constants.gamma {
                return Err(invalid(
                    "lyapunov.terms",
                    format!("term {i} has degree {deg}, expected gamma = {}", constants.gamma),
                ));
            }
        }
        Ok(LyapunovData {
            dim,
            func: LyapunovFn::Polynomial(terms),
            constants,
        })
    }

    pub fn from_fns<V, G, H>(dim: usize, value: V, gradient: G, hessian: H, constants: LyapunovConstants) -> Result<Self>
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        H: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        constants.validate()?;
        Ok(LyapunovData {
            dim,
            func: LyapunovFn::Closure {
                value: Arc::new(value),
                gradient: Arc::new(gradient),
                hessian: Arc::new(hessian),
            },
            constants,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.constants.gamma
    }

    pub fn with_constants(mut self, constants: LyapunovConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.func {
            LyapunovFn::Polynomial(terms) => terms
                .iter()
                .map(|t| {
                    t.exponents
                        .iter()
                        .zip(x)
                        .fold(t.coeff, |acc, (e, v)| acc * signed_pow(*v, *e))
                })
                .sum(),
            LyapunovFn::Closure { value, .. } => value(x),
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.func {
            LyapunovFn::Polynomial(terms) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for t in terms {
                    for k in 0..self.dim {
                        let ek = t.exponents[k];
                        if ek.is_zero() {
                            continue;
                        }
                        let mut d = t.coeff * ek.value();
                        for (j, (e, v)) in t.exponents.iter().zip(x).enumerate() {
                            d *= if j == k {
                                signed_pow(*v, e.minus_one())
                            } else {
                                signed_pow(*v, *e)
                            };
                        }
                        out[k] += d;
                    }
                }
            }
            LyapunovFn::Closure { gradient, .. } => gradient(x, out),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.func {
            LyapunovFn::Polynomial(terms) => {
                let n = self.dim;
                let mut h = DMatrix::zeros(n, n);
                for t in terms {
                    for a in 0..n {
                        for b in 0..n {
                            let (ea, eb) = (t.exponents[a], t.exponents[b]);
                            if ea.is_zero() || eb.is_zero() {
                                continue;
                            }
                            let mut d = t.coeff;
                            if a == b {
                                d *= ea.value() * ea.minus_one().value();
                                if d == 0.0 {
                                    continue;
                                }
                            } else {
                                d *= ea.value() * eb.value();
                            }
                            for (j, (e, v)) in t.exponents.iter().zip(x).enumerate() {
                                let reduced = if a == b && j == a {
                                    e.minus_one().minus_one()
                                } else if j == a || j == b {
                                    e.minus_one()
                                } else {
                                    *e
                                };
                                d *= signed_pow(*v, reduced);
                            }
                            h[(a, b)] += d;
                        }
                    }
                }
                h
            }
            LyapunovFn::Closure { hessian, .. } => hessian(x),
        }
    }
}

/// Largest violation of each Lyapunov inequality over unit-shell samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub samples: usize,
    /// `max(k0 - V(x))`
    pub lower: f64,
    /// `max(V(x) - k1)`
    pub upper: f64,
    /// `max(grad V(x)^T f(x,x) + w)`
    pub decay: f64,
    /// `max(||grad V(x)|| - k2)`
    pub gradient: f64,
    /// `max(||hess V(x)|| - k3)`
    pub hessian: f64,
}

impl LyapunovReport {
    pub fn worst(&self) -> f64 {
        [self.lower, self.upper, self.decay, self.gradient, self.hessian]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.worst() <= VALIDATION_TOLERANCE
    }
}

/// Checks the five Lyapunov inequalities on `|x| = 1`; by homogeneity the
/// shell determines them everywhere. Violations are clamped at zero.
pub fn validate_lyapunov(
    lyap: &LyapunovData,
    rhs: &HomogeneousRhs,
    sample_count: usize,
) -> Result<LyapunovReport> {
    if lyap.dim() != rhs.dim() {
        return Err(Error::DimensionMismatch {
            expected: rhs.dim(),
            got: lyap.dim(),
        });
    }
    let c = lyap.constants;
    let points = unit_sphere_points(rhs.dim(), sample_count, 0);
    let mut report = LyapunovReport {
        samples: points.len(),
        lower: 0.0,
        upper: 0.0,
        decay: 0.0,
        gradient: 0.0,
        hessian: 0.0,
    };
    let mut f = vec![0.0; rhs.dim()];
    let mut g = vec![0.0; rhs.dim()];
    for x in &points {
        let v = lyap.value(x);
        lyap.gradient_into(x, &mut g);
        rhs.eval_into(x, x, &mut f);
        let dv: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
        report.lower = report.lower.max(c.k0 - v);
        report.upper = report.upper.max(v - c.k1);
        report.decay = report.decay.max(dv + c.w);
        report.gradient = report.gradient.max(euclidean(&g) - c.k2);
        report.hessian = report.hessian.max(spectral_norm(&lyap.hessian(x)) - c.k3);
    }
    Ok(report)
}

/// A system together with its Lyapunov data and growth constants; the
/// common input of both certificate families.
#[derive(Clone, Debug)]
pub struct DelaySystem {
    pub rhs: HomogeneousRhs,
    pub lyapunov: LyapunovData,
    pub growth: GrowthConstants,
}

impl DelaySystem {
    pub fn new(rhs: HomogeneousRhs, lyapunov: LyapunovData, growth: GrowthConstants) -> Result<Self> {
        if lyapunov.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch {
                expected: rhs.dim(),
                got: lyapunov.dim(),
            });
        }
        for (name, v) in [("m", growth.m), ("m1", growth.m1), ("m2", growth.m2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        Ok(DelaySystem {
            rhs,
            lyapunov,
            growth,
        })
    }

    pub fn mu(&self) -> f64 {
        self.rhs.mu()
    }

    pub fn delay(&self) -> f64 {
        self.rhs.delay()
    }

    pub fn with_delay(mut self, delay: f64) -> Result<Self> {
        self.rhs = self.rhs.with_delay(delay)?;
        Ok(self)
    }
}

/// Declarative system document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n: usize,
    pub mu: Exponent,
    pub h: f64,
    pub terms: Vec<PolyTerm>,
    pub lyapunov: LyapunovSpec,
    /// Analytic override of the growth constants; sampled when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthConstants>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    pub gamma: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub w: f64,
    pub terms: Vec<Monomial>,
}

impl SystemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<DelaySystem> {
        let rhs = HomogeneousRhs::polynomial(self.n, self.mu, self.h, self.terms.clone())?;
        let l = &self.lyapunov;
        let lyap = LyapunovData::polynomial(
            self.n,
            l.terms.clone(),
            LyapunovConstants {
                gamma: l.gamma,
                k0: l.k0,
                k1: l.k1,
                k2: l.k2,
                k3: l.k3,
                w: l.w,
            },
        )?;
        let growth = match self.growth {
            Some(g) => g,
            None => estimate_growth_constants(&rhs, DEFAULT_SAMPLES)?,
        };
        DelaySystem::new(rhs, lyap, growth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: i64) -> Exponent {
        Exponent::integer(i)
    }

    fn example1() -> HomogeneousRhs {
        HomogeneousRhs::polynomial(
            1,
            e(3),
            10.0,
            vec![
                PolyTerm {
                    target: 0,
                    coeff: -1.0,
                    x_exponents: vec![e(3)],
                    y_exponents: vec![e(0)],
                },
                PolyTerm {
                    target: 0,
                    coeff: 0.5,
                    x_exponents: vec![e(0)],
                    y_exponents: vec![e(3)],
                },
            ],
        )
        .unwrap()
    }

    fn example2() -> HomogeneousRhs {
        let t = |target, x: [i64; 2], y: [i64; 2], coeff| PolyTerm {
            target,
            coeff,
            x_exponents: x.iter().map(|&v| e(v)).collect(),
            y_exponents: y.iter().map(|&v| e(v)).collect(),
        };
        HomogeneousRhs::polynomial(
            2,
            e(3),
            1.0,
            vec![
                t(0, [0, 3], [0, 0], 1.0),
                t(1, [3, 0], [0, 0], -1.0),
                t(1, [0, 0], [0, 3], -1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(example1().eval(&[1.0], &[1.0]).unwrap(), vec![-0.5]);
        assert_eq!(example1().eval(&[0.0], &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(
            example2().eval(&[1.0, 1.0], &[0.0, 1.0]).unwrap(),
            vec![1.0, -2.0]
        );
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        let err = example2().eval(&[1.0], &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn polynomial_rejects_wrong_degree() {
        let bad = HomogeneousRhs::polynomial(
            1,
            e(3),
            1.0,
            vec![PolyTerm {
                target: 0,
                coeff: 1.0,
                x_exponents: vec![e(2)],
                y_exponents: vec![e(0)],
            }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn homogeneity_defects_vanish() {
        assert_eq!(example1().homogeneity_defect(2.0, &[1.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(
            example2()
                .homogeneity_defect(0.5, &[1.0, 0.0], &[0.0, 1.0])
                .unwrap(),
            0.0
        );
        assert_eq!(example2().homogeneity_defect(1.0, &[0.3, -2.0], &[1.1, 0.4]).unwrap(), 0.0);
        assert!(example1().homogeneity_defect(0.0, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn analytic_partials_of_example1() {
        let p = example1().partials(&[2.0], &[-1.0]).unwrap();
        assert_eq!(p.dx[(0, 0)], -12.0);
        assert_eq!(p.dy[(0, 0)], 1.5);
        assert!(!p.finite_difference);
    }

    #[test]
    fn closure_partials_fall_back_to_finite_differences() {
        let rhs = HomogeneousRhs::from_fn(1, e(3), 1.0, |x, y, out| {
            out[0] = -x[0].powi(3) + 0.5 * y[0].powi(3)
        })
        .unwrap();
        let p = rhs.partials(&[1.0], &[2.0]).unwrap();
        assert!(p.finite_difference);
        assert!((p.dx[(0, 0)] + 3.0).abs() < 1e-6);
        assert!((p.dy[(0, 0)] - 6.0).abs() < 1e-6);

        let strict = rhs.with_finite_differences(false);
        assert!(matches!(strict.partials(&[1.0], &[2.0]), Err(Error::PartialsUnavailable)));
        assert!(matches!(
            estimate_growth_constants(&strict, 1000),
            Err(Error::PartialsUnavailable)
        ));
    }

    #[test]
    fn scalar_coefficients_detected() {
        assert_eq!(example1().scalar_coefficients(), Some((-1.0, 0.5)));
        assert_eq!(example2().scalar_coefficients(), None);
    }

    #[test]
    fn growth_sampling_requires_enough_points() {
        assert!(estimate_growth_constants(&example1(), 999).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{
            "n": 1, "mu": 3, "h": 10,
            "terms": [
                {"target": 0, "coeff": -1, "x_exponents": [3], "y_exponents": [0]},
                {"target": 0, "coeff": 0.5, "x_exponents": [0], "y_exponents": [3]}
            ],
            "lyapunov": {"gamma": 2, "k0": 1, "k1": 1, "k2": 2, "k3": 2, "w": 1,
                         "terms": [{"coeff": 1, "exponents": [2]}]},
            "growth": {"m": 1, "m1": 3, "m2": 1.5}
        }"#;
        let spec = SystemSpec::from_json(text).unwrap();
        let sys = spec.build().unwrap();
        assert_eq!(sys.growth.m1, 3.0);
        assert_eq!(sys.rhs.eval(&[1.0], &[1.0]).unwrap(), vec![-0.5]);
        let again: SystemSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn polynomial_hessian_matches_hand_computation() {
        // V = x1^4/4 + x2^4/4 + 0.1 x1^3 x2
        let lyap = LyapunovData::polynomial(
            2,
            vec![
                Monomial { coeff: 0.25, exponents: vec![e(4), e(0)] },
                Monomial { coeff: 0.25, exponents: vec![e(0), e(4)] },
                Monomial { coeff: 0.1, exponents: vec![e(3), e(1)] },
            ],
            LyapunovConstants { gamma: 4.0, k0: 0.075, k1: 0.35, k2: 1.7, k3: 3.9, w: 0.0136 },
        )
        .unwrap();
        let x = [0.6, -0.8];
        let h = lyap.hessian(&x);
        assert!((h[(0, 0)] - (3.0 * 0.36 + 0.6 * 0.6 * -0.8)).abs() < 1e-14);
        assert!((h[(0, 1)] - 0.3 * 0.36).abs() < 1e-14);
        assert!((h[(1, 1)] - 3.0 * 0.64).abs() < 1e-14);
        let g = lyap.gradient(&x);
        assert!((g[0] - (0.216 + 0.3 * 0.36 * -0.8)).abs() < 1e-14);
        assert!((g[1] - (-0.512 + 0.1 * 0.216)).abs() < 1e-14);
    }
}
