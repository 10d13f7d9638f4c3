//! Box-constrained search over the free certificate parameters: a coarse
//! grid scan followed by Nelder-Mead refinement and seeded restarts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::krasovskii::{
    general_constants, scalar_path_applies, KrasovskiiCertificate, KrasovskiiParams, KrasovskiiPath,
    WeightSplit,
};
use crate::model::DelaySystem;
use crate::razumikhin::{compute_k4_h, RazumikhinCertificate, RazumikhinParams};

pub const DEFAULT_BUDGET: usize = 10_000;
const GRID_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningTarget {
    MaximizeDelta,
    MinimizeC1,
    MaximizeC2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningMethod {
    Razumikhin,
    KrasovskiiGeneral,
    KrasovskiiScalar,
}

impl TuningMethod {
    /// Free parameter names; `delta_fraction` scales the admissible cap
    /// on `delta` for the remaining parameters.
    pub fn parameters(&self) -> &'static [&'static str] {
        match self {
            TuningMethod::Razumikhin => &["alpha", "delta_fraction"],
            _ => &["chi", "w1", "w2", "delta_fraction"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningProblem {
    pub target: TuningTarget,
    pub method: TuningMethod,
    /// `[lo, hi]` per parameter; missing parameters get default bounds.
    #[serde(default)]
    pub bounds: BTreeMap<String, [f64; 2]>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

impl TuningProblem {
    pub fn new(target: TuningTarget, method: TuningMethod) -> Self {
        TuningProblem { target, method, bounds: BTreeMap::new(), budget: DEFAULT_BUDGET, seed: 0 }
    }
}

/// One parameter vector; `delta` wins over `delta_fraction`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub chi: Option<f64>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub delta_fraction: Option<f64>,
}

impl Candidate {
    fn from_values(names: &[&str], values: &[f64]) -> Self {
        let mut c = Candidate::default();
        for (name, v) in names.iter().zip(values) {
            let slot = match *name {
                "chi" => &mut c.chi,
                "w1" => &mut c.w1,
                "w2" => &mut c.w2,
                "alpha" => &mut c.alpha,
                "delta" => &mut c.delta,
                _ => &mut c.delta_fraction,
            };
            *slot = Some(*v);
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum TunedCertificate {
    Razumikhin(RazumikhinCertificate),
    Krasovskii(KrasovskiiCertificate),
}

impl TunedCertificate {
    pub fn big_delta(&self) -> f64 {
        match self {
            TunedCertificate::Razumikhin(c) => c.big_delta,
            TunedCertificate::Krasovskii(c) => c.big_delta,
        }
    }
}

fn score(target: TuningTarget, cert: &TunedCertificate) -> f64 {
    let (delta, c1, c2) = match cert {
        TunedCertificate::Razumikhin(c) => (c.big_delta, c.c1, c.c2),
        TunedCertificate::Krasovskii(c) => (c.big_delta, c.c1_hat, c.c2_hat),
    };
    match target {
        TuningTarget::MaximizeDelta => delta,
        TuningTarget::MinimizeC1 => -c1,
        TuningTarget::MaximizeC2 => c2,
    }
}

fn krasovskii_cap(system: &DelaySystem, path: KrasovskiiPath, chi: f64, w: &WeightSplit) -> Option<f64> {
    let (h, mu) = (system.delay(), system.mu());
    let k = match path {
        KrasovskiiPath::General => {
            general_constants(&system.lyapunov.constants, &system.growth, h, mu, chi, 0.0, w)
        }
        KrasovskiiPath::Scalar => {
            let (a1, a2) = scalar_path_applies(&system.rhs, &system.lyapunov)?;
            crate::krasovskii::scalar_constants(a1, a2, h, mu, chi, 0.0, w)
        }
    };
    Some(k.h1.min(k.h2))
}

/// Builds the certificate for `candidate`; `None` when any feasibility
/// condition fails.
pub fn evaluate_candidate(
    system: &DelaySystem,
    problem: &TuningProblem,
    candidate: &Candidate,
) -> Option<(f64, TunedCertificate)> {
    let cert = match problem.method {
        TuningMethod::Razumikhin => {
            let alpha = candidate.alpha.unwrap_or(crate::razumikhin::DEFAULT_ALPHA);
            let delta = match (candidate.delta, candidate.delta_fraction) {
                (Some(d), _) => Some(d),
                (None, Some(f)) => {
                    let (_, big_h) = compute_k4_h(
                        &system.lyapunov.constants,
                        &system.growth,
                        system.delay(),
                        system.mu(),
                        alpha,
                    )
                    .ok()?;
                    Some(f * big_h)
                }
                (None, None) => None,
            };
            let params = RazumikhinParams { alpha: Some(alpha), delta, rho: None };
            TunedCertificate::Razumikhin(RazumikhinCertificate::build(system, &params).ok()?)
        }
        TuningMethod::KrasovskiiGeneral | TuningMethod::KrasovskiiScalar => {
            let path = if problem.method == TuningMethod::KrasovskiiScalar {
                KrasovskiiPath::Scalar
            } else {
                KrasovskiiPath::General
            };
            let delta = match (candidate.delta, candidate.delta_fraction, candidate.chi) {
                (Some(d), _, _) => Some(d),
                (None, Some(f), Some(chi)) => {
                    let lc = system.lyapunov.constants;
                    let h = system.delay();
                    let w = WeightSplit::new(
                        lc.w,
                        h,
                        candidate.w1.unwrap_or(0.5 * lc.w),
                        candidate.w2.unwrap_or(0.25 * lc.w / h),
                    )
                    .ok()?;
                    Some(f * krasovskii_cap(system, path, chi, &w)?)
                }
                _ => None,
            };
            let params = KrasovskiiParams {
                chi: candidate.chi,
                w1: candidate.w1,
                w2: candidate.w2,
                delta,
                path: Some(path),
            };
            let cert = KrasovskiiCertificate::build(system, &params).ok()?;
            cert.check().ok()?;
            TunedCertificate::Krasovskii(cert)
        }
    };
    let s = score(problem.target, &cert);
    s.is_finite().then_some((s, cert))
}

/// Default search box for `name`.
pub fn default_bounds(system: &DelaySystem, method: TuningMethod, name: &str) -> Result<[f64; 2]> {
    let lc = system.lyapunov.constants;
    let h = system.delay();
    let w = lc.w;
    Ok(match (method, name) {
        (_, "w1") => [1e-4 * w, w],
        (_, "w2") => [1e-4 * w / h, w / h],
        (_, "alpha") => [1.01, 10.0],
        (TuningMethod::KrasovskiiScalar, "delta_fraction") => [0.5, 1.0 - 1e-6],
        (_, "delta_fraction") => [0.01, 1.0 - 1e-6],
        (TuningMethod::KrasovskiiScalar, "chi") => {
            let (_, a2) = scalar_path_applies(&system.rhs, &system.lyapunov)
                .ok_or_else(|| invalid("method", "the scalar path does not apply to this system"))?;
            [1e-3, (1.0 / (h * a2.abs())).sqrt() * (1.0 - 1e-9)]
        }
        (_, "chi") => [1e-3, (w / (lc.k2 * system.growth.m)).powf(1.0 / (2.0 * (lc.gamma - 1.0)))],
        (_, other) => return Err(invalid("bounds", format!("unknown parameter `{other}`"))),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TuningResult {
    pub params: BTreeMap<String, f64>,
    pub delta: f64,
    pub score: f64,
    pub grid_score: f64,
    pub evaluations: usize,
    pub certificate: TunedCertificate,
}

struct Search<'a> {
    system: &'a DelaySystem,
    problem: &'a TuningProblem,
    names: Vec<&'static str>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    evaluations: usize,
    best: Option<(f64, Vec<f64>)>,
}

impl Search<'_> {
    fn to_box(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (lo, hi))| lo + u.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    fn score_raw(&self, u: &[f64]) -> f64 {
        let x = self.to_box(u);
        evaluate_candidate(self.system, self.problem, &Candidate::from_values(&self.names, &x))
            .map_or(f64::NEG_INFINITY, |(s, _)| s)
    }

    fn record(&mut self, u: &[f64], s: f64) {
        if s.is_finite() && self.best.as_ref().is_none_or(|(b, _)| s > *b) {
            self.best = Some((s, u.to_vec()));
        }
    }

    fn eval(&mut self, u: &[f64]) -> f64 {
        self.evaluations += 1;
        let s = self.score_raw(u);
        self.record(u, s);
        s
    }

    fn exhausted(&self) -> bool {
        self.evaluations >= self.problem.budget
    }

    /// Maximizes the score from `start` in unit coordinates; returns the
    /// best point and score of the final simplex.
    fn nelder_mead(&mut self, start: &[f64], scale: f64) -> (Vec<f64>, f64) {
        let d = start.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
        let f0 = self.eval(start);
        simplex.push((start.to_vec(), f0));
        for k in 0..d {
            if self.exhausted() {
                break;
            }
            let mut p = start.to_vec();
            p[k] = if p[k] + scale <= 1.0 { p[k] + scale } else { p[k] - scale };
            let f = self.eval(&p);
            simplex.push((p, f));
        }
        if simplex.len() < d + 1 {
            return simplex.swap_remove(0);
        }
        let clamp = |v: Vec<f64>| v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect::<Vec<_>>();
        let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect()
        };
        while !self.exhausted() {
            // descending score: best first
            simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
            let spread = (0..d)
                .map(|k| simplex.iter().map(|p| p.0[k]).fold(f64::NEG_INFINITY, f64::max)
                    - simplex.iter().map(|p| p.0[k]).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max);
            if spread < 1e-10 {
                break;
            }
            let mut centroid = vec![0.0; d];
            for (p, _) in &simplex[..d] {
                for k in 0..d {
                    centroid[k] += p[k] / d as f64;
                }
            }
            let worst = simplex[d].clone();
            let reflected = clamp(combine(&centroid, &worst.0, -1.0));
            let fr = self.eval(&reflected);
            if fr > simplex[0].1 {
                let expanded = clamp(combine(&centroid, &worst.0, -2.0));
                let fe = if self.exhausted() { f64::NEG_INFINITY } else { self.eval(&expanded) };
                simplex[d] = if fe > fr { (expanded, fe) } else { (reflected, fr) };
            } else if fr > simplex[d - 1].1 {
                simplex[d] = (reflected, fr);
            } else {
                let contracted = if fr > worst.1 {
                    clamp(combine(&centroid, &reflected, 0.5))
                } else {
                    clamp(combine(&centroid, &worst.0, 0.5))
                };
                if self.exhausted() {
                    break;
                }
                let fc = self.eval(&contracted);
                if fc > worst.1.max(fr) {
                    simplex[d] = (contracted, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for p in simplex.iter_mut().skip(1) {
                        if self.exhausted() {
                            break;
                        }
                        let q = combine(&best, &p.0, 0.5);
                        let f = self.eval(&q);
                        *p = (q, f);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        simplex.swap_remove(0)
    }
}

fn grid_points_per_axis(dims: usize, budget: usize) -> usize {
    let mut p = GRID_POINTS;
    while p > 2 && (p as f64).powi(dims as i32) > budget as f64 / 2.0 {
        p -= 1;
    }
    p
}

pub fn tune(system: &DelaySystem, problem: &TuningProblem) -> Result<TuningResult> {
    if problem.budget == 0 {
        return Err(invalid("budget", "must be at least 1"));
    }
    let names: Vec<&'static str> = problem.method.parameters().to_vec();
    for key in problem.bounds.keys() {
        if !names.contains(&key.as_str()) {
            return Err(invalid("bounds", format!("`{key}` is not tunable for this method")));
        }
    }
    let mut lo = Vec::with_capacity(names.len());
    let mut hi = Vec::with_capacity(names.len());
    for name in &names {
        let [a, b] = match problem.bounds.get(*name) {
            Some(b) => *b,
            None => default_bounds(system, problem.method, name)?,
        };
        if !(a <= b && a.is_finite() && b.is_finite()) {
            return Err(invalid("bounds", format!("`{name}` needs finite lo <= hi")));
        }
        lo.push(a);
        hi.push(b);
    }
    let free: Vec<usize> = (0..names.len()).filter(|&k| hi[k] > lo[k]).collect();
    let mut search = Search { system, problem, names, lo, hi, evaluations: 0, best: None };

    // grid over the free axes; fixed axes sit at their single value
    let p = grid_points_per_axis(free.len(), problem.budget);
    let total = if free.is_empty() { 1 } else { p.pow(free.len() as u32) };
    let total = total.min(problem.budget);
    let dims = search.names.len();
    let points: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            let mut u = vec![0.0; dims];
            for &k in &free {
                u[k] = if p > 1 { (idx % p) as f64 / (p - 1) as f64 } else { 0.5 };
                idx /= p;
            }
            u
        })
        .collect();
    let scores: Vec<f64> = points.par_iter().map(|u| search.score_raw(u)).collect();
    search.evaluations += points.len();
    for (u, s) in points.iter().zip(&scores) {
        search.record(u, *s);
    }
    let (grid_score, grid_best) = search
        .best
        .clone()
        .ok_or(Error::NoFeasibleCandidate(search.evaluations))?;

    if !free.is_empty() {
        let scale = 1.0 / p.max(2) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
        let mut start = grid_best.clone();
        let mut radius = scale;
        let mut stalls = 0;
        while !search.exhausted() {
            let before = search.best.as_ref().map(|b| b.0).unwrap_or(f64::NEG_INFINITY);
            search.nelder_mead(&start, radius);
            let after = search.best.as_ref().map(|b| b.0).unwrap_or(f64::NEG_INFINITY);
            stalls = if after > before * (1.0 + 1e-12) { 0 } else { stalls + 1 };
            if stalls >= 8 {
                break;
            }
            // restart near the incumbent with a shrinking random offset
            let best = search.best.as_ref().map(|b| b.1.clone()).unwrap_or_else(|| grid_best.clone());
            radius = (radius * 0.5).max(1e-6);
            start = best
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    if free.contains(&k) {
                        (v + rng.gen_range(-radius..=radius)).clamp(0.0, 1.0)
                    } else {
                        v
                    }
                })
                .collect();
        }
    }

    let (score, u) = search.best.clone().expect("grid produced a feasible point");
    let x = search.to_box(&u);
    let candidate = Candidate::from_values(&search.names, &x);
    let (_, certificate) =
        evaluate_candidate(system, problem, &candidate).ok_or(Error::NoFeasibleCandidate(search.evaluations))?;
    let mut params: BTreeMap<String, f64> =
        search.names.iter().zip(&x).map(|(n, v)| (n.to_string(), *v)).collect();
    let delta = match &certificate {
        TunedCertificate::Razumikhin(c) => c.delta,
        TunedCertificate::Krasovskii(c) => c.delta,
    };
    params.insert("delta".into(), delta);
    Ok(TuningResult {
        params,
        delta,
        score,
        grid_score,
        evaluations: search.evaluations,
        certificate,
    })
}
