use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{HistorySegment, HistorySpec};
use crate::integrator::{default_step, fmt17, integrate_streaming, steps_per_delay, OutputSchedule};
use crate::krasovskii::{KrasovskiiCertificate, KrasovskiiParams};
use crate::model::DelaySystem;
use crate::razumikhin::{RazumikhinCertificate, RazumikhinParams};
use crate::sampling::euclidean;

use super::{build_example, preset, ExampleSpec};

/// Inputs of a comparison run; both certificates share `delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub delta: f64,
    #[serde(default)]
    pub razumikhin: RazumikhinParams,
    #[serde(default)]
    pub krasovskii: KrasovskiiParams,
    pub history: HistorySpec,
    /// Defaults to `10^4 h`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,
}

fn default_per_decade() -> usize {
    20
}

impl CompareConfig {
    /// The reference setting: the estimate table of the example and its
    /// constant initial function.
    pub fn reference(example: &ExampleSpec) -> Result<Self> {
        let (table, phi) = match example {
            ExampleSpec::Ex1 { .. } => (2, vec![0.009]),
            ExampleSpec::Ex2 { .. } => (3, vec![4.8e-4, 4.8e-4]),
        };
        let p = preset(table)?;
        Ok(CompareConfig {
            delta: p.krasovskii.delta.unwrap_or(0.0),
            razumikhin: p.razumikhin,
            krasovskii: p.krasovskii,
            history: HistorySpec::Constant(phi),
            horizon: None,
            step: None,
            per_decade: default_per_decade(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tighter {
    Razumikhin,
    Krasovskii,
    Tie,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeSample {
    pub t: f64,
    pub norm: f64,
    pub razumikhin: f64,
    pub krasovskii: f64,
}

/// Which envelope is lower at `t`, for `t = 0` and each power of ten.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecadeVerdict {
    pub t: f64,
    pub razumikhin: f64,
    pub krasovskii: f64,
    pub tighter: Tighter,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<ExampleSpec>,
    pub delta: f64,
    pub razumikhin: RazumikhinCertificate,
    pub krasovskii: KrasovskiiCertificate,
    /// `(k5/k1) e (k0/k1)^e (delta/Delta)^(mu-1)`, `e = (mu-1)/gamma`.
    pub b_tilde: f64,
    pub b: f64,
    pub k5_over_k1: f64,
    pub c_over_b: f64,
    pub k0_over_k1: f64,
    pub a1_over_b: f64,
    /// `c1_hat Delta_LK - delta` and `A Delta_LR - delta`.
    pub krasovskii_identity: f64,
    pub razumikhin_identity: f64,
    pub phi_norm: f64,
    /// `|phi|_h < Delta` for each method; an envelope is only certified
    /// inside its own radius.
    pub inside_razumikhin: bool,
    pub inside_krasovskii: bool,
    pub horizon: f64,
    pub step: f64,
    pub nodes_checked: usize,
    /// Largest `|x(t)| / envelope` over every integration node.
    pub worst_ratio_razumikhin: f64,
    pub worst_ratio_krasovskii: f64,
    /// First node time `>= 10 h` where the Razumikhin envelope is not
    /// strictly below the Krasovskii one.
    pub ordering_violation: Option<f64>,
    pub samples: Vec<EnvelopeSample>,
    pub decades: Vec<DecadeVerdict>,
}

impl ComparisonReport {
    pub fn dominated(&self) -> bool {
        self.worst_ratio_razumikhin <= 1.0 && self.worst_ratio_krasovskii <= 1.0
    }

    /// Razumikhin envelope strictly below the Krasovskii one after ten delays.
    pub fn razumikhin_tighter_late(&self) -> bool {
        self.ordering_violation.is_none()
    }
}

fn tighter(lr: f64, lk: f64) -> Tighter {
    if lr < lk {
        Tighter::Razumikhin
    } else if lk < lr {
        Tighter::Krasovskii
    } else {
        Tighter::Tie
    }
}

fn certificates(system: &DelaySystem, cfg: &CompareConfig) -> Result<(RazumikhinCertificate, KrasovskiiCertificate)> {
    let lr = RazumikhinCertificate::build(system, &RazumikhinParams { delta: Some(cfg.delta), ..cfg.razumikhin })?;
    let lk = KrasovskiiCertificate::build(system, &KrasovskiiParams { delta: Some(cfg.delta), ..cfg.krasovskii })?;
    Ok((lr, lk))
}

fn history_for(system: &DelaySystem, spec: &HistorySpec, step: f64) -> Result<HistorySegment> {
    let lag = steps_per_delay(system.delay(), step)?;
    spec.build(system.delay(), lag.max(4))
}

/// Fails only when `norm` lies outside both certified radii.
fn require_inside_either(norm: f64, lr_radius: f64, lk_radius: f64) -> Result<()> {
    let radius = lr_radius.max(lk_radius);
    if norm < radius {
        Ok(())
    } else {
        Err(Error::OutsideRegion { norm, radius })
    }
}

pub fn compare(example: &ExampleSpec, cfg: &CompareConfig) -> Result<ComparisonReport> {
    let system = build_example(example)?;
    let mut report = compare_system(&system, cfg)?;
    report.example = Some(example.clone());
    Ok(report)
}

/// `step` and `horizon` after defaults; the step must divide `h`.
fn run_grid(system: &DelaySystem, cfg: &CompareConfig) -> (f64, f64) {
    let h = system.delay();
    (cfg.step.unwrap_or_else(|| default_step(h)), cfg.horizon.unwrap_or(1e4 * h))
}

pub fn compare_system(system: &DelaySystem, cfg: &CompareConfig) -> Result<ComparisonReport> {
    let (lr, lk) = certificates(system, cfg)?;
    let h = system.delay();
    let (step, horizon) = run_grid(system, cfg);
    let phi = history_for(system, &cfg.history, step)?;
    let phi_norm = phi.sup_norm();
    require_inside_either(phi_norm, lr.big_delta, lk.big_delta)?;

    let (env_lr, env_lk) = (lr.curve(), lk.curve());
    let steps = (horizon / step - 1e-9).ceil().max(0.0) as usize;
    let wanted = OutputSchedule::LogSpaced { per_decade: cfg.per_decade }.indices(steps);
    let mut next = 0;
    let mut samples = Vec::with_capacity(wanted.len());
    let (mut worst_lr, mut worst_lk): (f64, f64) = (0.0, 0.0);
    let mut ordering_violation = None;
    let late = 10.0 * h;
    let summary = integrate_streaming(&system.rhs, &phi, horizon, step, |node| {
        let norm = euclidean(node.x);
        let a = env_lr.bound(phi_norm, node.t);
        let b = env_lk.bound(phi_norm, node.t);
        if norm > 0.0 {
            worst_lr = worst_lr.max(norm / a);
            worst_lk = worst_lk.max(norm / b);
        }
        if ordering_violation.is_none() && node.t >= late && !(a < b) {
            ordering_violation = Some(node.t);
        }
        if next < wanted.len() && wanted[next] == node.index {
            samples.push(EnvelopeSample { t: node.t, norm, razumikhin: a, krasovskii: b });
            next += 1;
        }
    })?;

    let mut decades = vec![0.0];
    let mut t = 10f64.powf(step.log10().floor());
    while t <= horizon * (1.0 + 1e-12) {
        decades.push(t);
        t *= 10.0;
    }
    let decades = decades
        .into_iter()
        .map(|t| {
            let (a, b) = (env_lr.bound(phi_norm, t), env_lk.bound(phi_norm, t));
            DecadeVerdict { t, razumikhin: a, krasovskii: b, tighter: tighter(a, b) }
        })
        .collect();

    let e = (lr.mu - 1.0) / lr.gamma;
    let b_tilde = lr.k5 / lr.k1 * e * (lr.k0 / lr.k1).powf(e) * (lr.delta / lr.big_delta).powf(lr.mu - 1.0);
    Ok(ComparisonReport {
        example: None,
        delta: cfg.delta,
        b_tilde,
        b: lr.b,
        k5_over_k1: lr.k5 / lr.k1,
        c_over_b: lk.constants.c / lk.constants.b,
        k0_over_k1: lr.k0 / lr.k1,
        a1_over_b: lk.constants.a1 / lk.constants.b,
        krasovskii_identity: lk.c1_hat * lk.big_delta - cfg.delta,
        razumikhin_identity: lr.a * lr.big_delta - cfg.delta,
        inside_razumikhin: phi_norm < lr.big_delta,
        inside_krasovskii: phi_norm < lk.big_delta,
        razumikhin: lr,
        krasovskii: lk,
        phi_norm,
        horizon: summary.end,
        step,
        nodes_checked: summary.steps + 1,
        worst_ratio_razumikhin: worst_lr,
        worst_ratio_krasovskii: worst_lk,
        ordering_violation,
        samples,
        decades,
    })
}

/// Log-spaced CSV `t,norm,LR,LK` of the solution and both envelopes.
pub fn write_figure_data<W: Write>(system: &DelaySystem, cfg: &CompareConfig, out: W) -> Result<()> {
    let (lr_cert, lk_cert) = certificates(system, cfg)?;
    let (step, horizon) = run_grid(system, cfg);
    let history = history_for(system, &cfg.history, step)?;
    let phi_norm = history.sup_norm();
    require_inside_either(phi_norm, lr_cert.big_delta, lk_cert.big_delta)?;
    let (lr, lk) = (lr_cert.curve(), lk_cert.curve());
    let steps = (horizon / step - 1e-9).ceil().max(0.0) as usize;
    let wanted = OutputSchedule::LogSpaced { per_decade: cfg.per_decade }.indices(steps);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "norm", "LR", "LK"])?;
    let mut rows = Vec::with_capacity(wanted.len());
    let mut next = 0;
    integrate_streaming(&system.rhs, &history, horizon, step, |node| {
        if next < wanted.len() && wanted[next] == node.index {
            rows.push([
                fmt17(node.t),
                fmt17(euclidean(node.x)),
                fmt17(lr.bound(phi_norm, node.t)),
                fmt17(lk.bound(phi_norm, node.t)),
            ]);
            next += 1;
        }
    })?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}
