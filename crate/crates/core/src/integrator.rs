//! Method-of-steps integration of `x'(t) = f(x(t), x(t-h))` with classical
//! RK4. The step divides `h`, so the delayed argument at the RK4 stage
//! times `t` and `t + dt` falls on stored nodes; the half-step stage reads
//! the cubic Hermite interpolant of the stored solution.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::history::{hermite, HistorySegment};
use crate::model::{HomogeneousRhs, LyapunovData};
use crate::sampling::euclidean;

/// Escape guard: abort once `||x|| > BLOWUP_FACTOR * (1 + ||phi||_h)`.
pub const BLOWUP_FACTOR: f64 = 1e6;

/// Default step: `h/1000`, refined so it never exceeds 0.01 while still
/// dividing `h`.
pub fn default_step(delay: f64) -> f64 {
    let lag = ((delay / 0.01 - 1e-9).ceil() as usize).max(1000);
    delay / lag as f64
}

/// Number of steps per delay interval, failing unless `step` divides `h`.
pub fn steps_per_delay(delay: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("step", "must be positive"));
    }
    if !(delay > 0.0) {
        return Err(invalid("h", "simulation needs a positive delay"));
    }
    let lag = (delay / step).round();
    if lag < 1.0 || (lag * step - delay).abs() > 4.0 * f64::EPSILON * delay {
        return Err(Error::StepDoesNotDivideDelay { step, delay });
    }
    Ok(lag as usize)
}

fn step_count(horizon: f64, step: f64) -> Result<usize> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", "must be finite and nonnegative"));
    }
    Ok((horizon / step - 1e-9).ceil().max(0.0) as usize)
}

/// One freshly computed node, handed to streaming observers.
#[derive(Debug)]
pub struct NodeView<'a> {
    pub index: usize,
    pub t: f64,
    pub x: &'a [f64],
    pub dx: &'a [f64],
}

trait NodeStore {
    fn push(&mut self, x: &[f64], dx: &[f64]);
    fn x(&self, i: usize) -> &[f64];
    fn dx(&self, i: usize) -> &[f64];
}

struct FullStore {
    dim: usize,
    x: Vec<f64>,
    dx: Vec<f64>,
}

impl NodeStore for FullStore {
    fn push(&mut self, x: &[f64], dx: &[f64]) {
        self.x.extend_from_slice(x);
        self.dx.extend_from_slice(dx);
    }
    fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
    fn dx(&self, i: usize) -> &[f64] {
        &self.dx[i * self.dim..(i + 1) * self.dim]
    }
}

/// Keeps only the last `lag + 1` nodes, enough for the delayed lookups.
struct RingStore {
    dim: usize,
    slots: usize,
    len: usize,
    x: Vec<f64>,
    dx: Vec<f64>,
}

impl RingStore {
    fn new(dim: usize, lag: usize) -> Self {
        let slots = lag + 1;
        RingStore {
            dim,
            slots,
            len: 0,
            x: vec![0.0; slots * dim],
            dx: vec![0.0; slots * dim],
        }
    }
    fn range(&self, i: usize) -> std::ops::Range<usize> {
        let s = i % self.slots;
        s * self.dim..(s + 1) * self.dim
    }
}

impl NodeStore for RingStore {
    fn push(&mut self, x: &[f64], dx: &[f64]) {
        let r = self.range(self.len);
        self.x[r.clone()].copy_from_slice(x);
        self.dx[r].copy_from_slice(dx);
        self.len += 1;
    }
    fn x(&self, i: usize) -> &[f64] {
        debug_assert!(i + self.slots >= self.len);
        &self.x[self.range(i)]
    }
    fn dx(&self, i: usize) -> &[f64] {
        &self.dx[self.range(i)]
    }
}

struct Engine<'a> {
    rhs: &'a HomogeneousRhs,
    history: &'a HistorySegment,
    step: f64,
    lag: usize,
    limit: f64,
}

impl Engine<'_> {
    fn new<'a>(rhs: &'a HomogeneousRhs, history: &'a HistorySegment, step: f64) -> Result<Engine<'a>> {
        if history.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch { expected: rhs.dim(), got: history.dim() });
        }
        if (history.delay() - rhs.delay()).abs() > 1e-12 * rhs.delay() {
            return Err(invalid("history", format!(
                "history spans {} but the delay is {}",
                history.delay(),
                rhs.delay()
            )));
        }
        let lag = steps_per_delay(rhs.delay(), step)?;
        Ok(Engine {
            rhs,
            history,
            step,
            lag,
            limit: BLOWUP_FACTOR * (1.0 + history.sup_norm()),
        })
    }

    /// `x(t_i + s*dt - h)` for `s` in `{0, 1/2, 1}`.
    #[inline]
    fn delayed<S: NodeStore>(&self, store: &S, i: usize, s: f64, out: &mut [f64]) {
        if i >= self.lag {
            let j = i - self.lag;
            if s == 0.0 {
                out.copy_from_slice(store.x(j));
            } else if s == 1.0 {
                out.copy_from_slice(store.x(j + 1));
            } else {
                let (x0, d0, x1, d1) = (store.x(j), store.dx(j), store.x(j + 1), store.dx(j + 1));
                for k in 0..out.len() {
                    out[k] = hermite(x0[k], d0[k], x1[k], d1[k], self.step, s);
                }
            }
        } else {
            let back = (self.lag - i) as f64 - s;
            self.history.eval_into(-back * self.step, out);
        }
    }

    fn run<S, O>(&self, store: &mut S, steps: usize, mut observe: O) -> Result<()>
    where
        S: NodeStore,
        O: FnMut(&NodeView<'_>),
    {
        let n = self.rhs.dim();
        let dt = self.step;
        let mut x = self.history.node(self.history.intervals()).to_vec();
        let mut dx = vec![0.0; n];
        let mut y0 = vec![0.0; n];
        let mut yh = vec![0.0; n];
        let mut y1 = vec![0.0; n];
        let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut stage = vec![0.0; n];

        self.delayed(store, 0, 0.0, &mut y0);
        self.rhs.eval_into(&x, &y0, &mut dx);
        store.push(&x, &dx);
        observe(&NodeView { index: 0, t: 0.0, x: &x, dx: &dx });

        for i in 0..steps {
            self.delayed(store, i, 0.5, &mut yh);
            self.delayed(store, i, 1.0, &mut y1);
            // k1 is the stored node derivative f(x_i, x_{i-lag})
            let k1 = store.dx(i);
            for k in 0..n {
                stage[k] = x[k] + 0.5 * dt * k1[k];
            }
            self.rhs.eval_into(&stage, &yh, &mut k2);
            for k in 0..n {
                stage[k] = x[k] + 0.5 * dt * k2[k];
            }
            self.rhs.eval_into(&stage, &yh, &mut k3);
            for k in 0..n {
                stage[k] = x[k] + dt * k3[k];
            }
            self.rhs.eval_into(&stage, &y1, &mut k4);
            for k in 0..n {
                x[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            }
            self.rhs.eval_into(&x, &y1, &mut dx);
            let t = (i + 1) as f64 * dt;
            let norm = euclidean(&x);
            if !(norm <= self.limit) {
                return Err(Error::BlowUp { t, norm, limit: self.limit });
            }
            store.push(&x, &dx);
            observe(&NodeView { index: i + 1, t, x: &x, dx: &dx });
        }
        Ok(())
    }
}

/// Dense solution on `[-h, T]`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    history: Arc<HistorySegment>,
    step: f64,
    lag: usize,
    dim: usize,
    states: Vec<f64>,
    derivs: Vec<f64>,
}

/// Integrates over `[0, T]` keeping every node.
pub fn integrate(
    rhs: &HomogeneousRhs,
    history: &HistorySegment,
    horizon: f64,
    step: f64,
) -> Result<Trajectory> {
    let engine = Engine::new(rhs, history, step)?;
    let steps = step_count(horizon, step)?;
    let n = rhs.dim();
    let mut store = FullStore {
        dim: n,
        x: Vec::with_capacity((steps + 1) * n),
        dx: Vec::with_capacity((steps + 1) * n),
    };
    engine.run(&mut store, steps, |_| {})?;
    Ok(Trajectory {
        history: Arc::new(history.clone()),
        step,
        lag: engine.lag,
        dim: n,
        states: store.x,
        derivs: store.dx,
    })
}

/// Summary of a streaming run.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamSummary {
    pub steps: usize,
    pub end: f64,
    pub final_state: Vec<f64>,
    pub max_norm: f64,
}

/// Integrates over `[0, T]` holding only the active delay window; every
/// node is passed to `observe` as it is produced.
pub fn integrate_streaming<O>(
    rhs: &HomogeneousRhs,
    history: &HistorySegment,
    horizon: f64,
    step: f64,
    mut observe: O,
) -> Result<StreamSummary>
where
    O: FnMut(&NodeView<'_>),
{
    let engine = Engine::new(rhs, history, step)?;
    let steps = step_count(horizon, step)?;
    let mut store = RingStore::new(rhs.dim(), engine.lag);
    let mut max_norm: f64 = 0.0;
    let mut last = Vec::new();
    engine.run(&mut store, steps, |node| {
        max_norm = max_norm.max(euclidean(node.x));
        if node.index == steps {
            last = node.x.to_vec();
        }
        observe(node);
    })?;
    Ok(StreamSummary {
        steps,
        end: steps as f64 * step,
        final_state: last,
        max_norm,
    })
}

/// Which nodes a thinned run records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputSchedule {
    All,
    Every(usize),
    /// `per_decade` node indices per factor of ten in time, plus the first
    /// and last node.
    LogSpaced { per_decade: usize },
}

impl OutputSchedule {
    pub fn indices(&self, steps: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = match *self {
            OutputSchedule::All => (0..=steps).collect(),
            OutputSchedule::Every(k) => (0..=steps).step_by(k.max(1)).collect(),
            OutputSchedule::LogSpaced { per_decade } => {
                let per = per_decade.max(1) as f64;
                let mut v = vec![0];
                let mut k = 0u32;
                loop {
                    let i = 10f64.powf(k as f64 / per).round() as usize;
                    if i > steps {
                        break;
                    }
                    v.push(i);
                    k += 1;
                }
                v
            }
        };
        idx.push(steps);
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

/// Output nodes of a thinned run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledTrajectory {
    pub step: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub history_norm: f64,
}

pub fn integrate_sampled(
    rhs: &HomogeneousRhs,
    history: &HistorySegment,
    horizon: f64,
    step: f64,
    schedule: OutputSchedule,
) -> Result<SampledTrajectory> {
    let steps = step_count(horizon, step)?;
    let wanted = schedule.indices(steps);
    let mut next = 0;
    let mut out = SampledTrajectory {
        step,
        times: Vec::with_capacity(wanted.len()),
        states: Vec::with_capacity(wanted.len()),
        norms: Vec::with_capacity(wanted.len()),
        history_norm: history.sup_norm(),
    };
    integrate_streaming(rhs, history, horizon, step, |node| {
        if next < wanted.len() && wanted[next] == node.index {
            out.times.push(node.t);
            out.states.push(node.x.to_vec());
            out.norms.push(euclidean(node.x));
            next += 1;
        }
    })?;
    Ok(out)
}

impl Trajectory {
    pub fn history(&self) -> &HistorySegment {
        &self.history
    }

    pub fn delay(&self) -> f64 {
        self.history.delay()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps_per_delay(&self) -> usize {
        self.lag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of solution nodes on `[0, T]`.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn start(&self) -> f64 {
        -self.delay()
    }

    pub fn end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn derivative(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm(&self, i: usize) -> f64 {
        euclidean(self.state(i))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < self.start() - 1e-12 || t > self.end() + 1e-12 {
            return Err(Error::OutOfRange { t, start: self.start(), end: self.end() });
        }
        Ok(())
    }

    /// Dense value on `[-h, T]`: the history's interpolant for `t <= 0`,
    /// Hermite between solution nodes after.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check_time(t)?;
        if t <= 0.0 {
            self.history.eval_into(t, out);
            return Ok(());
        }
        let pos = (t / self.step).min((self.len() - 1) as f64);
        let mut i = pos.floor() as usize;
        if i + 1 >= self.len() {
            i = self.len().saturating_sub(2);
        }
        let s = (pos - i as f64).clamp(0.0, 1.0);
        let (x0, d0, x1, d1) = (self.state(i), self.derivative(i), self.state(i + 1), self.derivative(i + 1));
        for k in 0..self.dim {
            out[k] = hermite(x0[k], d0[k], x1[k], d1[k], self.step, s);
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// `||x_t||_h`: max of `||x(s)||` over `[t-h, t]`, evaluated at the
    /// window ends, the grid nodes inside and the midpoints between them.
    pub fn sup_norm_window(&self, t: f64) -> Result<f64> {
        let h = self.delay();
        if t < 0.0 || t > self.end() + 1e-12 {
            return Err(Error::OutOfRange { t, start: 0.0, end: self.end() });
        }
        let lo = t - h;
        let mut knots = vec![lo];
        let hist = &self.history;
        for i in 0..=hist.intervals() {
            let th = hist.theta(i);
            if th > lo && th < t.min(0.0) {
                knots.push(th);
            }
        }
        if lo < 0.0 && t > 0.0 {
            knots.push(0.0);
        }
        let first = (lo.max(0.0) / self.step).floor() as usize;
        for i in first..self.len() {
            let ti = self.time(i);
            if ti >= t {
                break;
            }
            if ti > lo && ti > 0.0 {
                knots.push(ti);
            }
        }
        knots.push(t);
        let mut buf = vec![0.0; self.dim];
        let mut best: f64 = 0.0;
        for w in knots.windows(2) {
            for s in [w[0], 0.5 * (w[0] + w[1])] {
                self.eval_into(s, &mut buf)?;
                best = best.max(euclidean(&buf));
            }
        }
        self.eval_into(t, &mut buf)?;
        Ok(best.max(euclidean(&buf)))
    }

    /// Values of `x` on the grid `t_i - h + k*dt`, `k = 0..=lag`, flattened.
    pub fn window_samples(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; (self.lag + 1) * self.dim];
        for k in 0..=self.lag {
            let slot = &mut out[k * self.dim..(k + 1) * self.dim];
            if i + k >= self.lag {
                slot.copy_from_slice(self.state(i + k - self.lag));
            } else {
                let theta = -((self.lag - i - k) as f64) * self.step;
                self.history.eval_into(theta, slot);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, lyap: Option<&LyapunovData>, out: W) -> Result<()> {
        write_states(self.dim, lyap, out, (0..self.len()).map(|i| (self.time(i), self.state(i))))
    }
}

impl SampledTrajectory {
    /// Same layout as [`Trajectory::write_csv`].
    pub fn write_csv<W: Write>(&self, lyap: Option<&LyapunovData>, out: W) -> Result<()> {
        let dim = self.states.first().map_or(0, Vec::len);
        write_states(dim, lyap, out, self.times.iter().copied().zip(self.states.iter().map(Vec::as_slice)))
    }
}

/// CSV `t,x_1..x_n,norm,V`; `V` is empty without Lyapunov data.
fn write_states<'a, W, I>(dim: usize, lyap: Option<&LyapunovData>, out: W, rows: I) -> Result<()>
where
    W: Write,
    I: Iterator<Item = (f64, &'a [f64])>,
{
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|k| format!("x_{k}")));
    header.push("norm".into());
    header.push("V".into());
    w.write_record(&header)?;
    for (t, x) in rows {
        let mut row = vec![fmt17(t)];
        row.extend(x.iter().map(|v| fmt17(*v)));
        row.push(fmt17(euclidean(x)));
        row.push(lyap.map(|l| fmt17(l.value(x))).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Seventeen significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// `V(x(t))` at the solution nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn lyapunov_trace(traj: &Trajectory, lyap: &LyapunovData) -> LyapunovTrace {
    let times = (0..traj.len()).map(|i| traj.time(i)).collect();
    let values = (0..traj.len()).map(|i| lyap.value(traj.state(i))).collect();
    LyapunovTrace { times, values }
}

/// Whether `V(x(xi)) < alpha V(x(t_i))` for every grid point `xi` in
/// `[t_i - 2h, t_i]`, history nodes included.
pub fn razumikhin_holds(traj: &Trajectory, lyap: &LyapunovData, i: usize, alpha: f64) -> bool {
    let t = traj.time(i);
    let level = alpha * lyap.value(traj.state(i));
    let lo = t - 2.0 * traj.delay();
    let hist = traj.history();
    for k in 0..=hist.intervals() {
        if hist.theta(k) >= lo && lyap.value(hist.node(k)) >= level {
            return false;
        }
    }
    let first = (lo.max(0.0) / traj.step()).floor() as usize;
    (first..i).all(|j| traj.time(j) < lo || lyap.value(traj.state(j)) < level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::Exponent;
    use crate::model::PolyTerm;

    fn example1() -> HomogeneousRhs {
        let e = Exponent::integer;
        HomogeneousRhs::polynomial(
            1,
            e(3),
            10.0,
            vec![
                PolyTerm { target: 0, coeff: -1.0, x_exponents: vec![e(3)], y_exponents: vec![e(0)] },
                PolyTerm { target: 0, coeff: 0.5, x_exponents: vec![e(0)], y_exponents: vec![e(3)] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn default_step_divides_delay() {
        for h in [1.0, 10.0, 25.5, std::f64::consts::PI] {
            let s = default_step(h);
            assert!(s <= 0.01 + 1e-15);
            assert!(steps_per_delay(h, s).is_ok());
        }
        assert_eq!(default_step(10.0), 0.01);
        assert_eq!(default_step(1.0), 0.001);
    }

    #[test]
    fn non_dividing_step_rejected() {
        assert!(matches!(steps_per_delay(1.0, 0.3), Err(Error::StepDoesNotDivideDelay { .. })));
    }

    #[test]
    fn zero_history_stays_zero() {
        let hist = HistorySegment::constant(10.0, &[0.0], 1000).unwrap();
        let traj = integrate(&example1(), &hist, 50.0, 0.01).unwrap();
        assert!((0..traj.len()).all(|i| traj.state(i)[0] == 0.0));
    }

    #[test]
    fn step_to_constant_history_of_sup_norm() {
        let hist = HistorySegment::constant(10.0, &[0.009], 1000).unwrap();
        let traj = integrate(&example1(), &hist, 30.0, 0.01).unwrap();
        assert_eq!(traj.sup_norm_window(0.0).unwrap(), 0.009);
        // decreasing solution: the window max sits at its left end
        for t in [12.0, 17.35, 25.0] {
            let expected = traj.eval(t - 10.0).unwrap()[0].abs();
            assert!((traj.sup_norm_window(t).unwrap() - expected).abs() <= 1e-15);
        }
        assert!(traj.sup_norm_window(31.0).is_err());
    }

    #[test]
    fn dense_output_continuous_at_joins() {
        let hist = HistorySegment::from_fn(10.0, 1000, |t| vec![0.01 + 0.002 * (t / 3.0).sin()]).unwrap();
        let traj = integrate(&example1(), &hist, 20.0, 0.01).unwrap();
        let eps = 1e-9;
        for t in [0.0, 10.0, 5.005] {
            let a = traj.eval(t - eps).unwrap()[0];
            let b = traj.eval(t + eps).unwrap()[0];
            assert!((a - b).abs() < 1e-10, "jump at {t}");
        }
    }

    #[test]
    fn streaming_matches_full_storage() {
        let hist = HistorySegment::from_fn(10.0, 1000, |t| vec![0.02 * (1.0 + 0.3 * (t).cos())]).unwrap();
        let traj = integrate(&example1(), &hist, 40.0, 0.01).unwrap();
        let mut seen = Vec::new();
        let summary = integrate_streaming(&example1(), &hist, 40.0, 0.01, |n| seen.push(n.x[0])).unwrap();
        assert_eq!(summary.steps + 1, traj.len());
        for (i, v) in seen.iter().enumerate() {
            assert_eq!(*v, traj.state(i)[0]);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let e = Exponent::integer;
        let unstable = HomogeneousRhs::polynomial(
            1,
            e(3),
            1.0,
            vec![PolyTerm { target: 0, coeff: 1.0, x_exponents: vec![e(3)], y_exponents: vec![e(0)] }],
        )
        .unwrap();
        let hist = HistorySegment::constant(1.0, &[1.0], 100).unwrap();
        assert!(matches!(integrate(&unstable, &hist, 10.0, 0.01), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn log_schedule() {
        let idx = OutputSchedule::LogSpaced { per_decade: 1 }.indices(1500);
        assert_eq!(idx, vec![0, 1, 10, 100, 1000, 1500]);
        assert_eq!(OutputSchedule::Every(4).indices(10), vec![0, 4, 8, 10]);
    }

    #[test]
    fn window_samples_cover_history_then_solution() {
        let hist = HistorySegment::constant(10.0, &[0.5], 1000).unwrap();
        let traj = integrate(&example1(), &hist, 15.0, 0.01).unwrap();
        let w = traj.window_samples(500);
        assert_eq!(w.len(), 1001);
        assert_eq!(w[0], 0.5);
        assert_eq!(w[1000], traj.state(500)[0]);
        assert_eq!(w[500], traj.state(0)[0]);
    }
}
