//! Initial functions on `[-h, 0]` with cubic Hermite dense output.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::euclidean;

/// Value of the cubic Hermite interpolant on one interval at fraction `s`.
#[inline]
pub(crate) fn hermite(v0: f64, d0: f64, v1: f64, d1: f64, width: f64, s: f64) -> f64 {
    if s == 0.0 {
        return v0;
    }
    if s == 1.0 {
        return v1;
    }
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * v0 + h10 * width * d0 + h01 * v1 + h11 * width * d1
}

/// An initial function sampled on a uniform grid `theta_0 = -h < ... < theta_N = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistorySegment {
    delay: f64,
    dim: usize,
    spacing: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
    sup_norm: f64,
}

impl HistorySegment {
    fn from_parts(delay: f64, dim: usize, values: Vec<f64>, derivs: Vec<f64>) -> Result<Self> {
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(invalid("h", "history needs a positive delay"));
        }
        if dim == 0 {
            return Err(invalid("dim", "dimension must be positive"));
        }
        let intervals = values.len() / dim - 1;
        if intervals < 4 {
            return Err(Error::GridTooCoarse(intervals));
        }
        let mut seg = HistorySegment {
            delay,
            dim,
            spacing: delay / intervals as f64,
            values,
            derivs,
            sup_norm: 0.0,
        };
        seg.sup_norm = seg.dense_sup_norm();
        Ok(seg)
    }

    /// `phi(theta) = value` on `intervals` uniform intervals.
    pub fn constant(delay: f64, value: &[f64], intervals: usize) -> Result<Self> {
        let dim = value.len();
        let values = value.repeat(intervals + 1);
        let derivs = vec![0.0; dim * (intervals + 1)];
        Self::from_parts(delay, dim, values, derivs)
    }

    /// Samples `phi` and `phi'` at the grid nodes.
    pub fn from_fn_with_derivative<F, D>(delay: f64, intervals: usize, phi: F, dphi: D) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
        D: Fn(f64) -> Vec<f64>,
    {
        let step = delay / intervals as f64;
        let theta = |i: usize| if i == intervals { 0.0 } else { -delay + i as f64 * step };
        let first = phi(-delay);
        let dim = first.len();
        let mut values = Vec::with_capacity(dim * (intervals + 1));
        let mut derivs = Vec::with_capacity(dim * (intervals + 1));
        for i in 0..=intervals {
            let v = phi(theta(i));
            let d = dphi(theta(i));
            if v.len() != dim || d.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len().min(d.len()) });
            }
            values.extend(v);
            derivs.extend(d);
        }
        Self::from_parts(delay, dim, values, derivs)
    }

    /// Samples `phi` at the grid nodes; node derivatives by second-order
    /// finite differences of the samples.
    pub fn from_fn<F>(delay: f64, intervals: usize, phi: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let step = delay / intervals as f64;
        let theta: Vec<f64> = (0..=intervals)
            .map(|i| if i == intervals { 0.0 } else { -delay + i as f64 * step })
            .collect();
        let values: Vec<Vec<f64>> = theta.iter().map(|&t| phi(t)).collect();
        Self::from_samples(&theta, &values)
    }

    /// Builds a segment from node samples on a uniform grid ending at 0.
    pub fn from_samples(theta: &[f64], values: &[Vec<f64>]) -> Result<Self> {
        if theta.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: theta.len(), got: values.len() });
        }
        if theta.len() < 5 {
            return Err(Error::GridTooCoarse(theta.len().saturating_sub(1)));
        }
        let n = theta.len() - 1;
        let delay = -theta[0];
        if theta[n].abs() > 1e-12 * delay.max(1.0) {
            return Err(invalid("theta", "grid must end at 0"));
        }
        let spacing = delay / n as f64;
        for (i, t) in theta.iter().enumerate() {
            let expected = -delay + i as f64 * spacing;
            if (t - expected).abs() > 1e-9 * spacing {
                return Err(invalid("theta", "grid must be uniform"));
            }
        }
        let dim = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        let mut derivs = Vec::with_capacity(dim * (n + 1));
        for i in 0..=n {
            for k in 0..dim {
                let v = |j: usize| values[j][k];
                let d = if i == 0 {
                    (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * spacing)
                } else if i == n {
                    (3.0 * v(n) - 4.0 * v(n - 1) + v(n - 2)) / (2.0 * spacing)
                } else {
                    (v(i + 1) - v(i - 1)) / (2.0 * spacing)
                };
                derivs.push(d);
            }
        }
        let flat = values.iter().flatten().copied().collect();
        Self::from_parts(delay, dim, flat, derivs)
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn intervals(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn theta(&self, i: usize) -> f64 {
        if i == self.intervals() {
            0.0
        } else {
            -self.delay + i as f64 * self.spacing
        }
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_derivative(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    /// `||phi||_h`, the max norm over nodes and interval midpoints.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    fn dense_sup_norm(&self) -> f64 {
        let mut buf = vec![0.0; self.dim];
        let mut best: f64 = 0.0;
        for i in 0..=self.intervals() {
            best = best.max(euclidean(self.node(i)));
            if i < self.intervals() {
                self.interval_into(i, 0.5, &mut buf);
                best = best.max(euclidean(&buf));
            }
        }
        best
    }

    fn interval_into(&self, i: usize, s: f64, out: &mut [f64]) {
        let (a, b) = (i * self.dim, (i + 1) * self.dim);
        for k in 0..self.dim {
            out[k] = hermite(
                self.values[a + k],
                self.derivs[a + k],
                self.values[b + k],
                self.derivs[b + k],
                self.spacing,
                s,
            );
        }
    }

    /// Dense value at `theta`, clamped into `[-h, 0]`.
    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        let pos = ((theta + self.delay) / self.spacing).clamp(0.0, self.intervals() as f64);
        let mut i = pos.floor() as usize;
        if i >= self.intervals() {
            i = self.intervals() - 1;
        }
        let s = pos - i as f64;
        self.interval_into(i, s, out);
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(theta, &mut out);
        out
    }
}

/// History document: `{"constant": [..]}` or
/// `{"samples": {"theta": [..], "values": [[..], ..]}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistorySpec {
    Constant(Vec<f64>),
    Samples { theta: Vec<f64>, values: Vec<Vec<f64>> },
}

impl HistorySpec {
    pub fn build(&self, delay: f64, intervals: usize) -> Result<HistorySegment> {
        match self {
            HistorySpec::Constant(v) => HistorySegment::constant(delay, v, intervals),
            HistorySpec::Samples { theta, values } => {
                let seg = HistorySegment::from_samples(theta, values)?;
                if (seg.delay() - delay).abs() > 1e-9 * delay {
                    return Err(invalid("theta", format!("history spans {} but the delay is {delay}", seg.delay())));
                }
                Ok(seg)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_reproduce_exactly() {
        let seg = HistorySegment::from_fn(2.0, 8, |t| vec![t.sin(), t * t]).unwrap();
        for i in 0..=8 {
            assert_eq!(seg.eval(seg.theta(i)), seg.node(i));
        }
    }

    #[test]
    fn constant_segment_norm() {
        let seg = HistorySegment::constant(10.0, &[0.009], 1000).unwrap();
        assert_eq!(seg.sup_norm(), 0.009);
        let seg = HistorySegment::constant(1.0, &[3.0, 4.0], 10).unwrap();
        assert_eq!(seg.sup_norm(), 5.0);
        assert_eq!(seg.eval(-0.37), vec![3.0, 4.0]);
    }

    #[test]
    fn coarse_grid_rejected() {
        assert!(matches!(
            HistorySegment::constant(1.0, &[1.0], 3),
            Err(Error::GridTooCoarse(3))
        ));
    }

    #[test]
    fn hermite_exact_for_cubic() {
        let seg = HistorySegment::from_fn_with_derivative(
            1.0,
            4,
            |t| vec![t * t * t - t],
            |t| vec![3.0 * t * t - 1.0],
        )
        .unwrap();
        for t in [-0.93, -0.5, -0.111, -0.02] {
            assert!((seg.eval(t)[0] - (t * t * t - t)).abs() < 1e-14);
        }
    }

    #[test]
    fn sup_norm_is_node_and_midpoint_max() {
        let seg = HistorySegment::from_fn(1.0, 10, |t| vec![(3.0 * t).cos()]).unwrap();
        let mut brute: f64 = 0.0;
        for i in 0..=20 {
            brute = brute.max(seg.eval(-1.0 + i as f64 * 0.05)[0].abs());
        }
        assert!((seg.sup_norm() - brute).abs() <= 1e-12 * brute);
    }

    #[test]
    fn history_document_parses() {
        let c: HistorySpec = serde_json::from_str(r#"{"constant": [0.1, 0.2]}"#).unwrap();
        assert_eq!(c.build(1.0, 4).unwrap().node(2), &[0.1, 0.2]);
        let s: HistorySpec = serde_json::from_str(
            r#"{"samples": {"theta": [-1, -0.75, -0.5, -0.25, 0], "values": [[1],[1],[1],[1],[1]]}}"#,
        )
        .unwrap();
        assert_eq!(s.build(1.0, 100).unwrap().intervals(), 4);
        assert!(s.build(2.0, 100).is_err());
    }
}
