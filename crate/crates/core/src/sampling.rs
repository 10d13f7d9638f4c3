//! Deterministic quasi-random points for the sampling-based constant checks.

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut result = 0.0;
    while index > 0 {
        result += (index % b) as f64 * factor;
        index /= b;
        factor *= inv;
    }
    result
}

/// Halton sequence in `[0,1)^dim`, starting after `skip` points.
#[derive(Clone, Debug)]
pub struct Halton {
    dim: usize,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, skip: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton dimension limited to {}", PRIMES.len());
        Halton {
            dim,
            index: skip + 1,
        }
    }

    pub fn next_point(&mut self, out: &mut [f64]) {
        for (k, slot) in out.iter_mut().take(self.dim).enumerate() {
            *slot = radical_inverse(self.index, PRIMES[k]);
        }
        self.index += 1;
    }
}

pub(crate) fn euclidean(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Points on the unit sphere of `R^dim`: all signed coordinate axes first,
/// then Halton points of the cube `[-1,1]^dim` radially projected.
pub fn unit_sphere_points(dim: usize, count: usize, skip: u64) -> Vec<Vec<f64>> {
    let mut points = Vec::with_capacity(count + 2 * dim);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut p = vec![0.0; dim];
            p[i] = s;
            points.push(p);
        }
    }
    let mut seq = Halton::new(dim, skip);
    let mut raw = vec![0.0; dim];
    while points.len() < count + 2 * dim {
        seq.next_point(&mut raw);
        let p: Vec<f64> = raw.iter().map(|u| 2.0 * u - 1.0).collect();
        let r = euclidean(&p);
        if r < 1e-6 {
            continue;
        }
        points.push(p.into_iter().map(|a| a / r).collect());
    }
    points
}
