use rand::Rng;
use rand_chacha::ChaCha8Rng;

use delaycert::history::HistorySegment;

/// Smooth random initial function (a few sine modes per component),
/// rescaled so that `|phi|_h = scale`.
pub fn random_history(rng: &mut ChaCha8Rng, h: f64, dim: usize, scale: f64, intervals: usize) -> HistorySegment {
    let modes: Vec<[f64; 4]> = (0..dim * 3)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.1..6.0) / h,
                rng.gen_range(0.0..6.3),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let raw = |t: f64| -> Vec<f64> {
        (0..dim)
            .map(|k| modes[3 * k..3 * k + 3].iter().map(|m| m[3] + m[0] * (m[1] * t + m[2]).sin()).sum::<f64>())
            .collect()
    };
    let draft = HistorySegment::from_fn(h, intervals, raw).unwrap();
    let s = scale / draft.sup_norm();
    HistorySegment::from_fn_with_derivative(
        h,
        intervals,
        |t| raw(t).into_iter().map(|v| s * v).collect(),
        |t| {
            (0..dim)
                .map(|k| s * modes[3 * k..3 * k + 3].iter().map(|m| m[0] * m[1] * (m[1] * t + m[2]).cos()).sum::<f64>())
                .collect()
        },
    )
    .unwrap()
}
