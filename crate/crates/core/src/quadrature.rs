/// Composite Simpson rule over uniformly spaced samples. An odd number of
/// intervals closes with the 3/8 rule on the last three; one or two
/// intervals fall back to trapezoid and plain Simpson.
pub fn simpson(values: &[f64], spacing: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * spacing * (values[0] + values[1]),
        _ if n.is_multiple_of(2) => simpson_even(values, spacing),
        _ => {
            let head = n - 3;
            let tail = &values[head..];
            let three_eighths =
                3.0 * spacing / 8.0 * (tail[0] + 3.0 * tail[1] + 3.0 * tail[2] + tail[3]);
            let lead = if head > 0 {
                simpson_even(&values[..=head], spacing)
            } else {
                0.0
            };
            lead + three_eighths
        }
    }
}

fn simpson_even(values: &[f64], spacing: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n.is_multiple_of(2));
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    spacing / 3.0 * (values[0] + values[n] + 4.0 * odd + 2.0 * even)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, f64) {
        let dx = 2.0 / n as f64;
        ((0..=n).map(|i| f(-1.0 + i as f64 * dx)).collect(), dx)
    }

    #[test]
    fn exact_for_cubics() {
        for n in [2, 3, 4, 5, 8, 9] {
            let (v, dx) = samples(n, |x| 3.0 * x * x * x - x * x + 2.0);
            let exact = -2.0 / 3.0 + 4.0;
            assert!((simpson(&v, dx) - exact).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn fourth_order_on_smooth() {
        let exact = 1f64.exp() - (-1f64).exp();
        let err = |n| {
            let (v, dx) = samples(n, f64::exp);
            (simpson(&v, dx) - exact).abs()
        };
        let ratio = err(32) / err(64);
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }
}
