//! Bisection for equations `g(x) = target` with `g` strictly increasing.

/// Root of `g(x) = target` on `[lo, hi]` for strictly increasing `g`,
/// assuming `g(lo) <= target <= g(hi)`. Bisects until the bracket can no
/// longer be split in double precision, well inside any 1e-12 relative
/// tolerance.
pub fn bisect_increasing<G>(g: G, target: f64, mut lo: f64, mut hi: f64) -> f64
where
    G: Fn(f64) -> f64,
{
    debug_assert!(lo <= hi);
    for _ in 0..2200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if (g(lo) - target).abs() <= (g(hi) - target).abs() {
        lo
    } else {
        hi
    }
}

/// Positive root of `a x^p + b x^q = target` for `a, b >= 0`, `a + b > 0`,
/// `0 < p < q`. The left side is strictly increasing on `[0, inf)`.
pub fn positive_power_root(a: f64, p: f64, b: f64, q: f64, target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    let g = |x: f64| a * x.powf(p) + b * x.powf(q);
    let mut hi = if a > 0.0 {
        (target / a).powf(1.0 / p)
    } else {
        (target / b).powf(1.0 / q)
    };
    while g(hi) < target {
        hi *= 2.0;
    }
    bisect_increasing(g, target, 0.0, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let x = bisect_increasing(|x| x * x * x, 2.0, 0.0, 2.0);
        assert!((x - 2f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn power_root_residual() {
        let x = positive_power_root(1.0, 1.0, 10.0, 3.0, 0.0434);
        let r = x + 10.0 * x.powi(3) - 0.0434;
        assert!(r.abs() < 1e-12 * 0.0434);
        assert_eq!(positive_power_root(1.0, 1.0, 1.0, 2.0, 0.0), 0.0);
    }
}
