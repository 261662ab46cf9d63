//! Small numeric helpers shared across modules: deterministic reductions,
//! sample statistics, quadrature rules on time grids, log-log slope fits and
//! Richardson extrapolation.

/// Pairwise (tree) sum over the slice in index order.
///
/// The reduction tree depends only on the length, so the result is bit-stable
/// across thread counts and runs.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean and standard error of the mean, with pairwise sums throughout.
///
/// Standard error is `sample std / sqrt(n)`; zero for n < 2.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Trapezoid rule for samples `f_0..=f_k` on a uniform grid of step `dt`,
/// integrated up to index `k` inclusive.
pub fn trapezoid_prefix(fs: &[f64], dt: f64, k: usize) -> f64 {
    debug_assert!(k < fs.len());
    if k == 0 {
        return 0.0;
    }
    let mut s = 0.5 * (fs[0] + fs[k]);
    for &f in &fs[1..k] {
        s += f;
    }
    s * dt
}

/// Least-squares slope of log(y) against log(x).
///
/// Points with non-positive coordinates are skipped; returns NaN when fewer
/// than two usable points remain.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if usable.len() < 2 {
        return f64::NAN;
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &usable {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// First-order Richardson extrapolation to h = 0 from the last three samples
/// of a decreasing schedule `(h_i, v_i)`.
///
/// Returns `(limit, residual)` where the residual is the spread between the
/// extrapolations of the last two consecutive pairs. With fewer than two
/// samples the last value is returned with an infinite residual.
pub fn richardson_first_order(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::INFINITY);
    }
    if n == 1 {
        return (samples[0].1, f64::INFINITY);
    }
    let extrap = |(h1, v1): (f64, f64), (h2, v2): (f64, f64)| -> f64 {
        // linear model v(h) = v* + c h through two nodes, h2 < h1
        v2 + (v2 - v1) * h2 / (h1 - h2)
    };
    let e_last = extrap(samples[n - 2], samples[n - 1]);
    if n == 2 {
        return (e_last, (samples[n - 1].1 - e_last).abs());
    }
    let e_prev = extrap(samples[n - 3], samples[n - 2]);
    (e_last, (e_last - e_prev).abs())
}

/// C2 smoothstep on [0, 1]: 6t^5 - 15t^4 + 10t^3, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

/// Bisection for a sign change of `f` on [a, b]; `f(a)` and `f(b)` must have
/// opposite (non-strict) signs. Returns the midpoint after `iters` halvings.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let fa = f(a);
    for _ in 0..iters {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
