//! Euclidean projections onto the feasible power sets.
//!
//! The downlink feasible set is `{p : p_j >= lo_j, sum p_j <= total}`. Two
//! exact projections are provided: one Euclidean in the linear-power
//! domain (sorted-threshold), and one Euclidean in the log-power domain
//! (the set becomes `{x : x_j >= ln lo_j, sum exp(x_j) <= total}`), solved
//! with a Lambert-W style inner Newton and an outer bisection on the
//! budget multiplier.

/// Clamp each coordinate into `[lo, hi]`.
pub fn clip_box(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((xi, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *xi = xi.clamp(l, h);
    }
}

/// Euclidean projection of `y` onto `{x : x_j >= lo_j, sum x_j <= total}`
/// in the linear domain. Requires `sum lo_j <= total`. O(K log K).
pub fn project_simplex_linear(y: &[f64], lo: &[f64], total: f64) -> Vec<f64> {
    let budget: f64 = total - lo.iter().sum::<f64>();
    debug_assert!(budget >= -1e-12 * total.abs(), "infeasible lower bounds");
    // shift to z >= 0 with sum z <= budget
    let z: Vec<f64> = y.iter().zip(lo).map(|(&yi, &l)| yi - l).collect();
    let clipped_sum: f64 = z.iter().map(|&zi| zi.max(0.0)).sum();
    if clipped_sum <= budget {
        return z.iter().zip(lo).map(|(&zi, &l)| zi.max(0.0) + l).collect();
    }
    // find theta with sum max(0, z_j - theta) = budget
    let mut sorted = z.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (k, &zk) in sorted.iter().enumerate() {
        prefix += zk;
        let candidate = (prefix - budget) / (k + 1) as f64;
        let next = sorted.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if candidate >= next {
            theta = candidate;
            break;
        }
    }
    z.iter()
        .zip(lo)
        .map(|(&zi, &l)| (zi - theta).max(0.0) + l)
        .collect()
}

/// Solve `w * exp(w) = z` for `w >= 0`, `z >= 0` (principal Lambert W).
fn lambert_w(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    // ln(1+z) is within the basin of quadratic convergence on z >= 0
    let mut w = z.ln_1p();
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - z;
        let step = f / (ew * (1.0 + w) - f * (2.0 + w) / (2.0 + 2.0 * w));
        w -= step;
        if step.abs() <= 1e-16 * w.abs().max(1e-300) {
            break;
        }
    }
    w
}

/// Euclidean projection of `y` onto `{x : x_j >= log_lo_j, sum exp(x_j)
/// <= total}` in the log domain. Requires `sum exp(log_lo_j) <= total`.
pub fn project_simplex_log(y: &[f64], log_lo: &[f64], total: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        y.iter()
            .zip(log_lo)
            .map(|(&yi, &l)| {
                // stationarity: x = y - W((lambda/2) * exp(y)), clamped at l
                let x = yi - lambert_w(0.5 * lambda * yi.exp());
                x.max(l)
            })
            .collect()
    };
    let sum_exp = |x: &[f64]| x.iter().map(|&v| v.exp()).sum::<f64>();

    let free = at(0.0);
    if sum_exp(&free) <= total {
        return free;
    }
    // sum exp(x(lambda)) decreases continuously in lambda; bracket then bisect
    let mut hi = 1.0;
    while sum_exp(&at(hi)) > total {
        hi *= 4.0;
        assert!(hi < 1e300, "log-domain projection failed to bracket");
    }
    let mut lo_l = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo_l + hi);
        if sum_exp(&at(mid)) > total {
            lo_l = mid;
        } else {
            hi = mid;
        }
        if (hi - lo_l) <= 1e-16 * hi {
            break;
        }
    }
    at(hi)
}
