//! Centralized ground truth for the power allocation problem.
//!
//! After the change of variables to log powers and the high-SINR rate
//! substitution, the sum-utility objective is concave over the box/budget
//! feasible set. [`solve_centralized`] maximizes it by projected gradient
//! ascent with an Armijo line search along the projected arc, and returns
//! a KKT-residual and duality-gap certificate. [`brute_force_grid`] is an
//! independent exhaustive check for tiny instances.

use serde::{Deserialize, Serialize};

use crate::model::{PowerAllocation, RateMode, Scenario};
use crate::projection::{clip_box, project_simplex_log};
use crate::utility::UtilitySet;
use crate::{Error, Result};

/// Tuning for [`solve_centralized`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverParams {
    /// Convergence threshold on the KKT residual (utility per nat).
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo_slope: f64,
    pub armijo_shrink: f64,
    pub init_step: f64,
    pub max_step: f64,
    /// Re-solve the downlink block exactly every this many iterations
    /// (0 disables the polish).
    pub dl_polish_every: usize,
    /// Record the objective value at every iteration.
    pub track_objective: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 200_000,
            armijo_slope: 1e-4,
            armijo_shrink: 0.5,
            init_step: 1.0,
            max_step: 64.0,
            dl_polish_every: 20,
            track_objective: false,
        }
    }
}

/// Certificate-carrying solver output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    pub p_star: PowerAllocation,
    pub utility_star: f64,
    /// Final KKT residual (see [`kkt_residual`]).
    pub grad_norm: f64,
    /// Upper bound on the gap between the dual and the achieved utility.
    pub duality_gap: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub objective_trace: Vec<f64>,
}

impl OracleResult {
    /// CSV header matching [`OracleResult::csv_row`].
    pub fn csv_header() -> &'static str {
        "utility_star,grad_norm,duality_gap,iterations"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.utility_star, self.grad_norm, self.duality_gap, self.iterations
        )
    }
}

/// Per-user rates, prices and interference terms at a log-power point.
struct Eval {
    r_ul: Vec<f64>,
    r_dl: Vec<f64>,
    q_ul: Vec<f64>,
    q_dl: Vec<f64>,
    in_dl: Vec<f64>,
}

fn evaluate(s: &Scenario, utils: &UtilitySet, log_p_ul: &[f64], log_p_dl: &[f64]) -> Eval {
    let mf = s.m as f64;
    let p_ul: Vec<f64> = log_p_ul.iter().map(|x| x.exp()).collect();
    let in_dl: Vec<f64> = (0..s.k_dl())
        .map(|j| s.interference_plus_noise(&p_ul, j))
        .collect();
    let r_ul: Vec<f64> = (0..s.k_ul())
        .map(|i| (mf * s.g_ul[i] / s.n0).ln() + log_p_ul[i])
        .collect();
    let r_dl: Vec<f64> = (0..s.k_dl())
        .map(|j| (mf * s.g_dl[j]).ln() + log_p_dl[j] - in_dl[j].ln())
        .collect();
    let q_ul = utils
        .ul
        .iter()
        .zip(&r_ul)
        .map(|(u, &r)| u.derivative(r))
        .collect();
    let q_dl = utils
        .dl
        .iter()
        .zip(&r_dl)
        .map(|(u, &r)| u.derivative(r))
        .collect();
    Eval {
        r_ul,
        r_dl,
        q_ul,
        q_dl,
        in_dl,
    }
}

/// Sum utility of the high-SINR substituted objective at log powers.
pub fn hs_objective(s: &Scenario, utils: &UtilitySet, log_p_ul: &[f64], log_p_dl: &[f64]) -> f64 {
    let e = evaluate(s, utils, log_p_ul, log_p_dl);
    utils
        .ul
        .iter()
        .zip(&e.r_ul)
        .map(|(u, &r)| u.value(r))
        .chain(utils.dl.iter().zip(&e.r_dl).map(|(u, &r)| u.value(r)))
        .sum()
}

/// Log-domain gradient of the substituted objective. The uplink component
/// is the price minus the price-weighted interference share; the downlink
/// component is the downlink price itself.
pub fn hs_gradient(
    s: &Scenario,
    utils: &UtilitySet,
    log_p_ul: &[f64],
    log_p_dl: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let e = evaluate(s, utils, log_p_ul, log_p_dl);
    let grad_ul = (0..s.k_ul())
        .map(|i| {
            let p_i = log_p_ul[i].exp();
            let pull: f64 = s.nbr_of_ul[i]
                .iter()
                .map(|&j| e.q_dl[j] * s.g_i[i][j] * p_i / e.in_dl[j])
                .sum();
            e.q_ul[i] - pull
        })
        .collect();
    (grad_ul, e.q_dl)
}

/// First-order optimality residual at a feasible allocation, in utility
/// per nat. Prices are recovered from the marginal utilities at the
/// achieved rates; bound and budget multipliers are adjusted for by
/// complementary slackness.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub max_residual: f64,
    pub ul_residuals: Vec<f64>,
    pub dl_residuals: Vec<f64>,
    /// Recovered downlink budget multiplier.
    pub nu: f64,
}

pub fn kkt_residual(s: &Scenario, utils: &UtilitySet, p: &PowerAllocation) -> KktReport {
    let log_ul = p.log_ul();
    let log_dl = p.log_dl();
    let (grad_ul, _) = hs_gradient(s, utils, &log_ul, &log_dl);
    let e = evaluate(s, utils, &log_ul, &log_dl);

    let tol = 1e-9;
    let ul_residuals: Vec<f64> = (0..s.k_ul())
        .map(|i| {
            let g = grad_ul[i];
            let at_hi = log_ul[i] >= s.p_ul_max.ln() - tol;
            let at_lo = log_ul[i] <= s.p0_ul[i].ln() + tol;
            if at_hi {
                (-g).max(0.0)
            } else if at_lo {
                g.max(0.0)
            } else {
                g.abs()
            }
        })
        .collect();

    let budget_active = p.p_dl.iter().sum::<f64>() >= s.p_dl_tot * (1.0 - 1e-9);
    let interior: Vec<usize> = (0..s.k_dl())
        .filter(|&j| p.p_dl[j] > s.p0_dl[j] * (1.0 + 1e-9))
        .collect();
    let nu = if !budget_active {
        0.0
    } else if interior.is_empty() {
        (0..s.k_dl())
            .map(|j| e.q_dl[j] / p.p_dl[j])
            .fold(0.0, f64::max)
    } else {
        // least-squares fit of q_j = nu * p_j over interior coordinates
        let num: f64 = interior.iter().map(|&j| e.q_dl[j] * p.p_dl[j]).sum();
        let den: f64 = interior.iter().map(|&j| p.p_dl[j] * p.p_dl[j]).sum();
        num / den
    };
    let dl_residuals: Vec<f64> = (0..s.k_dl())
        .map(|j| {
            let r = e.q_dl[j] - nu * p.p_dl[j];
            if interior.contains(&j) {
                r.abs()
            } else {
                r.max(0.0)
            }
        })
        .collect();

    let max_residual = ul_residuals
        .iter()
        .chain(dl_residuals.iter())
        .fold(0.0f64, |a, &b| a.max(b));
    KktReport {
        max_residual,
        ul_residuals,
        dl_residuals,
        nu,
    }
}

/// Upper bound on the duality gap at `p`: the dual function evaluated at
/// the recovered prices (rate subproblem and downlink subproblem exactly,
/// uplink subproblem bounded over its box) minus the achieved utility.
/// Nonnegative up to roundoff; tiny at an optimum.
pub fn duality_gap(s: &Scenario, utils: &UtilitySet, p: &PowerAllocation) -> f64 {
    let log_ul = p.log_ul();
    let log_dl = p.log_dl();
    let e = evaluate(s, utils, &log_ul, &log_dl);
    let mf = s.m as f64;

    // rate subproblem: maximized exactly at the achieved rates since the
    // prices are the marginal utilities there
    let b_star: f64 = utils
        .ul
        .iter()
        .zip(&e.r_ul)
        .zip(&e.q_ul)
        .map(|((u, &r), &q)| u.value(r) - q * r)
        .chain(
            utils
                .dl
                .iter()
                .zip(&e.r_dl)
                .zip(&e.q_dl)
                .map(|((u, &r), &q)| u.value(r) - q * r),
        )
        .sum();

    // downlink subproblem: water-filling p_j = max(p0_j, q_j / lambda)
    let wf = |lambda: f64| -> Vec<f64> {
        (0..s.k_dl())
            .map(|j| (e.q_dl[j] / lambda).max(s.p0_dl[j]))
            .collect()
    };
    let q_sum: f64 = e.q_dl.iter().sum();
    let mut lam_lo = q_sum / s.p_dl_tot;
    while wf(lam_lo).iter().sum::<f64>() < s.p_dl_tot {
        lam_lo *= 0.5;
    }
    let mut lam_hi = lam_lo;
    while wf(lam_hi).iter().sum::<f64>() > s.p_dl_tot {
        lam_hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lam_lo + lam_hi);
        if wf(mid).iter().sum::<f64>() > s.p_dl_tot {
            lam_lo = mid;
        } else {
            lam_hi = mid;
        }
    }
    let p_wf = wf(0.5 * (lam_lo + lam_hi));
    let v_dl_star: f64 = (0..s.k_dl())
        .map(|j| e.q_dl[j] * ((mf * s.g_dl[j]).ln() + p_wf[j].ln()))
        .sum();

    // uplink subproblem: value at p plus the best linearized improvement
    // over the box (zero at a KKT point)
    let v_ul_at: f64 = (0..s.k_ul())
        .map(|i| e.q_ul[i] * ((mf * s.g_ul[i]).ln() + log_ul[i]))
        .sum::<f64>()
        - (0..s.k_dl())
            .map(|j| e.q_dl[j] * e.in_dl[j].ln())
            .sum::<f64>();
    let (grad_vul, _) = hs_gradient(s, utils, &log_ul, &log_dl);
    let slack: f64 = (0..s.k_ul())
        .map(|i| {
            let g = grad_vul[i];
            if g > 0.0 {
                g * (s.p_ul_max.ln() - log_ul[i])
            } else {
                g * (s.p0_ul[i].ln() - log_ul[i])
            }
        })
        .sum();
    let v_ul_upper = v_ul_at + slack;

    let n0_term: f64 = e.q_ul.iter().sum::<f64>() * s.n0.ln();
    let d_upper = b_star + v_ul_upper + v_dl_star - n0_term;
    let f_at = hs_objective(s, utils, &log_ul, &log_dl);
    d_upper - f_at
}

/// Exact downlink allocation maximizing the downlink utilities for fixed
/// uplink powers: dual bisection on the budget multiplier with an inner
/// bisection per user. Used as the naive-scheme baseline and as the
/// solver's warm start.
pub fn optimize_dl_given_ul(s: &Scenario, utils: &UtilitySet, p_ul: &[f64]) -> Vec<f64> {
    let mf = s.m as f64;
    let b: Vec<f64> = (0..s.k_dl())
        .map(|j| mf * s.g_dl[j] / s.interference_plus_noise(p_ul, j))
        .collect();

    // p_j(nu): the power where the marginal utility of user j equals
    // nu * p_j, clamped to its lower bound; decreasing in nu
    let p_of_nu = |nu: f64| -> Vec<f64> {
        (0..s.k_dl())
            .map(|j| {
                let u = &utils.dl[j];
                // solve U'(ln(b_j p)) = nu * p in t = ln p
                let t_min = -b[j].ln();
                let mut t_lo = t_min + 1e-12 * t_min.abs().max(1.0);
                let mut t_hi = s.p_dl_tot.ln();
                let h = |t: f64| u.derivative(b[j].ln() + t) - nu * t.exp();
                if h(t_hi) >= 0.0 {
                    // marginal utility still above the price at full budget
                    return s.p_dl_tot.max(s.p0_dl[j]);
                }
                if h(t_lo) <= 0.0 {
                    return s.p0_dl[j];
                }
                for _ in 0..100 {
                    let mid = 0.5 * (t_lo + t_hi);
                    if h(mid) > 0.0 {
                        t_lo = mid;
                    } else {
                        t_hi = mid;
                    }
                }
                (0.5 * (t_lo + t_hi)).exp().max(s.p0_dl[j])
            })
            .collect()
    };

    let total = |p: &[f64]| p.iter().sum::<f64>();
    let mut nu_lo = 1e-12;
    while total(&p_of_nu(nu_lo)) < s.p_dl_tot {
        nu_lo *= 0.5;
        if nu_lo < 1e-300 {
            break;
        }
    }
    let mut nu_hi = nu_lo.max(1e-12);
    while total(&p_of_nu(nu_hi)) > s.p_dl_tot {
        nu_hi *= 2.0;
        assert!(nu_hi < 1e300, "downlink dual bisection failed to bracket");
    }
    for _ in 0..100 {
        let mid = 0.5 * (nu_lo + nu_hi);
        if total(&p_of_nu(mid)) > s.p_dl_tot {
            nu_lo = mid;
        } else {
            nu_hi = mid;
        }
    }
    // return the feasible side and absorb the residual into the largest user
    let mut p = p_of_nu(nu_hi);
    let slack = s.p_dl_tot - total(&p);
    if slack > 0.0 {
        if let Some(j) = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])) {
            p[j] += slack;
        }
    }
    p
}

/// Solve the substituted concave program by projected gradient ascent in
/// log-power space (box clip on the uplink, exact budget projection on
/// the downlink) with Armijo backtracking. Errors if the KKT residual does
/// not reach `params.grad_tol` within `params.max_iters`.
pub fn solve_centralized(
    s: &Scenario,
    utils: &UtilitySet,
    params: &SolverParams,
) -> Result<OracleResult> {
    utils.check_dims(s.k_ul(), s.k_dl())?;
    let lo_ul: Vec<f64> = s.p0_ul.iter().map(|p| p.ln()).collect();
    let hi_ul: Vec<f64> = vec![s.p_ul_max.ln(); s.k_ul()];
    let lo_dl: Vec<f64> = s.p0_dl.iter().map(|p| p.ln()).collect();

    let mut x_ul = hi_ul.clone();
    let p_ul_lin: Vec<f64> = x_ul.iter().map(|x| x.exp()).collect();
    let mut x_dl: Vec<f64> = optimize_dl_given_ul(s, utils, &p_ul_lin)
        .iter()
        .map(|p| p.ln())
        .collect();

    let mut f = hs_objective(s, utils, &x_ul, &x_dl);
    let mut step = params.init_step;
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = params.max_iters;

    let polish = |x_ul: &[f64], x_dl: &mut Vec<f64>| {
        let p_ul_lin: Vec<f64> = x_ul.iter().map(|x| x.exp()).collect();
        *x_dl = optimize_dl_given_ul(s, utils, &p_ul_lin)
            .iter()
            .map(|p| p.ln())
            .collect();
    };

    for iter in 0..params.max_iters {
        if params.dl_polish_every > 0 && iter > 0 && iter % params.dl_polish_every == 0 {
            polish(&x_ul, &mut x_dl);
            f = hs_objective(s, utils, &x_ul, &x_dl);
        }
        if params.track_objective {
            trace.push(f);
        }
        let p = PowerAllocation::from_log(&x_ul, &x_dl);
        residual = kkt_residual(s, utils, &p).max_residual;
        if residual <= params.grad_tol {
            iterations = iter;
            break;
        }

        let (g_ul, g_dl) = hs_gradient(s, utils, &x_ul, &x_dl);
        step = (step * 2.0).min(params.max_step);
        let mut accepted = false;
        // objective evaluations cannot resolve improvements below this
        let noise = 32.0 * f64::EPSILON * f.abs().max(1.0);
        while step >= 1e-18 {
            let mut cand_ul = x_ul
                .iter()
                .zip(&g_ul)
                .map(|(&x, &g)| x + step * g)
                .collect::<Vec<_>>();
            clip_box(&mut cand_ul, &lo_ul, &hi_ul);
            let cand_dl_raw: Vec<f64> = x_dl
                .iter()
                .zip(&g_dl)
                .map(|(&x, &g)| x + step * g)
                .collect();
            let cand_dl = project_simplex_log(&cand_dl_raw, &lo_dl, s.p_dl_tot);

            let move_dot: f64 = g_ul
                .iter()
                .zip(cand_ul.iter().zip(&x_ul))
                .map(|(&g, (&c, &x))| g * (c - x))
                .chain(
                    g_dl.iter()
                        .zip(cand_dl.iter().zip(&x_dl))
                        .map(|(&g, (&c, &x))| g * (c - x)),
                )
                .sum();
            if move_dot <= 0.0 {
                break; // stationary up to projection
            }
            let f_cand = hs_objective(s, utils, &cand_ul, &cand_dl);
            let sufficient = f_cand >= f + params.armijo_slope * move_dot;
            // sub-noise moves stay accepted at a unit step: the plain
            // projection map still contracts onto the optimum there
            let below_noise = move_dot <= noise && step <= 1.0;
            if sufficient || below_noise {
                x_ul = cand_ul;
                x_dl = cand_dl;
                f = f_cand;
                accepted = true;
                break;
            }
            step *= params.armijo_shrink;
        }
        if !accepted {
            // line search exhausted at numerical precision; polish the
            // downlink block exactly and re-check
            polish(&x_ul, &mut x_dl);
            let p = PowerAllocation::from_log(&x_ul, &x_dl);
            residual = kkt_residual(s, utils, &p).max_residual;
            iterations = iter + 1;
            break;
        }
    }

    if residual > params.grad_tol {
        return Err(Error::DidNotConverge {
            iterations,
            residual,
        });
    }

    let p_star = PowerAllocation::from_log(&x_ul, &x_dl);
    let utility_star = s.sum_utility(utils, &p_star, RateMode::HighSnr)?;
    let gap = duality_gap(s, utils, &p_star);
    Ok(OracleResult {
        p_star,
        utility_star,
        grad_norm: residual,
        duality_gap: gap,
        iterations,
        objective_trace: trace,
    })
}

/// Exhaustive log-spaced grid search over the feasible box/simplex for
/// instances with at most four users total. Downlink grid points are also
/// rescaled onto the budget face so the budget-binding optimum is covered.
pub fn brute_force_grid(
    s: &Scenario,
    utils: &UtilitySet,
    points_per_dim: usize,
) -> Result<(PowerAllocation, f64)> {
    if s.k_ul() + s.k_dl() > 4 {
        return Err(Error::DimensionGuard(format!(
            "brute force limited to 4 users total, got {}x{}",
            s.k_ul(),
            s.k_dl()
        )));
    }
    if points_per_dim < 2 {
        return Err(Error::InvalidConfig("need at least 2 grid points".into()));
    }
    let n = points_per_dim;
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        let (llo, lhi) = (lo.ln(), hi.ln());
        (0..n)
            .map(|k| (llo + (lhi - llo) * k as f64 / (n - 1) as f64).exp())
            .collect()
    };
    let ul_grids: Vec<Vec<f64>> = (0..s.k_ul())
        .map(|i| grid(s.p0_ul[i], s.p_ul_max))
        .collect();
    let lo_sum: f64 = s.p0_dl.iter().sum();
    let dl_grids: Vec<Vec<f64>> = (0..s.k_dl())
        .map(|j| {
            grid(
                s.p0_dl[j],
                (s.p_dl_tot - (lo_sum - s.p0_dl[j])).max(s.p0_dl[j] * (1.0 + 1e-9)),
            )
        })
        .collect();

    let dims = s.k_ul() + s.k_dl();
    let mut idx = vec![0usize; dims];
    let mut best: Option<(PowerAllocation, f64)> = None;
    let consider = |p: PowerAllocation, best: &mut Option<(PowerAllocation, f64)>| {
        if let Ok(u) = s.sum_utility(utils, &p, RateMode::HighSnr) {
            if best.as_ref().is_none_or(|(_, b)| u > *b) {
                *best = Some((p, u));
            }
        }
    };
    loop {
        let p_ul: Vec<f64> = (0..s.k_ul()).map(|i| ul_grids[i][idx[i]]).collect();
        let p_dl: Vec<f64> = (0..s.k_dl())
            .map(|j| dl_grids[j][idx[s.k_ul() + j]])
            .collect();
        let dl_sum: f64 = p_dl.iter().sum();
        if dl_sum <= s.p_dl_tot * (1.0 + 1e-12) {
            consider(PowerAllocation::new(p_ul.clone(), p_dl.clone()), &mut best);
        }
        // rescale the excess above the lower bounds onto the budget face
        if dl_sum > lo_sum {
            let scale = (s.p_dl_tot - lo_sum) / (dl_sum - lo_sum);
            if scale > 0.0 {
                let p_face: Vec<f64> = p_dl
                    .iter()
                    .zip(&s.p0_dl)
                    .map(|(&p, &l)| l + (p - l) * scale)
                    .collect();
                consider(PowerAllocation::new(p_ul, p_face), &mut best);
            }
        }
        // advance the mixed-radix counter
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == dims {
                let (p, u) = best
                    .ok_or_else(|| Error::InvalidConfig("no feasible grid point found".into()))?;
                return Ok((p, u));
            }
        }
    }
}

/// Lipschitz-type bound on the utility loss of the best grid point versus
/// the true optimum, for [`brute_force_grid`] with the same resolution.
pub fn grid_gap_bound(s: &Scenario, utils: &UtilitySet, points_per_dim: usize) -> f64 {
    let n = (points_per_dim - 1).max(1) as f64;
    // marginal utilities are largest at the smallest feasible rate; a
    // conservative floor of ln 2 nats covers every valid scenario
    let q_max = |u: &crate::utility::UtilityFn| u.derivative(std::f64::consts::LN_2);
    let q_ul: Vec<f64> = utils.ul.iter().map(q_max).collect();
    let q_dl: Vec<f64> = utils.dl.iter().map(q_max).collect();
    let mut bound = 0.0;
    for (i, q) in q_ul.iter().enumerate() {
        let h = (s.p_ul_max.ln() - s.p0_ul[i].ln()) / n;
        let lipschitz = q + s.nbr_of_ul[i].iter().map(|&j| q_dl[j]).sum::<f64>();
        bound += 0.5 * h * lipschitz;
    }
    let lo_sum: f64 = s.p0_dl.iter().sum();
    for (j, q) in q_dl.iter().enumerate() {
        let hi = (s.p_dl_tot - (lo_sum - s.p0_dl[j])).max(s.p0_dl[j] * (1.0 + 1e-9));
        let h = (hi.ln() - s.p0_dl[j].ln()) / n;
        bound += 0.5 * h * q;
    }
    bound
}
