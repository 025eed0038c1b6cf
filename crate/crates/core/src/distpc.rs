//! Distributed price/power control.
//!
//! Synchronized rounds: the base station updates downlink powers along
//! the downlink prices, uplink users update their powers along their own
//! price minus the price-weighted interference they cause, and every link
//! updates its price toward the gap between its target rate (from the
//! inverse marginal utility) and its achieved log-SINR. All updates read
//! the previous round's state, so per-user updates commute.

use serde::{Deserialize, Serialize};

use crate::model::{PowerAllocation, RateMode, Scenario};
use crate::projection::{project_simplex_linear, project_simplex_log};
use crate::utility::UtilitySet;
use crate::{Error, Result};

/// Which space the downlink budget projection runs in.
///
/// `LogDomain` projects the log-power iterate onto the feasible set in
/// log space, which is the space the gradient step is taken in; its fixed
/// points are exactly the optimality conditions. `LinearDomain`
/// exponentiates, clips at the lower bounds and applies the
/// sorted-threshold projection in watts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DlProjection {
    LogDomain,
    LinearDomain,
}

/// Step size and termination controls for [`run`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgoParams {
    /// Gradient step size.
    pub gamma: f64,
    pub max_iters: usize,
    /// Relative utility spread over the stop window that counts as
    /// converged.
    pub stop_tol: f64,
    pub stop_window: usize,
    /// Price floor standing in for zero initialization; keeps inverse
    /// marginal utilities finite.
    pub q_min: f64,
    /// Cap on the target rate in nats.
    pub r_max: f64,
    pub dl_projection: DlProjection,
}

impl Default for AlgoParams {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            max_iters: 5000,
            stop_tol: 1e-9,
            stop_window: 50,
            q_min: 1e-8,
            r_max: 50.0,
            dl_projection: DlProjection::LogDomain,
        }
    }
}

impl AlgoParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive and finite, got {}",
                self.gamma
            )));
        }
        if self.q_min <= 0.0 || !self.q_min.is_finite() {
            return Err(Error::InvalidConfig("q_min must be positive".into()));
        }
        if self.r_max <= 0.0 || !self.r_max.is_finite() {
            return Err(Error::InvalidConfig("r_max must be positive".into()));
        }
        if self.max_iters == 0 || self.stop_window == 0 {
            return Err(Error::InvalidConfig(
                "max_iters and stop_window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub sum_utility: f64,
    /// Distance to the reference optimal utility, when one was supplied.
    pub eps: Option<f64>,
    pub p_ul: Vec<f64>,
    pub p_dl: Vec<f64>,
    pub q_ul: Vec<f64>,
    pub q_dl: Vec<f64>,
}

/// Full algorithm state at some round `t`.
#[derive(Debug, Clone)]
pub struct AlgoState {
    pub t: usize,
    pub q_ul: Vec<f64>,
    pub q_dl: Vec<f64>,
    pub log_p_ul: Vec<f64>,
    pub log_p_dl: Vec<f64>,
    /// Interference-plus-noise as measured by each downlink user during
    /// round `t` (the initialization round reports the noise floor).
    pub in_dl: Vec<f64>,
    /// Target rates from the inverse marginal utilities at the current
    /// prices.
    pub r_ul: Vec<f64>,
    pub r_dl: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

impl AlgoState {
    pub fn powers(&self) -> PowerAllocation {
        PowerAllocation::from_log(&self.log_p_ul, &self.log_p_dl)
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Converged { iterations: usize },
    MaxIters,
    Unstable { gamma: f64, reason: String },
}

impl Outcome {
    pub fn is_converged(&self) -> bool {
        matches!(self, Outcome::Converged { .. })
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: AlgoState,
    pub outcome: Outcome,
}

/// Interference metric carried by the feedback protocol: the sender's
/// price divided by its interference-plus-noise, scaled by the channel
/// gain toward the overhearing uplink user. The operation order here is
/// shared with the protocol path so both produce identical floats.
pub fn in_metric(q_dl_j: f64, g_ij: f64, in_j: f64) -> f64 {
    (q_dl_j / in_j) * g_ij
}

/// Per-uplink-user interference metrics for one round, keyed by the
/// interfered downlink user.
#[derive(Debug, Clone, Default)]
pub struct MetricTable {
    per_ul: Vec<Vec<(usize, f64)>>,
}

impl MetricTable {
    pub fn new(k_ul: usize) -> Self {
        Self {
            per_ul: vec![Vec::new(); k_ul],
        }
    }

    pub fn insert(&mut self, i: usize, j: usize, m: f64) {
        self.per_ul[i].push((j, m));
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.per_ul[i]
            .iter()
            .find(|(jj, _)| *jj == j)
            .map(|(_, m)| *m)
    }
}

/// Everything a round reads from the previous round, gathered either
/// directly from the model or through the feedback protocol.
#[derive(Debug, Clone)]
pub struct RoundInputs {
    pub ul_sinr: Vec<f64>,
    pub dl_sinr: Vec<f64>,
    pub metrics: MetricTable,
}

/// Initial state: maximum uplink power, an even downlink split, floored
/// prices and the noise floor as the interference measurement.
pub fn init(s: &Scenario) -> AlgoState {
    init_with(s, &AlgoParams::default())
}

/// [`init`] with the run's own price floor and rate cap.
pub fn init_with(s: &Scenario, params: &AlgoParams) -> AlgoState {
    let k_ul = s.k_ul();
    let k_dl = s.k_dl();
    let even = (s.p_dl_tot / k_dl as f64).ln();
    AlgoState {
        t: 0,
        q_ul: vec![params.q_min; k_ul],
        q_dl: vec![params.q_min; k_dl],
        log_p_ul: vec![s.p_ul_max.ln(); k_ul],
        log_p_dl: vec![even; k_dl],
        in_dl: vec![s.n0; k_dl],
        r_ul: vec![params.r_max; k_ul],
        r_dl: vec![params.r_max; k_dl],
        trace: Vec::new(),
    }
}

/// Downlink power update at the base station: a step along the downlink
/// prices in log-power space, then projection back onto the budget set.
pub fn dl_power_step(state: &AlgoState, s: &Scenario, params: &AlgoParams) -> Vec<f64> {
    let y: Vec<f64> = state
        .log_p_dl
        .iter()
        .zip(&state.q_dl)
        .map(|(&x, &q)| x + params.gamma * q)
        .collect();
    let log_lo: Vec<f64> = s.p0_dl.iter().map(|p| p.ln()).collect();
    match params.dl_projection {
        DlProjection::LogDomain => project_simplex_log(&y, &log_lo, s.p_dl_tot),
        DlProjection::LinearDomain => {
            let mut lin: Vec<f64> = y.iter().map(|x| x.exp()).collect();
            for (p, &lo) in lin.iter_mut().zip(&s.p0_dl) {
                *p = p.max(lo);
            }
            if lin.iter().sum::<f64>() > s.p_dl_tot {
                lin = project_simplex_linear(&lin, &s.p0_dl, s.p_dl_tot);
            }
            lin.iter().map(|p| p.ln()).collect()
        }
    }
}

/// Uplink power update at each user: own price minus the overheard
/// price-weighted interference terms, clipped to the power box. Errors if
/// a metric for some neighbor was not delivered.
pub fn ul_power_step(
    state: &AlgoState,
    s: &Scenario,
    params: &AlgoParams,
    metrics: &MetricTable,
) -> Result<Vec<f64>> {
    (0..s.k_ul())
        .map(|i| {
            let p_i = state.log_p_ul[i].exp();
            let mut pull = 0.0;
            for &j in &s.nbr_of_ul[i] {
                let m = metrics.get(i, j).ok_or(Error::MissingMetric { i, j })?;
                pull += m * p_i;
            }
            let g = state.q_ul[i] - pull;
            let lo = s.p0_ul[i].ln();
            let hi = s.p_ul_max.ln();
            Ok((state.log_p_ul[i] + params.gamma * g).clamp(lo, hi))
        })
        .collect()
}

/// Price update with explicitly supplied previous-round SINRs.
pub fn price_step_with(
    state: &AlgoState,
    utils: &UtilitySet,
    params: &AlgoParams,
    ul_sinr: &[f64],
    dl_sinr: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let update = |q: f64, u: &crate::utility::UtilityFn, sinr: f64| -> f64 {
        let r = u.inv_derivative(q).min(params.r_max);
        (q + params.gamma * (r - sinr.ln())).max(params.q_min)
    };
    let q_ul = state
        .q_ul
        .iter()
        .zip(&utils.ul)
        .zip(ul_sinr)
        .map(|((&q, u), &sinr)| update(q, u, sinr))
        .collect();
    let q_dl = state
        .q_dl
        .iter()
        .zip(&utils.dl)
        .zip(dl_sinr)
        .map(|((&q, u), &sinr)| update(q, u, sinr))
        .collect();
    (q_ul, q_dl)
}

/// Price update reading the model-computed SINRs at the state's powers.
pub fn price_step(
    state: &AlgoState,
    s: &Scenario,
    utils: &UtilitySet,
    params: &AlgoParams,
) -> (Vec<f64>, Vec<f64>) {
    let inputs = direct_inputs(s, state);
    price_step_with(state, utils, params, &inputs.ul_sinr, &inputs.dl_sinr)
}

/// Gather round inputs straight from the model: true SINRs at the current
/// powers (using the stored interference measurements) and the metric
/// table evaluated from the current prices.
pub fn direct_inputs(s: &Scenario, state: &AlgoState) -> RoundInputs {
    let ul_sinr = (0..s.k_ul())
        .map(|i| s.uplink_sinr(state.log_p_ul[i].exp(), i))
        .collect();
    let dl_sinr = (0..s.k_dl())
        .map(|j| s.downlink_sinr_with_in(state.log_p_dl[j].exp(), state.in_dl[j], j))
        .collect();
    let mut metrics = MetricTable::new(s.k_ul());
    for i in 0..s.k_ul() {
        for &j in &s.nbr_of_ul[i] {
            metrics.insert(i, j, in_metric(state.q_dl[j], s.g_i[i][j], state.in_dl[j]));
        }
    }
    RoundInputs {
        ul_sinr,
        dl_sinr,
        metrics,
    }
}

/// One synchronous round: power updates, price updates, then fresh
/// interference measurements at the new powers. Everything reads the
/// previous round's state.
pub fn advance_round(
    s: &Scenario,
    utils: &UtilitySet,
    params: &AlgoParams,
    state: &AlgoState,
    inputs: &RoundInputs,
) -> Result<AlgoState> {
    let log_p_dl = dl_power_step(state, s, params);
    let log_p_ul = ul_power_step(state, s, params, &inputs.metrics)?;
    let (q_ul, q_dl) = price_step_with(state, utils, params, &inputs.ul_sinr, &inputs.dl_sinr);

    let p_ul: Vec<f64> = log_p_ul.iter().map(|x| x.exp()).collect();
    let in_dl: Vec<f64> = (0..s.k_dl())
        .map(|j| s.interference_plus_noise(&p_ul, j))
        .collect();
    let r_ul = q_ul
        .iter()
        .zip(&utils.ul)
        .map(|(&q, u)| u.inv_derivative(q).min(params.r_max))
        .collect();
    let r_dl = q_dl
        .iter()
        .zip(&utils.dl)
        .map(|(&q, u)| u.inv_derivative(q).min(params.r_max))
        .collect();

    Ok(AlgoState {
        t: state.t + 1,
        q_ul,
        q_dl,
        log_p_ul,
        log_p_dl,
        in_dl,
        r_ul,
        r_dl,
        trace: Vec::new(),
    })
}

fn trace_row(
    s: &Scenario,
    utils: &UtilitySet,
    state: &AlgoState,
    oracle_utility: Option<f64>,
) -> Result<TraceRow> {
    let p = state.powers();
    let sum_utility = s.sum_utility(utils, &p, RateMode::HighSnr)?;
    Ok(TraceRow {
        iter: state.t,
        sum_utility,
        eps: oracle_utility.map(|u| (sum_utility - u).abs()),
        p_ul: p.p_ul,
        p_dl: p.p_dl,
        q_ul: state.q_ul.clone(),
        q_dl: state.q_dl.clone(),
    })
}

/// Detects period-2 oscillation pinned at a power bound.
struct OscillationDetector {
    prev: Vec<Vec<f64>>,
    streak: usize,
}

impl OscillationDetector {
    fn new() -> Self {
        Self {
            prev: Vec::new(),
            streak: 0,
        }
    }

    fn near(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    /// Feed the concatenated log-power vector for round `t` together with
    /// per-coordinate bound flags; returns the current streak length.
    fn push(&mut self, x: Vec<f64>, at_bound: &[bool]) -> usize {
        if self.prev.len() == 2 {
            let two_ago = &self.prev[0];
            let one_ago = &self.prev[1];
            let oscillating = x.iter().enumerate().any(|(k, &v)| {
                at_bound[k] && Self::near(v, two_ago[k], 1e-12) && !Self::near(v, one_ago[k], 1e-9)
            });
            if oscillating {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
            self.prev.remove(0);
        }
        self.prev.push(x);
        self.streak
    }
}

/// Run the synchronous iteration until the utility settles, the iteration
/// budget runs out, or an instability is detected. When a reference
/// optimal utility is supplied, the trace records the per-iteration
/// distance to it and a feasible-point sanity bound is enforced.
pub fn run(
    s: &Scenario,
    utils: &UtilitySet,
    params: &AlgoParams,
    oracle_utility: Option<f64>,
) -> Result<RunResult> {
    run_with(s, utils, params, oracle_utility, |state| {
        Ok(direct_inputs(s, state))
    })
}

/// [`run`] with a caller-supplied round-input source; the protocol layer
/// uses this to feed overheard values through the same loop.
pub fn run_with<F>(
    s: &Scenario,
    utils: &UtilitySet,
    params: &AlgoParams,
    oracle_utility: Option<f64>,
    mut inputs_for: F,
) -> Result<RunResult>
where
    F: FnMut(&AlgoState) -> Result<RoundInputs>,
{
    params.validate()?;
    utils.check_dims(s.k_ul(), s.k_dl())?;

    let mut state = init_with(s, params);
    state.trace = vec![trace_row(s, utils, &state, oracle_utility)?];
    let mut window: Vec<f64> = vec![state.trace[0].sum_utility];
    let mut osc = OscillationDetector::new();
    let mut outcome = Outcome::MaxIters;

    for _ in 1..=params.max_iters {
        let inputs = inputs_for(&state)?;
        let mut next = advance_round(s, utils, params, &state, &inputs)?;
        next.trace = std::mem::take(&mut state.trace);
        let row = trace_row(s, utils, &next, oracle_utility)?;
        let u = row.sum_utility;
        next.trace.push(row);
        state = next;

        debug_assert!(state.powers().is_feasible(s, 1e-9));

        if let Some(u_star) = oracle_utility {
            if u > u_star + 1e-6 * u_star.abs().max(1e-12) {
                outcome = Outcome::Unstable {
                    gamma: params.gamma,
                    reason: format!(
                        "feasible-point utility {u} exceeds the reference optimum {u_star}"
                    ),
                };
                break;
            }
        }

        let budget_active =
            state.log_p_dl.iter().map(|v| v.exp()).sum::<f64>() >= s.p_dl_tot * (1.0 - 1e-9);
        let at_bound: Vec<bool> = state
            .log_p_ul
            .iter()
            .enumerate()
            .map(|(i, &x)| x <= s.p0_ul[i].ln() + 1e-9 || x >= s.p_ul_max.ln() - 1e-9)
            .chain(
                state
                    .log_p_dl
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| x <= s.p0_dl[j].ln() + 1e-9 || budget_active),
            )
            .collect();
        let x_all: Vec<f64> = state
            .log_p_ul
            .iter()
            .chain(state.log_p_dl.iter())
            .copied()
            .collect();
        if osc.push(x_all, &at_bound) > 100 {
            outcome = Outcome::Unstable {
                gamma: params.gamma,
                reason: "period-2 power oscillation at a bound for over 100 rounds".into(),
            };
            break;
        }

        window.push(u);
        if window.len() > params.stop_window + 1 {
            window.remove(0);
        }
        if window.len() == params.stop_window + 1 {
            let hi = window.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lo = window.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            if hi - lo <= params.stop_tol * u.abs().max(1e-12) {
                outcome = Outcome::Converged {
                    iterations: state.t,
                };
                break;
            }
        }
    }

    // a budget exhausted inside a sustained limit cycle is an instability;
    // a still-rising monotone tail is just slow convergence
    if outcome == Outcome::MaxIters
        && tail_oscillation(&state.trace, 0.1) > 1e-6
        && tail_alternation(&state.trace, 0.1) > 0.25
    {
        outcome = Outcome::Unstable {
            gamma: params.gamma,
            reason: format!(
                "utility still oscillating at {:.3e} relative after {} rounds",
                tail_oscillation(&state.trace, 0.1),
                params.max_iters
            ),
        };
    }

    Ok(RunResult { state, outcome })
}

/// Fraction of successive utility steps that flip sign over the trailing
/// part of a trace; near 1 inside a limit cycle, near 0 on a monotone
/// approach.
pub fn tail_alternation(trace: &[TraceRow], fraction: f64) -> f64 {
    if trace.len() < 3 {
        return 0.0;
    }
    let start = ((trace.len() as f64) * (1.0 - fraction)) as usize;
    let tail: Vec<f64> = trace[start.min(trace.len() - 3)..]
        .iter()
        .map(|r| r.sum_utility)
        .collect();
    let mut flips = 0usize;
    let mut steps = 0usize;
    for w in tail.windows(3) {
        let d1 = w[1] - w[0];
        let d2 = w[2] - w[1];
        if d1 != 0.0 && d2 != 0.0 {
            steps += 1;
            if (d1 > 0.0) != (d2 > 0.0) {
                flips += 1;
            }
        }
    }
    if steps == 0 {
        0.0
    } else {
        flips as f64 / steps as f64
    }
}

/// Relative peak-to-peak utility oscillation over the trailing fraction
/// of a trace.
pub fn tail_oscillation(trace: &[TraceRow], fraction: f64) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let start = ((trace.len() as f64) * (1.0 - fraction)) as usize;
    let tail = &trace[start.min(trace.len() - 1)..];
    let hi = tail
        .iter()
        .map(|r| r.sum_utility)
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = tail
        .iter()
        .map(|r| r.sum_utility)
        .fold(f64::INFINITY, f64::min);
    let last = trace.last().unwrap().sum_utility;
    (hi - lo) / last.abs().max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{db_to_linear, dbm_to_watts};
    use crate::oracle::{optimize_dl_given_ul, solve_centralized, SolverParams};
    use crate::utility::UtilityFn;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-30)
    }

    fn decoupled_scenario() -> Scenario {
        // rates of a few nats each: the default step size is stable here
        Scenario::new(
            128,
            vec![db_to_linear(-50.0), db_to_linear(-52.0)],
            vec![
                db_to_linear(-60.0),
                db_to_linear(-63.0),
                db_to_linear(-57.0),
            ],
            vec![vec![0.0; 3]; 2],
            1e-5,
            dbm_to_watts(23.0),
            dbm_to_watts(45.0),
            10.0,
            db_to_linear(-100.0),
        )
        .unwrap()
    }

    fn pf(s: &Scenario) -> UtilitySet {
        UtilitySet::uniform(UtilityFn::log(1.0), UtilityFn::log(1.0), s.k_ul(), s.k_dl())
    }

    #[test]
    fn init_matches_construction() {
        let s = Scenario::new(
            128,
            vec![1e-5; 2],
            vec![1e-6; 4],
            vec![vec![0.0; 4]; 2],
            1e-7,
            dbm_to_watts(23.0),
            dbm_to_watts(45.0),
            10.0,
            0.0,
        )
        .unwrap();
        let st = init(&s);
        let p = st.powers();
        for &pj in &p.p_dl {
            assert!(close(pj, 31.6227766 / 4.0, 1e-6));
            assert!(close(pj, 7.9056941, 1e-6));
        }
        assert!(close(p.p_dl.iter().sum::<f64>(), s.p_dl_tot, 1e-12));
        assert!(st.q_ul.iter().chain(&st.q_dl).all(|&q| q == 1e-8));
        assert_eq!(st.in_dl, vec![s.n0; 4]);
    }

    #[test]
    fn dl_step_with_floored_prices_barely_moves() {
        let s = decoupled_scenario();
        let st = init(&s);
        let params = AlgoParams::default();
        let new = dl_power_step(&st, &s, &params);
        for (a, b) in new.iter().zip(&st.log_p_dl) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dl_step_grows_priced_user_and_rescales() {
        let s = decoupled_scenario();
        let mut st = init(&s);
        st.q_dl = vec![1.0, 1e-8, 1e-8];
        let params = AlgoParams {
            gamma: 0.1,
            ..AlgoParams::default()
        };
        for projection in [DlProjection::LogDomain, DlProjection::LinearDomain] {
            let p = AlgoParams {
                dl_projection: projection,
                ..params.clone()
            };
            let new = dl_power_step(&st, &s, &p);
            let new_lin: Vec<f64> = new.iter().map(|x| x.exp()).collect();
            assert!(new_lin[0] > st.log_p_dl[0].exp());
            assert!(new_lin[1] < st.log_p_dl[1].exp());
            assert!(close(new_lin.iter().sum::<f64>(), s.p_dl_tot, 1e-9));
        }
    }

    #[test]
    fn dl_linear_projection_subtracts_common_shift() {
        // hand evaluation: grow user 0 by e^(0.1), then shift everyone
        // down equally to restore the budget
        let s = decoupled_scenario();
        let mut st = init(&s);
        st.q_dl = vec![1.0, 1e-8, 1e-8];
        let params = AlgoParams {
            gamma: 0.1,
            dl_projection: DlProjection::LinearDomain,
            ..AlgoParams::default()
        };
        let even = s.p_dl_tot / 3.0;
        let grown = even * 0.1f64.exp();
        let theta = (grown + 2.0 * even * (0.1 * 1e-8f64).exp() - s.p_dl_tot) / 3.0;
        let new: Vec<f64> = dl_power_step(&st, &s, &params)
            .iter()
            .map(|x| x.exp())
            .collect();
        assert!(close(new[0], grown - theta, 1e-9));
        assert!(close(new[1], even * (0.1 * 1e-8f64).exp() - theta, 1e-9));
    }

    #[test]
    fn single_dl_user_stays_at_budget() {
        let s = Scenario::new(
            128,
            vec![1e-5],
            vec![1e-6],
            vec![vec![0.0]],
            1e-7,
            dbm_to_watts(23.0),
            dbm_to_watts(45.0),
            10.0,
            0.0,
        )
        .unwrap();
        let mut st = init(&s);
        st.q_dl = vec![0.3];
        let new = dl_power_step(&st, &s, &AlgoParams::default());
        assert!(close(new[0].exp(), s.p_dl_tot, 1e-9));
    }

    #[test]
    fn ul_step_hand_values() {
        let s = Scenario::new(
            128,
            vec![1e-5],
            vec![1e-6],
            vec![vec![db_to_linear(-60.0)]],
            1e-7,
            dbm_to_watts(30.0), // 1 W cap so 0.3 W sits inside the box
            dbm_to_watts(45.0),
            10.0,
            db_to_linear(-100.0),
        )
        .unwrap();
        let mut st = init(&s);
        st.log_p_ul = vec![0.3f64.ln()];
        st.q_ul = vec![1.0];
        let mut metrics = MetricTable::new(1);
        metrics.insert(0, 0, 5.0);
        let params = AlgoParams {
            gamma: 0.1,
            ..AlgoParams::default()
        };
        let new = ul_power_step(&st, &s, &params, &metrics).unwrap();
        // increment = 0.1 * (1 - 5 * 0.3) = -0.05
        assert!(close(new[0] - st.log_p_ul[0], -0.05, 1e-12));
    }

    #[test]
    fn ul_step_missing_metric_errors() {
        let s = Scenario::new(
            128,
            vec![1e-5],
            vec![1e-6],
            vec![vec![db_to_linear(-60.0)]],
            1e-7,
            dbm_to_watts(23.0),
            dbm_to_watts(45.0),
            10.0,
            db_to_linear(-100.0),
        )
        .unwrap();
        let st = init(&s);
        let metrics = MetricTable::new(1);
        assert!(matches!(
            ul_power_step(&st, &s, &AlgoParams::default(), &metrics),
            Err(Error::MissingMetric { i: 0, j: 0 })
        ));
    }

    #[test]
    fn ul_step_pure_ascent_clips_at_cap() {
        let s = decoupled_scenario();
        let mut st = init(&s);
        st.log_p_ul = vec![(0.8 * s.p_ul_max).ln(), (0.8 * s.p_ul_max).ln()];
        st.q_ul = vec![5.0, 5.0];
        let params = AlgoParams {
            gamma: 0.5,
            ..AlgoParams::default()
        };
        let metrics = MetricTable::new(2);
        let new = ul_power_step(&st, &s, &params, &metrics).unwrap();
        for &x in &new {
            assert!(x <= s.p_ul_max.ln() + 1e-15);
        }
        // zero gradient leaves the power unchanged
        let mut st2 = init(&s);
        st2.q_ul = vec![0.0, 0.0];
        st2.log_p_ul = vec![(0.8 * s.p_ul_max).ln(); 2];
        let same = ul_power_step(&st2, &s, &params, &metrics).unwrap();
        assert_eq!(same, st2.log_p_ul);
    }

    #[test]
    fn price_step_hand_values() {
        let s = decoupled_scenario();
        // weight 1.5 puts the target rate at 3 nats when the price is 0.5
        let utils =
            UtilitySet::uniform(UtilityFn::log(1.0), UtilityFn::log(1.5), s.k_ul(), s.k_dl());
        let mut st = init(&s);
        st.q_dl = vec![0.5, 0.5, 0.5];
        let params = AlgoParams {
            gamma: 0.01,
            ..AlgoParams::default()
        };
        let ul_sinr = vec![100.0; 2];
        let dl_sinr = vec![2.0f64.exp(); 3]; // log sinr = 2
        let (_, q_dl) = price_step_with(&st, &utils, &params, &ul_sinr, &dl_sinr);
        for &q in &q_dl {
            assert!(close(q, 0.51, 1e-12));
        }
        // equilibrium: target rate equals achieved log-sinr
        let mut st2 = init(&s);
        st2.q_ul = vec![0.25, 0.25];
        let r = utils.ul[0].inv_derivative(0.25); // 4 nats
        let (q_ul, _) = price_step_with(&st2, &utils, &params, &[r.exp(); 2], &[10.0f64.exp(); 3]);
        assert!(close(q_ul[0], 0.25, 1e-12));
        // downward pressure is floored at q_min
        let mut st3 = init(&s);
        st3.q_ul = vec![1e-8, 1e-8];
        let (q_ul, _) = price_step_with(
            &st3,
            &utils,
            &AlgoParams {
                r_max: 1.0,
                ..params
            },
            &[50.0f64.exp(); 2],
            &[10.0f64.exp(); 3],
        );
        assert_eq!(q_ul, vec![1e-8, 1e-8]);
    }

    #[test]
    fn decoupled_run_converges_to_oracle_split() {
        let s = decoupled_scenario();
        let utils = pf(&s);
        let oracle = solve_centralized(&s, &utils, &SolverParams::default()).unwrap();
        let result = run(
            &s,
            &utils,
            &AlgoParams::default(),
            Some(oracle.utility_star),
        )
        .unwrap();
        assert!(result.outcome.is_converged(), "{:?}", result.outcome);
        let p = result.state.powers();
        for &pi in &p.p_ul {
            assert!(close(pi, s.p_ul_max, 1e-6));
        }
        let dl_opt = optimize_dl_given_ul(&s, &utils, &p.p_ul);
        for (a, b) in p.p_dl.iter().zip(&dl_opt) {
            assert!(close(*a, *b, 1e-3), "{a} vs {b}");
        }
        let final_u = result.state.trace.last().unwrap().sum_utility;
        assert!((final_u - oracle.utility_star).abs() <= 1e-2 * oracle.utility_star.abs());
    }

    #[test]
    fn zero_gamma_is_rejected() {
        let params = AlgoParams {
            gamma: 0.0,
            ..AlgoParams::default()
        };
        assert!(params.validate().is_err());
    }

    #[test]
    fn feasible_at_every_iteration() {
        let s = decoupled_scenario();
        let utils = pf(&s);
        let result = run(&s, &utils, &AlgoParams::default(), None).unwrap();
        for row in &result.state.trace {
            let p = PowerAllocation::new(row.p_ul.clone(), row.p_dl.clone());
            assert!(p.is_feasible(&s, 1e-9), "iter {}", row.iter);
        }
    }

    #[test]
    fn converged_runs_have_quiet_tails() {
        let s = decoupled_scenario();
        let utils = pf(&s);
        let params = AlgoParams::default();
        let result = run(&s, &utils, &params, None).unwrap();
        assert!(result.outcome.is_converged());
        assert!(tail_oscillation(&result.state.trace, 0.1) <= 10.0 * params.stop_tol);
    }

    #[test]
    fn common_utility_scaling_leaves_powers_fixed() {
        // prices scale with the utilities; the converged powers do not
        let s = decoupled_scenario();
        let utils = pf(&s);
        // the utility flattens quadratically in the powers, so both runs
        // get a deep settle budget before their allocations are compared
        let params = AlgoParams {
            max_iters: 30_000,
            stop_tol: 1e-15,
            ..AlgoParams::default()
        };
        let base = run(&s, &utils, &params, None).unwrap();
        let scaled = run(&s, &utils.scaled(2.0), &params, None).unwrap();
        assert!(tail_oscillation(&base.state.trace, 0.05) <= 1e-12);
        assert!(tail_oscillation(&scaled.state.trace, 0.05) <= 1e-12);
        let pa = base.state.powers();
        let pb = scaled.state.powers();
        for (a, b) in pa.p_ul.iter().zip(&pb.p_ul) {
            assert!(close(*a, *b, 1e-6), "ul {a} vs {b}");
        }
        for (a, b) in pa.p_dl.iter().zip(&pb.p_dl) {
            assert!(close(*a, *b, 1e-6), "dl {a} vs {b}");
        }
        let qa = &base.state.q_dl[0];
        let qb = &scaled.state.q_dl[0];
        assert!(
            close(*qb, 2.0 * qa, 1e-4),
            "prices should scale: {qa} vs {qb}"
        );
    }
}
