//! Experiment drivers: interference sweeps, convergence studies and the
//! antenna-scaling study over nested scenario sequences.

use serde::{Deserialize, Serialize};

use crate::distpc::{self, AlgoParams, Outcome, TraceRow};
use crate::model::{db_to_linear, PowerAllocation, RateMode, Scenario};
use crate::oracle::{self, SolverParams};
use crate::utility::{UtilityFn, UtilitySet};
use crate::{Error, Result};

/// Fraction of uplink users transmitting at or below `rho * p_max`.
pub fn theta_fraction(p_ul_star: &[f64], rho: f64, p_max: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "rho must lie strictly between 0 and 1, got {rho}"
        )));
    }
    let count = p_ul_star.iter().filter(|&&p| p <= rho * p_max).count();
    Ok(count as f64 / p_ul_star.len() as f64)
}

/// Fraction of downlink users allocated less than `omega * p_dl_tot /
/// k_dl` — the low-power share the budget argument predicts stays
/// bounded away from zero.
pub fn psi_fraction(p_dl_star: &[f64], omega: f64, p_dl_tot: f64) -> f64 {
    let cutoff = omega * p_dl_tot / p_dl_star.len() as f64;
    let count = p_dl_star.iter().filter(|&&p| p < cutoff).count();
    count as f64 / p_dl_star.len() as f64
}

/// Parameters of a nested scenario sequence: user sets strictly expand
/// level over level, gains are preserved as prefixes, and the antenna
/// count scales as `round(c * k_ul * k_dl)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceParams {
    pub c: f64,
    pub base_k_ul: usize,
    /// Downlink users per uplink user (constant across levels).
    pub dl_per_ul: usize,
    pub levels: usize,
    pub seed: u64,
    pub g_ul_db_range: (f64, f64),
    pub g_dl_db_range: (f64, f64),
    pub g_i_db_range: (f64, f64),
    /// Replace every interference gain with zero (control experiment).
    pub zero_interference: bool,
    pub n0_w: f64,
    pub p_ul_max_w: f64,
    pub p_dl_tot_w: f64,
    pub sigma_min: f64,
    pub neighbor_threshold_db: f64,
}

impl Default for SequenceParams {
    fn default() -> Self {
        Self {
            c: 16.0,
            base_k_ul: 2,
            dl_per_ul: 2,
            levels: 5,
            seed: 1,
            g_ul_db_range: (-65.0, -55.0),
            g_dl_db_range: (-65.0, -55.0),
            g_i_db_range: (-80.0, -60.0),
            zero_interference: false,
            n0_w: 5e-7,
            p_ul_max_w: crate::model::dbm_to_watts(23.0),
            p_dl_tot_w: crate::model::dbm_to_watts(45.0),
            sigma_min: 10.0,
            neighbor_threshold_db: -100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level: usize,
    pub k_ul: usize,
    pub k_dl: usize,
    pub m: usize,
}

/// A lazily-sliced family of strictly nested scenarios: level `l` sees
/// exact bitwise prefixes of the top level's gain pools.
#[derive(Debug, Clone)]
pub struct ScenarioSequence {
    pub params: SequenceParams,
    pub levels: Vec<LevelSpec>,
    g_ul_pool: Vec<f64>,
    g_dl_pool: Vec<f64>,
    g_i_pool: Vec<Vec<f64>>,
}

impl ScenarioSequence {
    pub fn build(params: SequenceParams) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        if params.levels == 0 || params.base_k_ul == 0 || params.dl_per_ul == 0 {
            return Err(Error::InvalidConfig(
                "sequence needs positive levels and user counts".into(),
            ));
        }
        if params.c <= 0.0 || !params.c.is_finite() {
            return Err(Error::InvalidConfig(
                "antenna constant must be positive".into(),
            ));
        }
        let levels: Vec<LevelSpec> = (0..params.levels)
            .map(|l| {
                let k_ul = params.base_k_ul << l;
                let k_dl = k_ul * params.dl_per_ul;
                LevelSpec {
                    level: l + 1,
                    k_ul,
                    k_dl,
                    m: (params.c * k_ul as f64 * k_dl as f64).round() as usize,
                }
            })
            .collect();
        let top = *levels.last().unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
        let draw = |range: (f64, f64), rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            if range.0 == range.1 {
                db_to_linear(range.0)
            } else {
                db_to_linear(rng.gen_range(range.0..range.1))
            }
        };
        let g_ul_pool: Vec<f64> = (0..top.k_ul)
            .map(|_| draw(params.g_ul_db_range, &mut rng))
            .collect();
        let g_dl_pool: Vec<f64> = (0..top.k_dl)
            .map(|_| draw(params.g_dl_db_range, &mut rng))
            .collect();
        let g_i_pool: Vec<Vec<f64>> = (0..top.k_ul)
            .map(|_| {
                (0..top.k_dl)
                    .map(|_| {
                        if params.zero_interference {
                            0.0
                        } else {
                            draw(params.g_i_db_range, &mut rng)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            params,
            levels,
            g_ul_pool,
            g_dl_pool,
            g_i_pool,
        })
    }

    /// Scenario at a 1-based level index.
    pub fn scenario(&self, level: usize) -> Result<Scenario> {
        let spec = self
            .levels
            .get(
                level
                    .checked_sub(1)
                    .ok_or_else(|| Error::InvalidConfig("levels are 1-based".into()))?,
            )
            .ok_or_else(|| Error::InvalidConfig(format!("no level {level}")))?;
        Scenario::new(
            spec.m,
            self.g_ul_pool[..spec.k_ul].to_vec(),
            self.g_dl_pool[..spec.k_dl].to_vec(),
            self.g_i_pool[..spec.k_ul]
                .iter()
                .map(|row| row[..spec.k_dl].to_vec())
                .collect(),
            self.params.n0_w,
            self.params.p_ul_max_w,
            self.params.p_dl_tot_w,
            self.params.sigma_min,
            db_to_linear(self.params.neighbor_threshold_db),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub level: usize,
    pub k_ul: usize,
    pub k_dl: usize,
    pub m: usize,
    pub theta: f64,
    pub psi: f64,
    pub mean_p_ul_w: f64,
    pub median_p_ul_w: f64,
    pub utility_opt: f64,
    pub utility_naive: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    pub fn csv_header() -> &'static str {
        "level,k_ul,k_dl,m,theta,psi,mean_p_ul_w,median_p_ul_w,utility_opt,utility_naive"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.level,
                r.k_ul,
                r.k_dl,
                r.m,
                r.theta,
                r.psi,
                r.mean_p_ul_w,
                r.median_p_ul_w,
                r.utility_opt,
                r.utility_naive
            ));
        }
        out
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Utility at maximum uplink power with the downlink block re-optimized.
pub fn naive_utility(s: &Scenario, utils: &UtilitySet) -> Result<f64> {
    let p_ul = vec![s.p_ul_max; s.k_ul()];
    let p_dl = oracle::optimize_dl_given_ul(s, utils, &p_ul);
    s.sum_utility(utils, &PowerAllocation::new(p_ul, p_dl), RateMode::HighSnr)
}

/// Solve every level of the sequence and record the power-scaling
/// statistics. Solve failures carry the level index.
pub fn run_scaling(
    seq: &ScenarioSequence,
    ul_util: &UtilityFn,
    dl_util: &UtilityFn,
    rho: f64,
    omega: f64,
    solver: &SolverParams,
) -> Result<ScalingReport> {
    let mut report = ScalingReport::default();
    for spec in &seq.levels {
        let s = seq.scenario(spec.level)?;
        let utils = UtilitySet::uniform(ul_util.clone(), dl_util.clone(), s.k_ul(), s.k_dl());
        let solved =
            oracle::solve_centralized(&s, &utils, solver).map_err(|e| Error::LevelSolve {
                level: spec.level,
                source: Box::new(e),
            })?;
        let theta = theta_fraction(&solved.p_star.p_ul, rho, s.p_ul_max)?;
        let psi = psi_fraction(&solved.p_star.p_dl, omega, s.p_dl_tot);
        let mean = solved.p_star.p_ul.iter().sum::<f64>() / spec.k_ul as f64;
        let mut sorted = solved.p_star.p_ul.clone();
        let med = median(&mut sorted);
        report.rows.push(ScalingRow {
            level: spec.level,
            k_ul: spec.k_ul,
            k_dl: spec.k_dl,
            m: spec.m,
            theta,
            psi,
            mean_p_ul_w: mean,
            median_p_ul_w: med,
            utility_opt: solved.utility_star,
            utility_naive: naive_utility(&s, &utils)?,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub g_i_db: f64,
    pub p_ul_star_w: f64,
    pub utility_opt: f64,
    pub utility_naive: f64,
}

/// Sweep the single interference gain of a one-by-one scenario, solving
/// the allocation at every point and evaluating the max-uplink-power
/// baseline with its downlink re-optimized.
pub fn sweep_interference(
    base: &Scenario,
    g_i_db_points: &[f64],
    utils: &UtilitySet,
    solver: &SolverParams,
) -> Result<Vec<SweepRow>> {
    if base.k_ul() != 1 || base.k_dl() != 1 {
        return Err(Error::DimensionGuard(
            "interference sweep needs a 1x1 scenario".into(),
        ));
    }
    let mut rows = Vec::with_capacity(g_i_db_points.len());
    for &g_db in g_i_db_points {
        let s = base.with_interference(vec![vec![db_to_linear(g_db)]])?;
        let solved = oracle::solve_centralized(&s, utils, solver)?;
        rows.push(SweepRow {
            g_i_db: g_db,
            p_ul_star_w: solved.p_star.p_ul[0],
            utility_opt: solved.utility_star,
            utility_naive: naive_utility(&s, utils)?,
        });
    }
    Ok(rows)
}

/// Log-linear least-squares fit of a decaying error sequence.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeoFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fit `ln eps[k] ~ intercept + slope * k` over `k` in `[k_lo, k_hi]`,
/// skipping non-positive entries.
pub fn geometric_fit(eps: &[f64], k_lo: usize, k_hi: usize) -> Result<GeoFit> {
    let pts: Vec<(f64, f64)> = (k_lo..=k_hi.min(eps.len().saturating_sub(1)))
        .filter(|&k| eps[k] > 0.0)
        .map(|k| (k as f64, eps[k].ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidConfig(
            "too few positive points for a geometric fit".into(),
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(GeoFit {
        slope,
        intercept,
        r2,
        points: pts.len(),
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub gamma: f64,
    pub outcome: Outcome,
    pub final_utility: f64,
    pub trace: Vec<TraceRow>,
    /// Fit of the error-to-optimum decay, when an oracle value was given
    /// and the run produced enough points.
    pub fit: Option<GeoFit>,
}

/// Run the distributed iteration for each step size and fit the decay of
/// the distance to the oracle utility over iterations 20 through 200.
pub fn convergence_study(
    s: &Scenario,
    utils: &UtilitySet,
    gammas: &[f64],
    base: &AlgoParams,
    oracle_utility: f64,
) -> Result<Vec<ConvergenceRun>> {
    let mut runs = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let params = AlgoParams {
            gamma,
            ..base.clone()
        };
        let r = distpc::run(s, utils, &params, Some(oracle_utility))?;
        let eps: Vec<f64> = r
            .state
            .trace
            .iter()
            .map(|row| row.eps.unwrap_or(f64::NAN))
            .collect();
        let fit = geometric_fit(&eps, 20, 200).ok();
        runs.push(ConvergenceRun {
            gamma,
            outcome: r.outcome,
            final_utility: r
                .state
                .trace
                .last()
                .map(|t| t.sum_utility)
                .unwrap_or(f64::NAN),
            trace: r.state.trace,
            fit,
        });
    }
    Ok(runs)
}
