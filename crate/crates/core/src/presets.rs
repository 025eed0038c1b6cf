//! Built-in experiment presets: a two-user interference sweep, a
//! two-by-four convergence scenario in proportional-fair and
//! minimum-potential-delay variants, and the antenna-scaling sequence.
//!
//! Path losses and power budgets follow common LTE-like values; the noise
//! power of each preset is set so the high-SINR operating region is valid
//! across the whole feasible power box.

use crate::distpc::AlgoParams;
use crate::experiments::SequenceParams;
use crate::model::{Scenario, ScenarioSpec};
use crate::utility::{UtilityFn, UtilitySet};
use crate::{Error, Result};

/// A ready-to-run convergence scenario.
#[derive(Debug, Clone)]
pub struct ConvergePreset {
    pub name: &'static str,
    pub scenario: ScenarioSpec,
    pub ul_util: &'static str,
    pub dl_util: &'static str,
    pub algo: AlgoParams,
}

impl ConvergePreset {
    pub fn build(&self) -> Result<(Scenario, UtilitySet)> {
        let s = self.scenario.build()?;
        let utils = UtilitySet::uniform(
            UtilityFn::parse(self.ul_util)?,
            UtilityFn::parse(self.dl_util)?,
            s.k_ul(),
            s.k_dl(),
        );
        Ok((s, utils))
    }
}

/// A ready-to-run interference sweep over a one-by-one scenario, with
/// both utility families.
#[derive(Debug, Clone)]
pub struct SweepPreset {
    pub name: &'static str,
    /// Base scenario; the single interference gain is replaced per point.
    pub scenario: ScenarioSpec,
    pub g_i_db_points: Vec<f64>,
    /// `(family name, uplink utility, downlink utility)`.
    pub families: Vec<(&'static str, &'static str, &'static str)>,
}

/// Scaling-study defaults (antenna constant, nesting, interference
/// distribution, utilities).
#[derive(Debug, Clone)]
pub struct ScalePreset {
    pub sequence: SequenceParams,
    pub rho: f64,
    pub omega: f64,
    pub seeds: usize,
    pub ul_util: &'static str,
    pub dl_util: &'static str,
}

fn two_by_four_scenario(n0_dbw: f64) -> ScenarioSpec {
    ScenarioSpec {
        m: 128,
        g_ul_db: vec![-50.0, -45.0],
        g_dl_db: vec![-56.0, -61.0, -65.0, -58.0],
        g_i_db: vec![
            vec![Some(-59.0), Some(-60.0), None, None],
            vec![Some(-62.0), Some(-55.0), None, None],
        ],
        n0_dbw,
        p_ul_max_dbm: 23.0,
        p_dl_tot_dbm: 45.0,
        sigma_min: 10.0,
        neighbor_threshold_db: -100.0,
    }
}

/// Convergence presets: `fig3-pf` (proportional fairness) and `fig3-mpd`
/// (minimum potential delay).
pub fn converge_preset(name: &str) -> Result<ConvergePreset> {
    match name {
        "fig3-pf" => Ok(ConvergePreset {
            name: "fig3-pf",
            scenario: two_by_four_scenario(-50.0),
            ul_util: "log:w=1",
            dl_util: "log:w=1",
            algo: AlgoParams::default(),
        }),
        "fig3-mpd" => Ok(ConvergePreset {
            name: "fig3-mpd",
            scenario: two_by_four_scenario(-50.0),
            ul_util: "afair:alpha=2,w=1",
            dl_util: "afair:alpha=2,w=1",
            // the potential-delay prices tolerate a smaller step, which
            // needs a longer budget to settle
            algo: AlgoParams {
                gamma: 0.02,
                max_iters: 12_000,
                ..AlgoParams::default()
            },
        }),
        other => Err(Error::InvalidConfig(format!(
            "unknown converge preset `{other}` (try fig3-pf or fig3-mpd)"
        ))),
    }
}

/// Sweep presets: `fig2` (one uplink, one downlink user; the
/// interference gain sweeps from negligible to dominant).
pub fn sweep_preset(name: &str) -> Result<SweepPreset> {
    match name {
        "fig2" => {
            let points = 30;
            let (lo, hi) = (-85.0, -40.0);
            Ok(SweepPreset {
                name: "fig2",
                scenario: ScenarioSpec {
                    m: 128,
                    g_ul_db: vec![-60.0],
                    g_dl_db: vec![-70.0],
                    g_i_db: vec![vec![None]],
                    n0_dbw: -80.0,
                    p_ul_max_dbm: 23.0,
                    p_dl_tot_dbm: 45.0,
                    sigma_min: 10.0,
                    neighbor_threshold_db: -100.0,
                },
                g_i_db_points: (0..points)
                    .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
                    .collect(),
                families: vec![
                    ("pf", "log:w=1", "log:w=2"),
                    ("mpd", "afair:alpha=2,w=1", "afair:alpha=2,w=2"),
                ],
            })
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown sweep preset `{other}` (try fig2)"
        ))),
    }
}

pub fn scale_preset() -> ScalePreset {
    ScalePreset {
        sequence: SequenceParams::default(),
        rho: 0.5,
        omega: 1.0,
        seeds: 10,
        ul_util: "log:w=1",
        dl_util: "log:w=2",
    }
}
