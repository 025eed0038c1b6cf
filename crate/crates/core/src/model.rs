//! Physical scenario, unit conversions and the asymptotic SINR/rate model.
//!
//! All quantities are stored in linear units (watts, unitless gains); dB
//! values are accepted only at configuration ingestion via [`ScenarioSpec`].
//! Rates are natural-log (nats).

use serde::{Deserialize, Serialize};

use crate::utility::UtilitySet;
use crate::{Error, Result};

/// Convert a dB value to a linear gain: `10^(x/10)`.
pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

/// Convert a linear gain to dB.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Convert dBm to watts (23 dBm ≈ 0.1995 W).
pub fn dbm_to_watts(x_dbm: f64) -> f64 {
    10f64.powf((x_dbm - 30.0) / 10.0)
}

/// Convert dBW to watts.
pub fn dbw_to_watts(x_dbw: f64) -> f64 {
    10f64.powf(x_dbw / 10.0)
}

/// Shannon rate in nats at the given SINR.
pub fn rate_exact(sinr: f64) -> f64 {
    debug_assert!(sinr >= 0.0, "rate_exact needs sinr >= 0, got {sinr}");
    sinr.ln_1p()
}

/// High-SINR rate approximation `ln(sinr)`; only valid for `sinr > 0`.
pub fn rate_hs(sinr: f64) -> f64 {
    assert!(sinr > 0.0, "rate_hs needs sinr > 0, got {sinr}");
    sinr.ln()
}

/// Which rate model to evaluate utilities under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Exact,
    HighSnr,
}

/// Uplink/downlink power vectors in linear watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p_ul: Vec<f64>,
    pub p_dl: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(p_ul: Vec<f64>, p_dl: Vec<f64>) -> Self {
        Self { p_ul, p_dl }
    }

    /// Build from log-domain power vectors.
    pub fn from_log(log_p_ul: &[f64], log_p_dl: &[f64]) -> Self {
        Self {
            p_ul: log_p_ul.iter().map(|x| x.exp()).collect(),
            p_dl: log_p_dl.iter().map(|x| x.exp()).collect(),
        }
    }

    /// Log-domain view of the uplink powers.
    pub fn log_ul(&self) -> Vec<f64> {
        self.p_ul.iter().map(|p| p.ln()).collect()
    }

    /// Log-domain view of the downlink powers.
    pub fn log_dl(&self) -> Vec<f64> {
        self.p_dl.iter().map(|p| p.ln()).collect()
    }

    /// Check the scenario bounds: per-user uplink box, downlink lower
    /// bounds and the total downlink budget (relative tolerance `tol`).
    pub fn is_feasible(&self, s: &Scenario, tol: f64) -> bool {
        if self.p_ul.len() != s.k_ul() || self.p_dl.len() != s.k_dl() {
            return false;
        }
        let ul_ok = self
            .p_ul
            .iter()
            .enumerate()
            .all(|(i, &p)| p >= s.p0_ul[i] * (1.0 - tol) && p <= s.p_ul_max * (1.0 + tol));
        let dl_ok = self
            .p_dl
            .iter()
            .enumerate()
            .all(|(j, &p)| p >= s.p0_dl[j] * (1.0 - tol));
        let budget_ok = self.p_dl.iter().sum::<f64>() <= s.p_dl_tot * (1.0 + tol);
        ul_ok && dl_ok && budget_ok
    }
}

/// A single-cell scenario: antenna count, path-loss gains, inter-node
/// interference matrix, noise power, power budgets and the derived
/// high-SINR lower power bounds and neighbor sets.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Number of base-station antennas.
    pub m: usize,
    /// Uplink path-loss gains (linear), one per uplink user.
    pub g_ul: Vec<f64>,
    /// Downlink path-loss gains (linear), one per downlink user.
    pub g_dl: Vec<f64>,
    /// Inter-node interference gains, `g_i[i][j]` from uplink user `i`
    /// to downlink user `j`. Zero means no link.
    pub g_i: Vec<Vec<f64>>,
    /// Noise power in watts.
    pub n0: f64,
    /// Per-uplink-user power cap in watts.
    pub p_ul_max: f64,
    /// Total downlink power budget in watts.
    pub p_dl_tot: f64,
    /// Uplink lower power bounds keeping the high-SINR model valid.
    pub p0_ul: Vec<f64>,
    /// Downlink lower power bounds (worst-case interference).
    pub p0_dl: Vec<f64>,
    /// For uplink user `i`, the downlink users it interferes with.
    pub nbr_of_ul: Vec<Vec<usize>>,
    /// For downlink user `j`, the uplink users interfering with it.
    pub nbr_of_dl: Vec<Vec<usize>>,
    /// Minimum SINR the lower power bounds were designed for.
    pub sigma_min: f64,
    /// Gain threshold below which links are not neighbors.
    pub neighbor_threshold: f64,
}

/// Scenario description in configuration units (dB / dBm / dBW). The
/// loader converts everything to linear units once, at the boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub m: usize,
    pub g_ul_db: Vec<f64>,
    pub g_dl_db: Vec<f64>,
    /// Interference gains in dB; `null` entries mean no link.
    pub g_i_db: Vec<Vec<Option<f64>>>,
    pub n0_dbw: f64,
    pub p_ul_max_dbm: f64,
    pub p_dl_tot_dbm: f64,
    /// Minimum SINR the lower power bounds are designed for.
    #[serde(default = "default_sigma_min")]
    pub sigma_min: f64,
    /// Gains below this threshold do not create a neighbor relation.
    #[serde(default = "default_neighbor_threshold_db")]
    pub neighbor_threshold_db: f64,
}

fn default_sigma_min() -> f64 {
    10.0
}

fn default_neighbor_threshold_db() -> f64 {
    -100.0
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario> {
        let g_i = self
            .g_i_db
            .iter()
            .map(|row| {
                row.iter()
                    .map(|g| g.map_or(0.0, db_to_linear))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        Scenario::new(
            self.m,
            self.g_ul_db.iter().copied().map(db_to_linear).collect(),
            self.g_dl_db.iter().copied().map(db_to_linear).collect(),
            g_i,
            dbw_to_watts(self.n0_dbw),
            dbm_to_watts(self.p_ul_max_dbm),
            dbm_to_watts(self.p_dl_tot_dbm),
            self.sigma_min,
            db_to_linear(self.neighbor_threshold_db),
        )
    }
}

/// Build neighbor sets from the interference matrix: uplink `i` and
/// downlink `j` are neighbors iff `g_i[i][j] >= threshold`. The two
/// returned views are symmetric by construction.
pub fn build_neighborhoods(g_i: &[Vec<f64>], threshold: f64) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let k_ul = g_i.len();
    let k_dl = g_i.first().map_or(0, |r| r.len());
    let mut nbr_of_ul = vec![Vec::new(); k_ul];
    let mut nbr_of_dl = vec![Vec::new(); k_dl];
    for (i, row) in g_i.iter().enumerate() {
        for (j, &g) in row.iter().enumerate() {
            if g >= threshold && g > 0.0 {
                nbr_of_ul[i].push(j);
                nbr_of_dl[j].push(i);
            }
        }
    }
    (nbr_of_ul, nbr_of_dl)
}

impl Scenario {
    /// Construct and validate a scenario from linear-unit inputs. The
    /// lower power bounds are derived from `sigma_min`: the uplink bound
    /// reaches SINR `sigma_min` against noise, the downlink bound against
    /// the worst-case interference (all uplink users at maximum power).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        g_ul: Vec<f64>,
        g_dl: Vec<f64>,
        g_i: Vec<Vec<f64>>,
        n0: f64,
        p_ul_max: f64,
        p_dl_tot: f64,
        sigma_min: f64,
        neighbor_threshold: f64,
    ) -> Result<Self> {
        let k_ul = g_ul.len();
        let k_dl = g_dl.len();
        if m == 0 || k_ul == 0 || k_dl == 0 {
            return Err(Error::InvalidScenario(format!(
                "degenerate dimensions (m={m}, k_ul={k_ul}, k_dl={k_dl})"
            )));
        }
        if g_i.len() != k_ul || g_i.iter().any(|r| r.len() != k_dl) {
            return Err(Error::InvalidScenario(
                "interference matrix shape does not match user counts".into(),
            ));
        }
        for (name, v) in [("g_ul", &g_ul), ("g_dl", &g_dl)] {
            if v.iter().any(|&g| g <= 0.0 || !g.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "{name} gains must be strictly positive and finite"
                )));
            }
        }
        if g_i.iter().flatten().any(|&g| g < 0.0 || !g.is_finite()) {
            return Err(Error::InvalidScenario(
                "interference gains must be nonnegative and finite".into(),
            ));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(n0) || !positive(p_ul_max) || !positive(p_dl_tot) {
            return Err(Error::InvalidScenario(
                "noise power and power budgets must be strictly positive".into(),
            ));
        }
        if !positive(sigma_min) || neighbor_threshold < 0.0 || neighbor_threshold.is_nan() {
            return Err(Error::InvalidScenario(
                "sigma_min must be positive and the neighbor threshold nonnegative".into(),
            ));
        }

        let (nbr_of_ul, nbr_of_dl) = build_neighborhoods(&g_i, neighbor_threshold);

        let mf = m as f64;
        let p0_ul: Vec<f64> = g_ul.iter().map(|&g| sigma_min * n0 / (mf * g)).collect();
        for (i, &p0) in p0_ul.iter().enumerate() {
            if p0 >= p_ul_max {
                return Err(Error::InvalidScenario(format!(
                    "uplink user {i}: lower power bound {p0:.3e} W reaches the cap \
                     {p_ul_max:.3e} W; SINR {sigma_min} is unreachable"
                )));
            }
        }
        let p0_dl: Vec<f64> = (0..k_dl)
            .map(|j| {
                let in_max: f64 = nbr_of_dl[j]
                    .iter()
                    .map(|&i| g_i[i][j] * p_ul_max)
                    .sum::<f64>()
                    + n0;
                sigma_min * in_max / (mf * g_dl[j])
            })
            .collect();
        let p0_dl_sum: f64 = p0_dl.iter().sum();
        if p0_dl_sum > p_dl_tot {
            return Err(Error::InvalidScenario(format!(
                "downlink lower bounds sum to {p0_dl_sum:.3e} W, exceeding the \
                 budget {p_dl_tot:.3e} W"
            )));
        }

        Ok(Self {
            m,
            g_ul,
            g_dl,
            g_i,
            n0,
            p_ul_max,
            p_dl_tot,
            p0_ul,
            p0_dl,
            nbr_of_ul,
            nbr_of_dl,
            sigma_min,
            neighbor_threshold,
        })
    }

    /// Rebuild with a different interference matrix (lower bounds and
    /// neighborhoods are re-derived).
    pub fn with_interference(&self, g_i: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            self.m,
            self.g_ul.clone(),
            self.g_dl.clone(),
            g_i,
            self.n0,
            self.p_ul_max,
            self.p_dl_tot,
            self.sigma_min,
            self.neighbor_threshold,
        )
    }

    pub fn k_ul(&self) -> usize {
        self.g_ul.len()
    }

    pub fn k_dl(&self) -> usize {
        self.g_dl.len()
    }

    /// Uplink SINR of user `i` at transmit power `p_ul_i`.
    pub fn uplink_sinr(&self, p_ul_i: f64, i: usize) -> f64 {
        self.m as f64 * p_ul_i * self.g_ul[i] / self.n0
    }

    /// Interference-plus-noise at downlink user `j` under uplink powers
    /// `p_ul`; at least `n0`, with equality iff all neighbor powers are 0.
    pub fn interference_plus_noise(&self, p_ul: &[f64], j: usize) -> f64 {
        self.nbr_of_dl[j]
            .iter()
            .map(|&i| self.g_i[i][j] * p_ul[i])
            .sum::<f64>()
            + self.n0
    }

    /// Downlink SINR of user `j` at its power `p_dl_j`, with the
    /// interference produced by `p_ul`.
    pub fn downlink_sinr(&self, p_dl_j: f64, p_ul: &[f64], j: usize) -> f64 {
        self.m as f64 * p_dl_j * self.g_dl[j] / self.interference_plus_noise(p_ul, j)
    }

    /// Downlink SINR with a pre-computed interference-plus-noise value.
    pub fn downlink_sinr_with_in(&self, p_dl_j: f64, in_j: f64, j: usize) -> f64 {
        self.m as f64 * p_dl_j * self.g_dl[j] / in_j
    }

    /// Per-user rates under the chosen rate model.
    pub fn rates(&self, p: &PowerAllocation, mode: RateMode) -> (Vec<f64>, Vec<f64>) {
        let r_ul = (0..self.k_ul())
            .map(|i| {
                let sinr = self.uplink_sinr(p.p_ul[i], i);
                match mode {
                    RateMode::Exact => rate_exact(sinr),
                    RateMode::HighSnr => rate_hs(sinr),
                }
            })
            .collect();
        let r_dl = (0..self.k_dl())
            .map(|j| {
                let sinr = self.downlink_sinr(p.p_dl[j], &p.p_ul, j);
                match mode {
                    RateMode::Exact => rate_exact(sinr),
                    RateMode::HighSnr => rate_hs(sinr),
                }
            })
            .collect();
        (r_ul, r_dl)
    }

    /// Sum of per-user utilities at the allocation `p`. Errors if any
    /// rate falls outside a utility's domain.
    pub fn sum_utility(
        &self,
        utils: &UtilitySet,
        p: &PowerAllocation,
        mode: RateMode,
    ) -> Result<f64> {
        utils.check_dims(self.k_ul(), self.k_dl())?;
        let (r_ul, r_dl) = self.rates(p, mode);
        let mut total = 0.0;
        for (u, &r) in utils.ul.iter().zip(&r_ul) {
            if r <= 0.0 && u.needs_positive_rate() {
                return Err(Error::UtilityDomain { rate: r });
            }
            total += u.value(r);
        }
        for (u, &r) in utils.dl.iter().zip(&r_dl) {
            if r <= 0.0 && u.needs_positive_rate() {
                return Err(Error::UtilityDomain { rate: r });
            }
            total += u.value(r);
        }
        Ok(total)
    }
}

/// Parameters for [`random_scenario`]. Path-loss and interference gains
/// are drawn log-uniformly in dB; the interference distribution's linear
/// mean is exposed by [`RandomScenarioParams::mean_interference_gain`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomScenarioParams {
    pub k_ul: usize,
    pub k_dl: usize,
    pub m: usize,
    pub g_ul_db_range: (f64, f64),
    pub g_dl_db_range: (f64, f64),
    pub g_i_db_range: (f64, f64),
    pub n0_w: f64,
    pub p_ul_max_w: f64,
    pub p_dl_tot_w: f64,
    pub sigma_min: f64,
    pub neighbor_threshold_db: f64,
}

impl Default for RandomScenarioParams {
    fn default() -> Self {
        Self {
            k_ul: 2,
            k_dl: 4,
            m: 128,
            g_ul_db_range: (-65.0, -55.0),
            g_dl_db_range: (-65.0, -55.0),
            g_i_db_range: (-75.0, -55.0),
            n0_w: 1e-7,
            p_ul_max_w: dbm_to_watts(23.0),
            p_dl_tot_w: dbm_to_watts(45.0),
            sigma_min: 10.0,
            neighbor_threshold_db: -100.0,
        }
    }
}

impl RandomScenarioParams {
    /// Linear mean of the log-uniform-in-dB interference distribution.
    pub fn mean_interference_gain(&self) -> f64 {
        log_uniform_db_mean(self.g_i_db_range.0, self.g_i_db_range.1)
    }
}

/// Mean of `10^(U/10)` for `U` uniform on `[a_db, b_db]`.
pub fn log_uniform_db_mean(a_db: f64, b_db: f64) -> f64 {
    if a_db == b_db {
        return db_to_linear(a_db);
    }
    let ln10_over_10 = std::f64::consts::LN_10 / 10.0;
    (db_to_linear(b_db) - db_to_linear(a_db)) / ((b_db - a_db) * ln10_over_10)
}

/// Draw a scenario deterministically from `seed`. Identical seeds and
/// parameters give bitwise-identical scenarios.
pub fn random_scenario(seed: u64, params: &RandomScenarioParams) -> Result<Scenario> {
    use rand::{Rng, SeedableRng};
    if params.k_ul == 0 || params.k_dl == 0 || params.m == 0 {
        return Err(Error::InvalidConfig(
            "random scenario needs positive dimensions".into(),
        ));
    }
    for (name, (lo, hi)) in [
        ("g_ul_db_range", params.g_ul_db_range),
        ("g_dl_db_range", params.g_dl_db_range),
        ("g_i_db_range", params.g_i_db_range),
    ] {
        if lo > hi || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "invalid {name}: [{lo}, {hi}]"
            )));
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw_db = |range: (f64, f64)| -> f64 {
        if range.0 == range.1 {
            range.0
        } else {
            rng.gen_range(range.0..range.1)
        }
    };
    let g_ul: Vec<f64> = (0..params.k_ul)
        .map(|_| db_to_linear(draw_db(params.g_ul_db_range)))
        .collect();
    let g_dl: Vec<f64> = (0..params.k_dl)
        .map(|_| db_to_linear(draw_db(params.g_dl_db_range)))
        .collect();
    let g_i: Vec<Vec<f64>> = (0..params.k_ul)
        .map(|_| {
            (0..params.k_dl)
                .map(|_| db_to_linear(draw_db(params.g_i_db_range)))
                .collect()
        })
        .collect();
    Scenario::new(
        params.m,
        g_ul,
        g_dl,
        g_i,
        params.n0_w,
        params.p_ul_max_w,
        params.p_dl_tot_w,
        params.sigma_min,
        db_to_linear(params.neighbor_threshold_db),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::UtilityFn;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(a.abs()).max(1e-300)
    }

    fn tiny_scenario(g_i: Vec<Vec<f64>>) -> Scenario {
        Scenario::new(
            128,
            vec![1e-6],
            vec![1e-7],
            g_i,
            1e-8,
            dbm_to_watts(23.0),
            dbm_to_watts(45.0),
            10.0,
            db_to_linear(-100.0),
        )
        .unwrap()
    }

    #[test]
    fn unit_conversions() {
        assert!(close(db_to_linear(-60.0), 1e-6, 1e-12));
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!(close(dbm_to_watts(23.0), 0.199526, 1e-5));
        assert!(close(dbw_to_watts(-30.0), 1e-3, 1e-12));
        assert!(close(linear_to_db(db_to_linear(-47.3)), -47.3, 1e-12));
    }

    #[test]
    fn uplink_sinr_values() {
        let s = Scenario::new(
            1,
            vec![1.0],
            vec![1.0],
            vec![vec![0.0]],
            1.0,
            2.0,
            2.0,
            0.1,
            0.0,
        )
        .unwrap();
        assert_eq!(s.uplink_sinr(1.0, 0), 1.0);
        assert_eq!(s.uplink_sinr(0.0, 0), 0.0);

        let s = Scenario::new(
            128,
            vec![1e-6],
            vec![1e-7],
            vec![vec![0.0]],
            1e-3,
            0.25,
            31.62,
            0.01,
            0.0,
        )
        .unwrap();
        assert!(close(s.uplink_sinr(0.199526, 0), 0.0255394, 1e-5));
    }

    #[test]
    fn uplink_sinr_linear_in_p_and_m() {
        let s = tiny_scenario(vec![vec![0.0]]);
        let base = s.uplink_sinr(0.05, 0);
        assert!(close(s.uplink_sinr(0.10, 0), 2.0 * base, 1e-12));
        let mut s2 = s.clone();
        s2.m *= 2;
        assert!(close(s2.uplink_sinr(0.05, 0), 2.0 * base, 1e-12));
    }

    #[test]
    fn interference_plus_noise_values() {
        // no interferers -> exactly the noise power
        let s = tiny_scenario(vec![vec![0.0]]);
        assert_eq!(s.interference_plus_noise(&[0.1], 0), s.n0);

        // two neighbors at 1e-6 gain, 0.1 W each, N0 = 1e-3
        let s = Scenario::new(
            128,
            vec![1e-5, 1e-5],
            vec![2e-6],
            vec![vec![1e-6], vec![1e-6]],
            1e-3,
            0.2,
            31.62,
            0.01,
            1e-12,
        )
        .unwrap();
        assert!(close(
            s.interference_plus_noise(&[0.1, 0.1], 0),
            1.0002e-3,
            1e-12
        ));
    }

    #[test]
    fn downlink_sinr_values() {
        // with no neighbors the form matches the uplink expression
        let s = tiny_scenario(vec![vec![0.0]]);
        let sinr = s.downlink_sinr(1.0, &[0.2], 0);
        assert!(close(sinr, 128.0 * 1.0 * 1e-7 / s.n0, 1e-12));
        assert_eq!(s.downlink_sinr(0.0, &[0.2], 0), 0.0);

        // direct arithmetic against a fixed interference-plus-noise
        let g = db_to_linear(-56.0);
        let s = Scenario::new(
            128,
            vec![1e-5],
            vec![g],
            vec![vec![0.0]],
            1e-8,
            0.2,
            31.62,
            10.0,
            0.0,
        )
        .unwrap();
        assert!(close(s.downlink_sinr_with_in(1.0, 1e-6, 0), 321.54, 1e-3));
        assert!(close(s.downlink_sinr_with_in(1.0, 1e-3, 0), 0.32154, 1e-3));
    }

    #[test]
    fn rate_model_values_and_gap() {
        assert_eq!(rate_exact(0.0), 0.0);
        assert!(close(rate_hs(std::f64::consts::E), 1.0, 1e-12));
        assert!(close(rate_exact(25.54), 3.279, 1e-3));
        assert!(close(rate_hs(25.54), 3.240, 1e-3));
        let gap = rate_exact(25.54) - rate_hs(25.54);
        assert!(close(gap, (1.0 + 1.0 / 25.54f64).ln(), 1e-12));
        // the approximation error drops below 0.01 nats just past sinr ~ 99.5
        assert!(rate_exact(100.0) - rate_hs(100.0) < 0.01);
        assert!(rate_exact(99.0) - rate_hs(99.0) > 0.01);
    }

    #[test]
    #[should_panic]
    fn rate_hs_rejects_nonpositive() {
        rate_hs(0.0);
    }

    #[test]
    fn neighborhoods_from_threshold() {
        let g_i = vec![vec![1e-6, 0.0], vec![5e-7, 2e-9]];
        let (nu, nd) = build_neighborhoods(&g_i, 1e-9);
        assert_eq!(nu, vec![vec![0], vec![0, 1]]);
        assert_eq!(nd, vec![vec![0, 1], vec![1]]);
        // zero threshold keeps every nonzero link
        let (nu, _) = build_neighborhoods(&g_i, 0.0);
        assert_eq!(nu[0], vec![0]);
        // threshold above the largest gain empties everything
        let (nu, nd) = build_neighborhoods(&g_i, 1.0);
        assert!(nu.iter().all(|v| v.is_empty()));
        assert!(nd.iter().all(|v| v.is_empty()));
    }

    #[test]
    fn neighborhood_symmetry() {
        let g_i = vec![
            vec![db_to_linear(-59.0), db_to_linear(-60.0), 0.0, 0.0],
            vec![db_to_linear(-62.0), db_to_linear(-55.0), 0.0, 0.0],
        ];
        let (nu, nd) = build_neighborhoods(&g_i, 1e-10);
        for (i, js) in nu.iter().enumerate() {
            for &j in js {
                assert!(nd[j].contains(&i));
            }
        }
        assert_eq!(nu[0], vec![0, 1]);
        assert_eq!(nu[1], vec![0, 1]);
        assert!(nd[2].is_empty() && nd[3].is_empty());
    }

    #[test]
    fn sum_utility_separates_without_interference() {
        let s = Scenario::new(
            128,
            vec![1e-6, 2e-6],
            vec![1e-7, 3e-7],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            1e-8,
            0.2,
            31.62,
            10.0,
            0.0,
        )
        .unwrap();
        let utils =
            UtilitySet::uniform(UtilityFn::log(1.0), UtilityFn::log(2.0), s.k_ul(), s.k_dl());
        let p = PowerAllocation::new(vec![0.1, 0.15], vec![10.0, 20.0]);
        let total = s.sum_utility(&utils, &p, RateMode::HighSnr).unwrap();
        let mut parts = 0.0;
        for i in 0..2 {
            parts += utils.ul[i].value(rate_hs(s.uplink_sinr(p.p_ul[i], i)));
        }
        for j in 0..2 {
            parts += utils.dl[j].value(rate_hs(s.downlink_sinr(p.p_dl[j], &p.p_ul, j)));
        }
        assert!(close(total, parts, 1e-14));
    }

    #[test]
    fn sum_utility_single_log_link() {
        let s = Scenario::new(
            1,
            vec![1.0],
            vec![1.0],
            vec![vec![0.0]],
            1.0,
            4.0,
            4.0,
            0.5,
            0.0,
        )
        .unwrap();
        let utils = UtilitySet::uniform(UtilityFn::log(1.0), UtilityFn::log(1.0), 1, 1);
        // uplink rate of exactly 1 nat: sinr = e -> p = e / (M g / N0) = e
        let p = PowerAllocation::new(vec![std::f64::consts::E], vec![std::f64::consts::E]);
        let total = s.sum_utility(&utils, &p, RateMode::HighSnr).unwrap();
        assert!(close(total, 0.0, 1e-12) || total.abs() < 1e-12);
    }

    #[test]
    fn sum_utility_domain_error() {
        let s = tiny_scenario(vec![vec![0.0]]);
        let utils = UtilitySet::uniform(UtilityFn::log(1.0), UtilityFn::log(1.0), 1, 1);
        // a power low enough to push the high-SINR rate negative
        let p = PowerAllocation::new(vec![1e-12], vec![10.0]);
        assert!(matches!(
            s.sum_utility(&utils, &p, RateMode::HighSnr),
            Err(Error::UtilityDomain { .. })
        ));
    }

    #[test]
    fn scenario_rejects_bad_inputs() {
        assert!(
            Scenario::new(128, vec![], vec![1e-7], vec![], 1e-8, 0.2, 31.62, 10.0, 0.0).is_err()
        );
        assert!(Scenario::new(
            128,
            vec![-1e-6],
            vec![1e-7],
            vec![vec![0.0]],
            1e-8,
            0.2,
            31.62,
            10.0,
            0.0
        )
        .is_err());
        // lower bound would reach the cap: sigma_min unattainable
        assert!(Scenario::new(
            128,
            vec![1e-6],
            vec![1e-7],
            vec![vec![0.0]],
            1e-2,
            0.2,
            31.62,
            10.0,
            0.0
        )
        .is_err());
    }

    #[test]
    fn random_scenario_is_deterministic() {
        let params = RandomScenarioParams::default();
        let a = random_scenario(7, &params).unwrap();
        let b = random_scenario(7, &params).unwrap();
        assert_eq!(a.g_ul, b.g_ul);
        assert_eq!(a.g_dl, b.g_dl);
        assert_eq!(a.g_i, b.g_i);
        let c = random_scenario(8, &params).unwrap();
        assert_ne!(a.g_i, c.g_i);
    }

    #[test]
    fn random_scenario_rejects_degenerate() {
        let params = RandomScenarioParams {
            k_ul: 0,
            ..RandomScenarioParams::default()
        };
        assert!(random_scenario(1, &params).is_err());
        let params = RandomScenarioParams {
            g_i_db_range: (-50.0, -60.0),
            ..RandomScenarioParams::default()
        };
        assert!(random_scenario(1, &params).is_err());
    }

    #[test]
    fn interference_mean_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let (a, b) = (-75.0, -55.0);
        let expected = log_uniform_db_mean(a, b);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| db_to_linear(rng.gen_range(a..b)))
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - expected).abs() <= 0.03 * expected,
            "sample mean {mean:.3e} vs analytic {expected:.3e}"
        );
    }

    #[test]
    fn downlink_sinr_decreases_with_interferer_power() {
        let s = Scenario::new(
            128,
            vec![1e-5, 1e-5],
            vec![2e-6],
            vec![vec![1e-6], vec![0.0]],
            1e-6,
            0.2,
            31.62,
            0.01,
            1e-12,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for k in 0..10 {
            let p1 = 0.02 * k as f64;
            let sinr = s.downlink_sinr(5.0, &[p1, 0.1], 0);
            assert!(sinr < last || k == 0);
            last = sinr;
        }
        // a zero-gain uplink user has no effect
        let a = s.downlink_sinr(5.0, &[0.1, 0.0], 0);
        let b = s.downlink_sinr(5.0, &[0.1, 0.2], 0);
        assert_eq!(a, b);
    }

    #[test]
    fn exact_rate_dominates_high_snr_rate() {
        use proptest::prelude::*;
        proptest::proptest!(|(sinr in 1e-3f64..1e9)| {
            let gap = rate_exact(sinr) - rate_hs(sinr);
            prop_assert!(gap > 0.0);
            // the subtraction of two similar rates loses ulps of the rate
            let tol = 1e-12 * gap + 4.0 * f64::EPSILON * rate_exact(sinr);
            prop_assert!((gap - (1.0 / sinr).ln_1p()).abs() <= tol);
        });
    }

    #[test]
    fn in_at_least_noise() {
        let s = Scenario::new(
            128,
            vec![1e-5, 1e-5],
            vec![2e-6],
            vec![vec![1e-6], vec![0.0]],
            1e-3,
            0.2,
            31.62,
            0.01,
            1e-12,
        )
        .unwrap();
        assert!(s.interference_plus_noise(&[0.2, 0.2], 0) > s.n0);
        assert_eq!(s.interference_plus_noise(&[0.0, 0.0], 0), s.n0);
    }
}
