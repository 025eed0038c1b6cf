//! One-hop information architecture and the overheard-feedback protocol.
//!
//! Each downlink user sends one scalar per round: its price divided by
//! its measured interference-plus-noise. The base station recovers that
//! user's SINR from the feedback; neighboring uplink users overhear the
//! same message and recover their interference metric. A knowledge table
//! restricts every agent to facts a real node would possess, and
//! [`run_guarded`] executes the distributed iteration with all cross-node
//! quantities flowing only through feedback messages and permitted reads.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;

use crate::distpc::{run_with, AlgoParams, AlgoState, MetricTable, RoundInputs, RunResult};
use crate::model::Scenario;
use crate::utility::UtilitySet;
use crate::{Error, Result};

/// Per-downlink-user feedback: the scalar payload plus the channel gains
/// receivers estimate from the embedded pilot symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMsg {
    pub sender: usize,
    /// Price over interference-plus-noise (utility per watt-nat).
    pub fb: f64,
    /// Downlink path loss as estimated at the base station.
    pub pilot_gain_to_bs: f64,
    /// Interference gains `(i, g)` as estimated by overhearing uplink
    /// neighbors.
    pub pilot_gain_to_ul: Vec<(usize, f64)>,
}

/// Build downlink user `j`'s feedback for the current round.
pub fn make_feedback(j: usize, q_dl_j: f64, in_j: f64, s: &Scenario) -> Result<FeedbackMsg> {
    let positive = |x: f64| x > 0.0 && x.is_finite();
    if !positive(q_dl_j) || !positive(in_j) {
        return Err(Error::InvalidConfig(format!(
            "feedback needs positive price and interference-plus-noise \
             (q={q_dl_j}, in={in_j})"
        )));
    }
    Ok(FeedbackMsg {
        sender: j,
        fb: q_dl_j / in_j,
        pilot_gain_to_bs: s.g_dl[j],
        pilot_gain_to_ul: s.nbr_of_dl[j].iter().map(|&i| (i, s.g_i[i][j])).collect(),
    })
}

/// Base-station side: recover the sender's SINR from its feedback, the
/// transmit power the BS chose for it and the BS's own price copy.
pub fn bs_recover_sinr(msg: &FeedbackMsg, p_dl_j: f64, q_dl_j: f64, m: usize) -> f64 {
    msg.fb * (m as f64 * p_dl_j * msg.pilot_gain_to_bs) / q_dl_j
}

/// Uplink side: overhearing user `i` recovers its interference metric and
/// the power-weighted term entering its power update. Errors unless `i`
/// is a neighbor of the sender.
pub fn ul_overhear_metric(msg: &FeedbackMsg, i: usize, p_ul_i: f64) -> Result<(f64, f64)> {
    let g_ij = msg
        .pilot_gain_to_ul
        .iter()
        .find(|(ii, _)| *ii == i)
        .map(|(_, g)| *g)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "uplink user {i} is not a neighbor of downlink user {}",
                msg.sender
            ))
        })?;
    let m_ij = msg.fb * g_ij;
    Ok((m_ij, m_ij * p_ul_i))
}

/// Who is reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Agent {
    Bs,
    Uplink(usize),
    Downlink(usize),
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agent::Bs => write!(f, "bs"),
            Agent::Uplink(i) => write!(f, "uplink({i})"),
            Agent::Downlink(j) => write!(f, "downlink({j})"),
        }
    }
}

/// What is being read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Fact {
    DlPathLoss(usize),
    DlPower(usize),
    DlPrice(usize),
    DlSinr(usize),
    UlSinr(usize),
    UlPrice(usize),
    UlPower(usize),
    InterferenceGain { i: usize, j: usize },
    Metric { i: usize, j: usize },
    DlIn(usize),
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::DlPathLoss(j) => write!(f, "g_dl[{j}]"),
            Fact::DlPower(j) => write!(f, "p_dl[{j}]"),
            Fact::DlPrice(j) => write!(f, "q_dl[{j}]"),
            Fact::DlSinr(j) => write!(f, "sinr_dl[{j}]"),
            Fact::UlSinr(i) => write!(f, "sinr_ul[{i}]"),
            Fact::UlPrice(i) => write!(f, "q_ul[{i}]"),
            Fact::UlPower(i) => write!(f, "p_ul[{i}]"),
            Fact::InterferenceGain { i, j } => write!(f, "g_i[{i}][{j}]"),
            Fact::Metric { i, j } => write!(f, "m[{i}][{j}]"),
            Fact::DlIn(j) => write!(f, "in[{j}]"),
        }
    }
}

/// The one-hop information architecture: which facts each agent may hold.
/// The base station holds downlink-side quantities only; an uplink user
/// holds its own link state plus metrics and gains for the downlink users
/// it interferes with; a downlink user holds only its own link state.
pub struct KnowledgeTable<'a> {
    s: &'a Scenario,
}

impl<'a> KnowledgeTable<'a> {
    pub fn new(s: &'a Scenario) -> Self {
        Self { s }
    }

    pub fn permitted(&self, agent: Agent, fact: Fact) -> bool {
        match agent {
            Agent::Bs => matches!(
                fact,
                Fact::DlPathLoss(_) | Fact::DlPower(_) | Fact::DlPrice(_) | Fact::DlSinr(_)
            ),
            Agent::Uplink(i) => match fact {
                Fact::UlSinr(ii) | Fact::UlPrice(ii) | Fact::UlPower(ii) => ii == i,
                Fact::InterferenceGain { i: ii, j } | Fact::Metric { i: ii, j } => {
                    ii == i && self.s.nbr_of_ul[i].contains(&j)
                }
                _ => false,
            },
            Agent::Downlink(j) => match fact {
                Fact::DlIn(jj) | Fact::DlPrice(jj) | Fact::DlSinr(jj) => jj == j,
                _ => false,
            },
        }
    }
}

/// Read log with hard permission checks.
pub struct AccessLog<'a> {
    table: KnowledgeTable<'a>,
    distinct: RefCell<BTreeSet<(Agent, Fact)>>,
    total: RefCell<usize>,
}

impl<'a> AccessLog<'a> {
    pub fn new(s: &'a Scenario) -> Self {
        Self {
            table: KnowledgeTable::new(s),
            distinct: RefCell::new(BTreeSet::new()),
            total: RefCell::new(0),
        }
    }

    /// Record a read, failing hard if the agent may not hold the fact.
    pub fn read(&self, agent: Agent, fact: Fact) -> Result<()> {
        if !self.table.permitted(agent, fact) {
            return Err(Error::KnowledgeViolation {
                agent: agent.to_string(),
                fact: fact.to_string(),
            });
        }
        self.distinct.borrow_mut().insert((agent, fact));
        *self.total.borrow_mut() += 1;
        Ok(())
    }

    pub fn distinct_reads(&self) -> Vec<(Agent, Fact)> {
        self.distinct.borrow().iter().copied().collect()
    }

    pub fn total_reads(&self) -> usize {
        *self.total.borrow()
    }
}

/// Outcome of a guarded run plus protocol bookkeeping.
pub struct GuardedRun {
    pub result: RunResult,
    /// Feedback messages emitted per round (one per downlink user).
    pub messages_per_round: usize,
    pub rounds: usize,
    /// Worst relative deviation between protocol-recovered values and
    /// direct model computation across the whole run.
    pub max_protocol_deviation: f64,
    pub distinct_reads: Vec<(Agent, Fact)>,
    pub total_reads: usize,
}

/// Execute the distributed iteration with every cross-node quantity
/// carried by feedback messages and every agent read checked against the
/// knowledge table. Any violation aborts with the offending agent/fact.
pub fn run_guarded(
    s: &Scenario,
    utils: &UtilitySet,
    params: &AlgoParams,
    oracle_utility: Option<f64>,
) -> Result<GuardedRun> {
    let log = AccessLog::new(s);
    let mut rounds = 0usize;
    let mut max_dev = 0.0f64;

    let result = run_with(s, utils, params, oracle_utility, |state: &AlgoState| {
        rounds += 1;

        // downlink users emit their feedback from their own state
        let msgs: Vec<FeedbackMsg> = (0..s.k_dl())
            .map(|j| {
                log.read(Agent::Downlink(j), Fact::DlPrice(j))?;
                log.read(Agent::Downlink(j), Fact::DlIn(j))?;
                make_feedback(j, state.q_dl[j], state.in_dl[j], s)
            })
            .collect::<Result<_>>()?;

        // base station recovers each downlink SINR from the feedback
        let mut dl_sinr = vec![0.0; s.k_dl()];
        for msg in &msgs {
            let j = msg.sender;
            log.read(Agent::Bs, Fact::DlPathLoss(j))?;
            log.read(Agent::Bs, Fact::DlPower(j))?;
            log.read(Agent::Bs, Fact::DlPrice(j))?;
            log.read(Agent::Bs, Fact::DlSinr(j))?;
            let p_dl_j = state.log_p_dl[j].exp();
            let recovered = bs_recover_sinr(msg, p_dl_j, state.q_dl[j], s.m);
            let direct = s.downlink_sinr_with_in(p_dl_j, state.in_dl[j], j);
            max_dev = max_dev.max((recovered - direct).abs() / direct.abs().max(1e-300));
            dl_sinr[j] = recovered;
        }

        // uplink users overhear the messages from their neighbors
        let mut metrics = MetricTable::new(s.k_ul());
        for msg in &msgs {
            let j = msg.sender;
            for &(i, _) in &msg.pilot_gain_to_ul {
                log.read(Agent::Uplink(i), Fact::InterferenceGain { i, j })?;
                log.read(Agent::Uplink(i), Fact::UlPower(i))?;
                log.read(Agent::Uplink(i), Fact::Metric { i, j })?;
                let p_i = state.log_p_ul[i].exp();
                let (m_ij, _) = ul_overhear_metric(msg, i, p_i)?;
                let direct = crate::distpc::in_metric(state.q_dl[j], s.g_i[i][j], state.in_dl[j]);
                max_dev = max_dev.max((m_ij - direct).abs() / direct.abs().max(1e-300));
                metrics.insert(i, j, m_ij);
            }
        }

        // each uplink user knows its own SINR and price
        let ul_sinr = (0..s.k_ul())
            .map(|i| {
                log.read(Agent::Uplink(i), Fact::UlSinr(i))?;
                log.read(Agent::Uplink(i), Fact::UlPrice(i))?;
                Ok(s.uplink_sinr(state.log_p_ul[i].exp(), i))
            })
            .collect::<Result<_>>()?;

        Ok(RoundInputs {
            ul_sinr,
            dl_sinr,
            metrics,
        })
    })?;

    Ok(GuardedRun {
        result,
        messages_per_round: s.k_dl(),
        rounds,
        max_protocol_deviation: max_dev,
        distinct_reads: log.distinct_reads(),
        total_reads: log.total_reads(),
    })
}

/// Information-item counts: what a centralized controller would have to
/// gather versus what the one-hop architecture moves per round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverheadReport {
    /// Uplink path-loss items at the controller.
    pub centralized_ul_items: usize,
    /// Downlink path-loss items at the controller.
    pub centralized_dl_items: usize,
    /// Interference-channel items at the controller.
    pub centralized_interference_items: usize,
    /// Feedback scalars arriving at the base station per round.
    pub onehop_bs_items_per_round: usize,
    /// Overheard metrics held by each uplink user.
    pub onehop_metrics_per_ul: Vec<usize>,
}

pub fn overhead_accounting(s: &Scenario) -> OverheadReport {
    OverheadReport {
        centralized_ul_items: s.k_ul(),
        centralized_dl_items: s.k_dl(),
        centralized_interference_items: s.nbr_of_ul.iter().map(|n| n.len()).sum(),
        onehop_bs_items_per_round: s.k_dl(),
        onehop_metrics_per_ul: s.nbr_of_ul.iter().map(|n| n.len()).collect(),
    }
}

/// Wire form of a feedback message, little-endian: `u32` sender index,
/// `f64` payload, `u32` neighbor count, then `(u32 index, f64 gain)`
/// pairs. The path loss toward the base station rides the physical-layer
/// pilots, not the payload.
pub fn encode_feedback(msg: &FeedbackMsg) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 12 * msg.pilot_gain_to_ul.len());
    out.extend_from_slice(&(msg.sender as u32).to_le_bytes());
    out.extend_from_slice(&msg.fb.to_le_bytes());
    out.extend_from_slice(&(msg.pilot_gain_to_ul.len() as u32).to_le_bytes());
    for &(i, g) in &msg.pilot_gain_to_ul {
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&g.to_le_bytes());
    }
    out
}

/// Decoded wire payload; see [`encode_feedback`].
#[derive(Debug, Clone, PartialEq)]
pub struct WireFeedback {
    pub sender: usize,
    pub fb: f64,
    pub ul_gains: Vec<(usize, f64)>,
}

pub fn decode_feedback(bytes: &[u8]) -> Result<WireFeedback> {
    let bad = || Error::InvalidConfig("truncated feedback payload".into());
    let take4 = |b: &[u8], at: usize| -> Result<u32> {
        Ok(u32::from_le_bytes(
            b.get(at..at + 4).ok_or_else(bad)?.try_into().unwrap(),
        ))
    };
    let take8 = |b: &[u8], at: usize| -> Result<f64> {
        Ok(f64::from_le_bytes(
            b.get(at..at + 8).ok_or_else(bad)?.try_into().unwrap(),
        ))
    };
    let sender = take4(bytes, 0)? as usize;
    let fb = take8(bytes, 4)?;
    let n = take4(bytes, 12)? as usize;
    let mut ul_gains = Vec::with_capacity(n);
    let mut at = 16;
    for _ in 0..n {
        let i = take4(bytes, at)? as usize;
        let g = take8(bytes, at + 4)?;
        ul_gains.push((i, g));
        at += 12;
    }
    if at != bytes.len() {
        return Err(Error::InvalidConfig(
            "trailing bytes in feedback payload".into(),
        ));
    }
    Ok(WireFeedback {
        sender,
        fb,
        ul_gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{db_to_linear, dbm_to_watts};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-30)
    }

    fn scenario() -> Scenario {
        Scenario::new(
            128,
            vec![db_to_linear(-50.0), db_to_linear(-45.0)],
            vec![
                db_to_linear(-56.0),
                db_to_linear(-61.0),
                db_to_linear(-65.0),
                db_to_linear(-58.0),
            ],
            vec![
                vec![db_to_linear(-59.0), db_to_linear(-60.0), 0.0, 0.0],
                vec![db_to_linear(-62.0), db_to_linear(-55.0), 0.0, 0.0],
            ],
            1e-5,
            dbm_to_watts(23.0),
            dbm_to_watts(45.0),
            10.0,
            db_to_linear(-100.0),
        )
        .unwrap()
    }

    #[test]
    fn feedback_hand_values() {
        let s = scenario();
        let msg = make_feedback(0, 2.0, 2e-3, &s).unwrap();
        assert!(close(msg.fb, 1000.0, 1e-12));
        assert!(make_feedback(0, 0.0, 2e-3, &s).is_err());
        assert!(make_feedback(0, 1.0, 0.0, &s).is_err());
        // floor case
        let msg = make_feedback(0, 1e-8, s.n0, &s).unwrap();
        assert!(close(msg.fb, 1e-8 / s.n0, 1e-12));
    }

    #[test]
    fn feedback_identity_forms_agree() {
        // q/IN equals q*sinr/(M p g) for any consistent state
        let s = scenario();
        let (q, in_j, p) = (0.37, 3.3e-6, 4.2);
        let msg = make_feedback(0, q, in_j, &s).unwrap();
        let sinr = s.downlink_sinr_with_in(p, in_j, 0);
        let alt = q * sinr / (s.m as f64 * p * s.g_dl[0]);
        assert!(close(msg.fb, alt, 1e-12));
    }

    #[test]
    fn bs_recovery_round_trips() {
        let s = scenario();
        let (q, in_j, p) = (0.8, 5e-6, 6.0);
        let msg = make_feedback(1, q, in_j, &s).unwrap();
        let recovered = bs_recover_sinr(&msg, p, q, s.m);
        let direct = s.downlink_sinr_with_in(p, in_j, 1);
        assert!(close(recovered, direct, 1e-12));
        assert_eq!(bs_recover_sinr(&msg, 0.0, q, s.m), 0.0);
    }

    #[test]
    fn bs_recovery_hand_values() {
        let msg = FeedbackMsg {
            sender: 0,
            fb: 1000.0,
            pilot_gain_to_bs: 2.512e-6,
            pilot_gain_to_ul: vec![],
        };
        // 1000 * 128 * 1 * 2.512e-6 / 2
        assert!(close(bs_recover_sinr(&msg, 1.0, 2.0, 128), 0.160768, 1e-5));
    }

    #[test]
    fn overhear_metric_values() {
        let s = scenario();
        let msg = make_feedback(0, 2.0, 2e-3, &s).unwrap(); // fb = 1000
        let mut msg = msg;
        msg.pilot_gain_to_ul = vec![(0, 1e-6)];
        let (m, weighted) = ul_overhear_metric(&msg, 0, 0.2).unwrap();
        assert!(close(m, 1e-3, 1e-12));
        assert!(close(weighted, 2e-4, 1e-12));
        // identity against the global computation
        let direct = crate::distpc::in_metric(2.0, 1e-6, 2e-3);
        assert!(close(m, direct, 1e-15));
        // zero gain gives zero metric
        msg.pilot_gain_to_ul = vec![(0, 0.0)];
        let (m, w) = ul_overhear_metric(&msg, 0, 0.2).unwrap();
        assert_eq!((m, w), (0.0, 0.0));
        // non-neighbor is rejected
        assert!(ul_overhear_metric(&msg, 1, 0.2).is_err());
    }

    #[test]
    fn knowledge_table_blocks_two_hop_facts() {
        let s = scenario();
        let log = AccessLog::new(&s);
        // own facts pass
        assert!(log.read(Agent::Uplink(0), Fact::UlSinr(0)).is_ok());
        assert!(log
            .read(Agent::Uplink(0), Fact::Metric { i: 0, j: 1 })
            .is_ok());
        // another user's metric is two-hop information
        let err = log
            .read(Agent::Uplink(0), Fact::Metric { i: 1, j: 1 })
            .unwrap_err();
        match err {
            Error::KnowledgeViolation { agent, fact } => {
                assert_eq!(agent, "uplink(0)");
                assert_eq!(fact, "m[1][1]");
            }
            other => panic!("unexpected error {other:?}"),
        }
        // the BS may not read uplink powers
        assert!(log.read(Agent::Bs, Fact::UlPower(0)).is_err());
        // a downlink user may not read its neighbor's interference gain
        assert!(log
            .read(Agent::Downlink(0), Fact::InterferenceGain { i: 0, j: 0 })
            .is_err());
    }

    #[test]
    fn guarded_run_matches_direct_run() {
        let s = scenario();
        let utils = UtilitySet::uniform(
            crate::utility::UtilityFn::log(1.0),
            crate::utility::UtilityFn::log(1.0),
            s.k_ul(),
            s.k_dl(),
        );
        let params = AlgoParams {
            max_iters: 300,
            ..AlgoParams::default()
        };
        let direct = crate::distpc::run(&s, &utils, &params, None).unwrap();
        let guarded = run_guarded(&s, &utils, &params, None).unwrap();
        assert_eq!(guarded.messages_per_round, s.k_dl());
        assert!(guarded.max_protocol_deviation <= 1e-12);
        assert_eq!(direct.state.trace.len(), guarded.result.state.trace.len());
        for (a, b) in direct.state.trace.iter().zip(&guarded.result.state.trace) {
            assert!(close(a.sum_utility, b.sum_utility, 1e-12));
            for (x, y) in a.p_ul.iter().zip(&b.p_ul) {
                assert!(close(*x, *y, 1e-12));
            }
            for (x, y) in a.p_dl.iter().zip(&b.p_dl) {
                assert!(close(*x, *y, 1e-12));
            }
            for (x, y) in a.q_dl.iter().zip(&b.q_dl) {
                assert!(close(*x, *y, 1e-12));
            }
        }
    }

    #[test]
    fn overhead_counts() {
        let k_ul = 15;
        let k_dl = 20;
        let s = Scenario::new(
            4096,
            vec![1e-6; k_ul],
            vec![1e-6; k_dl],
            vec![vec![1e-7; k_dl]; k_ul],
            1e-9,
            dbm_to_watts(23.0),
            dbm_to_watts(45.0),
            10.0,
            0.0,
        )
        .unwrap();
        let report = overhead_accounting(&s);
        assert_eq!(report.centralized_interference_items, 300);
        assert_eq!(
            report.centralized_ul_items + report.centralized_dl_items,
            35
        );
        assert_eq!(report.onehop_bs_items_per_round, 20);
        assert!(report.onehop_metrics_per_ul.iter().all(|&n| n == 20));

        // empty neighborhoods contribute nothing
        let s0 = Scenario::new(
            128,
            vec![1e-6; 2],
            vec![1e-6; 2],
            vec![vec![0.0; 2]; 2],
            1e-9,
            dbm_to_watts(23.0),
            dbm_to_watts(45.0),
            10.0,
            0.0,
        )
        .unwrap();
        assert_eq!(overhead_accounting(&s0).centralized_interference_items, 0);
    }

    #[test]
    fn per_round_payload_is_independent_of_uplink_count() {
        // one feedback scalar per downlink user, whatever the uplink side
        for k_ul in [1usize, 3, 6] {
            let s = Scenario::new(
                256,
                vec![1e-5; k_ul],
                vec![2e-6; 4],
                vec![vec![1e-7; 4]; k_ul],
                1e-5,
                dbm_to_watts(23.0),
                dbm_to_watts(45.0),
                10.0,
                db_to_linear(-100.0),
            )
            .unwrap();
            let utils = UtilitySet::uniform(
                crate::utility::UtilityFn::log(1.0),
                crate::utility::UtilityFn::log(1.0),
                k_ul,
                4,
            );
            let params = AlgoParams {
                max_iters: 10,
                ..AlgoParams::default()
            };
            let guarded = run_guarded(&s, &utils, &params, None).unwrap();
            assert_eq!(guarded.messages_per_round, 4);
        }
    }

    #[test]
    fn wire_codec_round_trips() {
        let msg = FeedbackMsg {
            sender: 3,
            fb: 1234.5678,
            pilot_gain_to_bs: 2.5e-6,
            pilot_gain_to_ul: vec![(0, 1e-6), (7, 3.3e-7)],
        };
        let bytes = encode_feedback(&msg);
        assert_eq!(bytes.len(), 16 + 2 * 12);
        let wire = decode_feedback(&bytes).unwrap();
        assert_eq!(wire.sender, 3);
        assert_eq!(wire.fb.to_bits(), msg.fb.to_bits());
        assert_eq!(wire.ul_gains, msg.pilot_gain_to_ul);
        assert!(decode_feedback(&bytes[..bytes.len() - 1]).is_err());
    }
}
