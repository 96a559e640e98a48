//! Per-arm bookkeeping, the batch flush machinery and regret records.
//!
//! Every play is recorded against its arm immediately (`k_total`) but its
//! reward sits in a [`PendingBatch`] until the next flush. Only committed
//! statistics are ever handed to a policy.

use crate::env::bernoulli_round;
use crate::error::{invalid, Error, Result};
use crate::sampling::RandomStream;

/// Outcome of recording a play: keep buffering or query the batch now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushDecision {
    Buffer,
    Flush,
}

/// Posterior-relevant statistics of one arm, restricted to revealed plays.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommittedView {
    pub count: u64,
    pub sum: f64,
    pub successes: u64,
    pub failures: u64,
}

impl CommittedView {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArmStats {
    k_total: u64,
    k_committed: u64,
    level: u32,
    sum_committed: f64,
    successes: u64,
    failures: u64,
}

impl ArmStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one play and applies the doubling rule: the arm asks for a
    /// flush whenever its play count reaches `2^level`, then raises its level.
    pub fn record_play(&mut self) -> FlushDecision {
        self.k_total += 1;
        let threshold = 1u64.checked_shl(self.level).unwrap_or(u64::MAX);
        if self.k_total < threshold {
            FlushDecision::Buffer
        } else {
            self.level += 1;
            FlushDecision::Flush
        }
    }

    fn commit(&mut self, reward: f64, success: bool) {
        self.k_committed += 1;
        self.sum_committed += reward;
        if success {
            self.successes += 1;
        } else {
            self.failures += 1;
        }
    }

    pub fn k_total(&self) -> u64 {
        self.k_total
    }

    pub fn k_committed(&self) -> u64 {
        self.k_committed
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn sum_committed(&self) -> f64 {
        self.sum_committed
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn failures(&self) -> u64 {
        self.failures
    }

    pub fn committed(&self) -> CommittedView {
        CommittedView {
            count: self.k_committed,
            sum: self.sum_committed,
            successes: self.successes,
            failures: self.failures,
        }
    }
}

/// One play whose reward has been drawn but not yet revealed.
#[derive(Debug, Clone)]
pub struct PendingEntry {
    pub round: u64,
    pub arm: usize,
    pub context: Option<Vec<f64>>,
    reward: f64,
}

impl PendingEntry {
    pub(crate) fn reward(&self) -> f64 {
        self.reward
    }
}

/// Plays awaiting simultaneous reveal.
#[derive(Debug, Clone, Default)]
pub struct PendingBatch {
    entries: Vec<PendingEntry>,
}

impl PendingBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn arms(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.arm)
    }

    /// Reading a reward before its flush breaks the batch information
    /// constraint; this accessor exists so that misuse fails loudly.
    pub fn peek_reward(&self, _index: usize) -> Result<f64> {
        Err(Error::ContractViolation(
            "pending rewards are hidden until the batch is flushed",
        ))
    }

    fn push(&mut self, entry: PendingEntry) {
        self.entries.push(entry);
    }

    fn take(&mut self) -> Vec<PendingEntry> {
        std::mem::take(&mut self.entries)
    }
}

/// When to query the pending batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Per-arm doubling rule: flush at an arm's 1st, 2nd, 4th, 8th, ... play.
    Doubling,
    /// Flush after every play (fully sequential behaviour).
    EveryRound,
    /// Equal-sized batches fixed in advance.
    Static { batches: u64 },
}

impl Schedule {
    pub fn fixed_batches(batches: u64, horizon: u64) -> Result<Self> {
        static_flush_rule(1, horizon, batches)?;
        Ok(Schedule::Static { batches })
    }

    /// Records the play on `arm` and decides whether round `t` ends a batch.
    pub fn decide(&self, arm: &mut ArmStats, t: u64, horizon: u64) -> FlushDecision {
        let doubling = arm.record_play();
        match *self {
            Schedule::Doubling => doubling,
            Schedule::EveryRound => FlushDecision::Flush,
            Schedule::Static { batches } => {
                static_flush_rule(t, horizon, batches).unwrap_or(FlushDecision::Flush)
            }
        }
    }
}

/// Static equal-size batching: flush when `t` is a multiple of `ceil(T/m)`
/// or at the horizon.
pub fn static_flush_rule(t: u64, horizon: u64, batches: u64) -> Result<FlushDecision> {
    if batches == 0 || batches > horizon {
        return Err(invalid(
            "batches",
            format!("must lie in [1, {horizon}], got {batches}"),
        ));
    }
    let period = horizon.div_ceil(batches);
    Ok(if t.is_multiple_of(period) || t == horizon {
        FlushDecision::Flush
    } else {
        FlushDecision::Buffer
    })
}

/// Instantaneous pseudo-regret: gap between the best achievable expected
/// reward and that of the chosen action.
#[inline]
pub fn pseudo_regret_step(optimal: f64, chosen: f64) -> f64 {
    (optimal - chosen).max(0.0)
}

/// Bernoulli view of a revealed reward: a coin with bias `r` clamped to
/// `[0, 1]`. Always consumes one uniform, so `{0, 1}` rewards map exactly.
pub(crate) fn bernoulli_view(reward: f64, coins: &mut RandomStream) -> bool {
    bernoulli_round(reward.clamp(0.0, 1.0), coins).expect("clamped reward lies in [0, 1]") == 1
}

/// All mutable scheduling state of one run: arm statistics, the shared
/// pending buffer, and the rounds at which batches were queried.
#[derive(Debug, Clone)]
pub struct BatchState {
    arms: Vec<ArmStats>,
    pending: PendingBatch,
    flush_rounds: Vec<u64>,
}

impl BatchState {
    pub fn new(num_arms: usize) -> Self {
        Self {
            arms: vec![ArmStats::new(); num_arms],
            pending: PendingBatch::default(),
            flush_rounds: Vec::new(),
        }
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }

    pub fn pending(&self) -> &PendingBatch {
        &self.pending
    }

    pub fn flush_rounds(&self) -> &[u64] {
        &self.flush_rounds
    }

    pub fn batch_count(&self) -> usize {
        self.flush_rounds.len()
    }

    /// Buffers a play and returns the schedule's verdict for this round.
    pub fn play(
        &mut self,
        round: u64,
        arm: usize,
        context: Option<Vec<f64>>,
        reward: f64,
        schedule: Schedule,
        horizon: u64,
    ) -> FlushDecision {
        let decision = schedule.decide(&mut self.arms[arm], round, horizon);
        self.pending.push(PendingEntry {
            round,
            arm,
            context,
            reward,
        });
        decision
    }

    /// Same as [`BatchState::play`] but records the play without consulting
    /// the schedule; used by initialization sweeps.
    pub fn play_unscheduled(&mut self, round: u64, arm: usize, reward: f64) {
        self.arms[arm].record_play();
        self.pending.push(PendingEntry {
            round,
            arm,
            context: None,
            reward,
        });
    }

    /// Queries the batch at `round`: reveals every pending reward and folds
    /// it into its arm. Returns the revealed entries in play order.
    pub fn flush(&mut self, round: u64, coins: &mut RandomStream) -> Vec<PendingEntry> {
        self.flush_rounds.push(round);
        self.reveal(coins)
    }

    /// Reveals leftover plays at the end of the horizon without counting a
    /// batch.
    pub fn settle(&mut self, coins: &mut RandomStream) -> Vec<PendingEntry> {
        self.reveal(coins)
    }

    fn reveal(&mut self, coins: &mut RandomStream) -> Vec<PendingEntry> {
        let entries = self.pending.take();
        for e in &entries {
            let success = bernoulli_view(e.reward, coins);
            self.arms[e.arm].commit(e.reward, success);
        }
        entries
    }
}

/// Per-round trace of one simulation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub seed: u64,
    pub num_arms: usize,
    pub arms: Vec<u32>,
    pub inst_regret: Vec<f64>,
    pub cum_regret: Vec<f64>,
    /// 1-based index of the batch each round belongs to.
    pub batch_index: Vec<u32>,
    pub flush_rounds: Vec<u64>,
    /// Plays revealed after the horizon, outside any counted batch.
    pub residual: usize,
}

impl RunRecord {
    pub fn new(seed: u64, num_arms: usize, horizon: u64) -> Self {
        let cap = horizon as usize;
        Self {
            seed,
            num_arms,
            arms: Vec::with_capacity(cap),
            inst_regret: Vec::with_capacity(cap),
            cum_regret: Vec::with_capacity(cap),
            batch_index: Vec::with_capacity(cap),
            flush_rounds: Vec::new(),
            residual: 0,
        }
    }

    pub fn push_round(&mut self, arm: usize, inst_regret: f64, batch_index: usize) {
        let prev = self.cum_regret.last().copied().unwrap_or(0.0);
        self.arms.push(arm as u32);
        self.inst_regret.push(inst_regret);
        self.cum_regret.push(prev + inst_regret);
        self.batch_index.push(batch_index as u32);
    }

    pub fn horizon(&self) -> u64 {
        self.arms.len() as u64
    }

    pub fn batch_count(&self) -> usize {
        self.flush_rounds.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    /// Cumulative pseudo-regret after round `t` (1-based; 0 for `t = 0`).
    pub fn regret_at(&self, t: u64) -> f64 {
        match t {
            0 => 0.0,
            t => self.cum_regret[(t as usize).min(self.cum_regret.len()) - 1],
        }
    }

    /// Number of batches queried at rounds `<= t`.
    pub fn batches_through(&self, t: u64) -> usize {
        self.flush_rounds.partition_point(|&r| r <= t)
    }

    /// Number of plays of `arm` during rounds `1..=t`.
    pub fn pulls_through(&self, arm: usize, t: u64) -> usize {
        let end = (t as usize).min(self.arms.len());
        self.arms[..end]
            .iter()
            .filter(|&&a| a as usize == arm)
            .count()
    }
}

/// Upper bound on doubling-rule flushes: `N * (floor(log2 T) + 1)`.
pub fn doubling_batch_bound(num_arms: usize, horizon: u64) -> usize {
    if horizon == 0 {
        return 0;
    }
    num_arms * (horizon.ilog2() as usize + 1)
}

/// Runtime checker for the scheduler invariants.
#[derive(Debug, Clone, Default)]
pub struct InvariantMonitor {
    warmup: u64,
    violations: usize,
    messages: Vec<String>,
    last_regret: f64,
}

const MAX_MESSAGES: usize = 32;

impl InvariantMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Skip the half-size check for rounds `<= rounds` (initialization sweep).
    pub(crate) fn set_warmup(&mut self, rounds: u64) {
        self.warmup = rounds;
    }

    pub fn violations(&self) -> usize {
        self.violations
    }

    pub fn messages(&self) -> &[String] {
        &self.messages
    }

    fn fail(&mut self, msg: String) {
        self.violations += 1;
        if self.messages.len() < MAX_MESSAGES {
            self.messages.push(msg);
        }
    }

    /// Checks state after round `t` has been played (and flushed if due).
    pub fn after_round(
        &mut self,
        t: u64,
        state: &BatchState,
        schedule: Schedule,
        chosen: usize,
        decision: FlushDecision,
        cum_regret: f64,
    ) {
        for (a, arm) in state.arms().iter().enumerate() {
            if arm.k_committed() > arm.k_total() {
                self.fail(format!(
                    "round {t}: arm {a} has more committed than total plays"
                ));
            }
            if arm.successes() + arm.failures() != arm.k_committed() {
                self.fail(format!("round {t}: arm {a} Bernoulli view out of sync"));
            }
            if schedule == Schedule::Doubling
                && t > self.warmup
                && 2 * arm.k_committed() < arm.k_total()
            {
                self.fail(format!(
                    "round {t}: arm {a} half-size violated ({} committed of {})",
                    arm.k_committed(),
                    arm.k_total()
                ));
            }
        }
        if schedule == Schedule::Doubling
            && t > self.warmup
            && decision == FlushDecision::Flush
            && !state.arms()[chosen].k_total().is_power_of_two()
        {
            self.fail(format!(
                "round {t}: arm {chosen} triggered a flush at count {}",
                state.arms()[chosen].k_total()
            ));
        }
        if decision == FlushDecision::Flush && !state.pending().is_empty() {
            self.fail(format!("round {t}: pending batch not emptied by flush"));
        }
        if cum_regret < self.last_regret {
            self.fail(format!("round {t}: cumulative regret decreased"));
        }
        self.last_regret = cum_regret;
    }

    pub fn finish(&mut self, record: &RunRecord, schedule: Schedule) {
        if schedule == Schedule::Doubling {
            let bound = doubling_batch_bound(record.num_arms, record.horizon());
            if record.batch_count() > bound {
                self.fail(format!(
                    "{} batches exceed the doubling bound {bound}",
                    record.batch_count()
                ));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_trace() {
        let mut arm = ArmStats::new();
        let decisions: Vec<_> = (0..9).map(|_| arm.record_play()).collect();
        use FlushDecision::*;
        assert_eq!(
            decisions,
            [Flush, Flush, Buffer, Flush, Buffer, Buffer, Buffer, Flush, Buffer]
        );
        assert_eq!(arm.level(), 4);
    }

    #[test]
    fn flush_folds_bernoulli_rewards() {
        let mut st = BatchState::new(3);
        let mut coins = RandomStream::new(0);
        for (t, r) in [(1, 1.0), (2, 0.0), (3, 1.0)] {
            st.play(t, 2, None, r, Schedule::Static { batches: 1 }, 3);
        }
        assert_eq!(st.pending().len(), 3);
        st.flush(3, &mut coins);
        let a = &st.arms()[2];
        assert_eq!((a.k_committed(), a.successes(), a.failures()), (3, 2, 1));
        assert_eq!(a.sum_committed(), 2.0);
        assert!(st.pending().is_empty());
    }

    #[test]
    fn empty_flush_still_counts_as_batch() {
        let mut st = BatchState::new(2);
        let mut coins = RandomStream::new(0);
        let before = st.arms().to_vec();
        assert!(st.flush(5, &mut coins).is_empty());
        assert_eq!(st.arms(), &before[..]);
        assert_eq!(st.flush_rounds(), &[5]);
    }

    #[test]
    fn single_arm_flush_rounds() {
        let mut st = BatchState::new(1);
        let mut coins = RandomStream::new(0);
        for t in 1..=1000 {
            if st.play(t, 0, None, 1.0, Schedule::Doubling, 1000) == FlushDecision::Flush {
                st.flush(t, &mut coins);
            }
        }
        let expected: Vec<u64> = (0..10).map(|j| 1u64 << j).collect();
        assert_eq!(st.flush_rounds(), &expected[..]);
        assert_eq!(st.batch_count(), doubling_batch_bound(1, 1000));
    }

    #[test]
    fn pending_rewards_are_hidden() {
        let mut st = BatchState::new(1);
        st.play(1, 0, None, 0.5, Schedule::Static { batches: 1 }, 2);
        assert!(matches!(
            st.pending().peek_reward(0),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn static_rule() {
        let flushes: Vec<u64> = (1..=100)
            .filter(|&t| static_flush_rule(t, 100, 4).unwrap() == FlushDecision::Flush)
            .collect();
        assert_eq!(flushes, [25, 50, 75, 100]);
        assert!((1..=7).all(|t| static_flush_rule(t, 7, 7).unwrap() == FlushDecision::Flush));
        let single: Vec<u64> = (1..=9)
            .filter(|&t| static_flush_rule(t, 9, 1).unwrap() == FlushDecision::Flush)
            .collect();
        assert_eq!(single, [9]);
        assert!(static_flush_rule(1, 10, 0).is_err());
        assert!(static_flush_rule(1, 10, 11).is_err());
        // Uneven split still ends at the horizon.
        assert_eq!(static_flush_rule(10, 10, 3).unwrap(), FlushDecision::Flush);
    }

    #[test]
    fn regret_steps() {
        assert_eq!(pseudo_regret_step(0.75, 0.75), 0.0);
        assert_eq!(pseudo_regret_step(0.75, 0.5), 0.25);
    }

    #[test]
    fn non_binary_rewards_use_coins() {
        let mut st = BatchState::new(1);
        let mut coins = RandomStream::new(3);
        let n = 20_000;
        for t in 1..=n {
            st.play(t, 0, None, 0.3, Schedule::Static { batches: 1 }, n);
        }
        st.flush(n, &mut coins);
        let a = &st.arms()[0];
        assert_eq!(a.successes() + a.failures(), n);
        let freq = a.successes() as f64 / n as f64;
        assert!((freq - 0.3).abs() < 3.0 * (0.21f64 / n as f64).sqrt());
    }

    #[test]
    fn record_queries() {
        let mut rec = RunRecord::new(0, 2, 4);
        rec.push_round(0, 0.0, 1);
        rec.push_round(1, 0.25, 2);
        rec.push_round(1, 0.25, 2);
        rec.flush_rounds = vec![1, 3];
        assert_eq!(rec.regret_at(0), 0.0);
        assert_eq!(rec.regret_at(2), 0.25);
        assert_eq!(rec.final_regret(), 0.5);
        assert_eq!(rec.batches_through(2), 1);
        assert_eq!(rec.pulls_through(1, 3), 2);
    }
}
