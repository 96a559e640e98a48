//! Batch simulation loops.
//!
//! Rewards are drawn from the environment at play time and parked in the
//! pending batch; policies only ever see committed statistics.

use crate::bandit::{
    pseudo_regret_step, ArmStats, BatchState, FlushDecision, InvariantMonitor, RunRecord, Schedule,
};
use crate::contextual::ContextualPolicy;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policy::MabPolicy;
use crate::sampling::RandomStream;

/// The independent random streams of one run, all derived from its seed.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub seed: u64,
    /// Posterior and index draws.
    pub policy: RandomStream,
    /// Environment reward noise.
    pub rewards: RandomStream,
    /// Synthetic contexts.
    pub contexts: RandomStream,
    /// Bernoulli rounding of revealed rewards.
    pub coins: RandomStream,
    /// Per-run ground truth (e.g. the linear parameter).
    pub instance: RandomStream,
}

impl RunStreams {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            seed,
            policy: RandomStream::with_stream(seed, 0),
            rewards: RandomStream::with_stream(seed, 1),
            contexts: RandomStream::with_stream(seed, 2),
            coins: RandomStream::with_stream(seed, 3),
            instance: RandomStream::with_stream(seed, 4),
        }
    }
}

fn check_arms(expected: usize, env: &dyn Environment) -> Result<()> {
    if env.num_arms() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: env.num_arms(),
        });
    }
    Ok(())
}

/// Runs a multi-armed policy under `schedule` for `horizon` rounds.
///
/// Policies that need an initialization sweep play arms `0..N` first; those
/// `N` plays form one batch (one batch per play under
/// [`Schedule::EveryRound`]).
pub fn run_mab(
    policy: &MabPolicy,
    schedule: Schedule,
    env: &mut dyn Environment,
    horizon: u64,
    streams: &mut RunStreams,
    mut monitor: Option<&mut InvariantMonitor>,
) -> Result<RunRecord> {
    let n = policy.arms();
    check_arms(n, env)?;
    let sweep = if policy.needs_initial_sweep() {
        n as u64
    } else {
        0
    };
    if let Some(m) = monitor.as_deref_mut() {
        m.set_warmup(sweep);
    }
    let mut state = BatchState::new(n);
    let mut record = RunRecord::new(streams.seed, n, horizon);

    for t in 1..=horizon {
        let batch_index = state.batch_count() + 1;
        let (arm, decision) = if t <= sweep {
            let arm = (t - 1) as usize;
            let reward = env.draw_reward(arm, None, &mut streams.rewards)?;
            state.play_unscheduled(t, arm, reward);
            let flush = schedule == Schedule::EveryRound || t == sweep;
            (
                arm,
                if flush {
                    FlushDecision::Flush
                } else {
                    FlushDecision::Buffer
                },
            )
        } else {
            let views = state.arms().iter().map(ArmStats::committed);
            let arm = policy.select_arm(views, &mut streams.policy)?;
            let reward = env.draw_reward(arm, None, &mut streams.rewards)?;
            (arm, state.play(t, arm, None, reward, schedule, horizon))
        };
        if decision == FlushDecision::Flush {
            state.flush(t, &mut streams.coins);
        }
        let inst = pseudo_regret_step(env.optimal_reward(None)?, env.expected_reward(arm, None)?);
        record.push_round(arm, inst, batch_index);
        if let Some(m) = monitor.as_deref_mut() {
            m.after_round(t, &state, schedule, arm, decision, record.final_regret());
        }
    }

    record.residual = state.settle(&mut streams.coins).len();
    record.flush_rounds = state.flush_rounds().to_vec();
    if let Some(m) = monitor {
        m.finish(&record, schedule);
    }
    Ok(record)
}

/// Runs linear contextual Thompson Sampling under `schedule`.
///
/// The per-arm doubling counters and the shared pending batch work exactly
/// as in the multi-armed case; each flush folds the revealed plays into the
/// posterior.
pub fn run_contextual(
    policy: &mut ContextualPolicy,
    schedule: Schedule,
    env: &mut dyn Environment,
    horizon: u64,
    streams: &mut RunStreams,
    mut monitor: Option<&mut InvariantMonitor>,
) -> Result<RunRecord> {
    let n = env.num_arms();
    let mut state = BatchState::new(n);
    let mut record = RunRecord::new(streams.seed, n, horizon);

    for t in 1..=horizon {
        let batch_index = state.batch_count() + 1;
        let ctx = env
            .contexts(t, &mut streams.contexts)?
            .ok_or(Error::MissingContext)?;
        check_arms(ctx.num_arms(), env)?;
        let arm = policy.select(&ctx, &mut streams.policy)?;
        let reward = env.draw_reward(arm, Some(&ctx), &mut streams.rewards)?;
        let decision = state.play(
            t,
            arm,
            Some(ctx.arm(arm).to_vec()),
            reward,
            schedule,
            horizon,
        );
        if decision == FlushDecision::Flush {
            let revealed = state.flush(t, &mut streams.coins);
            policy.posterior_mut().flush_update(
                revealed
                    .iter()
                    .map(|e| (e.context.as_deref().unwrap_or_default(), e.reward())),
            )?;
        }
        let inst = pseudo_regret_step(
            env.optimal_reward(Some(&ctx))?,
            env.expected_reward(arm, Some(&ctx))?,
        );
        record.push_round(arm, inst, batch_index);
        if let Some(m) = monitor.as_deref_mut() {
            m.after_round(t, &state, schedule, arm, decision, record.final_regret());
        }
    }

    record.residual = state.settle(&mut streams.coins).len();
    record.flush_rounds = state.flush_rounds().to_vec();
    if let Some(m) = monitor {
        m.finish(&record, schedule);
    }
    Ok(record)
}
