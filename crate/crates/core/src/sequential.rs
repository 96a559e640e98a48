//! Fully sequential reference loops: every reward is revealed and folded in
//! immediately after its play. Kept separate from the batch engine so the
//! two can be checked against each other.

use crate::bandit::{bernoulli_view, pseudo_regret_step, CommittedView, RunRecord};
use crate::contextual::ContextualPolicy;
use crate::engine::RunStreams;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policy::MabPolicy;

pub fn run_mab_sequential(
    policy: &MabPolicy,
    env: &mut dyn Environment,
    horizon: u64,
    streams: &mut RunStreams,
) -> Result<RunRecord> {
    let n = policy.arms();
    if env.num_arms() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: env.num_arms(),
        });
    }
    let sweep = if policy.needs_initial_sweep() {
        n as u64
    } else {
        0
    };
    let mut stats = vec![CommittedView::default(); n];
    let mut record = RunRecord::new(streams.seed, n, horizon);

    for t in 1..=horizon {
        let arm = if t <= sweep {
            (t - 1) as usize
        } else {
            policy.select_arm(stats.iter().copied(), &mut streams.policy)?
        };
        let reward = env.draw_reward(arm, None, &mut streams.rewards)?;
        let s = &mut stats[arm];
        s.count += 1;
        s.sum += reward;
        if bernoulli_view(reward, &mut streams.coins) {
            s.successes += 1;
        } else {
            s.failures += 1;
        }
        let inst = pseudo_regret_step(env.optimal_reward(None)?, env.expected_reward(arm, None)?);
        record.push_round(arm, inst, t as usize);
    }
    record.flush_rounds = (1..=horizon).collect();
    Ok(record)
}

pub fn run_contextual_sequential(
    policy: &mut ContextualPolicy,
    env: &mut dyn Environment,
    horizon: u64,
    streams: &mut RunStreams,
) -> Result<RunRecord> {
    let n = env.num_arms();
    let mut record = RunRecord::new(streams.seed, n, horizon);
    for t in 1..=horizon {
        let ctx = env
            .contexts(t, &mut streams.contexts)?
            .ok_or(Error::MissingContext)?;
        let arm = policy.select(&ctx, &mut streams.policy)?;
        let reward = env.draw_reward(arm, Some(&ctx), &mut streams.rewards)?;
        bernoulli_view(reward, &mut streams.coins);
        policy
            .posterior_mut()
            .flush_update([(ctx.arm(arm), reward)])?;
        let inst = pseudo_regret_step(
            env.optimal_reward(Some(&ctx))?,
            env.expected_reward(arm, Some(&ctx))?,
        );
        record.push_round(arm, inst, t as usize);
    }
    record.flush_rounds = (1..=horizon).collect();
    Ok(record)
}
