//! Arm-selection rules for the multi-armed setting.
//!
//! Each rule draws one index per arm from that arm's committed statistics
//! and the policy plays the argmax (lowest index on ties).

use serde::{Deserialize, Serialize};

use crate::bandit::{CommittedView, Schedule};
use crate::error::{invalid, Error, Result};
use crate::sampling::{log_plus, sample_beta, sample_gaussian, sample_j, RandomStream};

/// Posterior draw for Beta-Bernoulli Thompson Sampling:
/// `Beta(successes + 1, failures + 1)`.
#[inline]
pub fn bts_beta_sample(view: &CommittedView, stream: &mut RandomStream) -> Result<f64> {
    sample_beta(
        stream,
        view.successes as f64 + 1.0,
        view.failures as f64 + 1.0,
    )
}

/// Parameters `(mean, variance)` of the Gaussian posterior:
/// `mean = sum / (k + 1)`, `variance = 1 / (k + 1)`.
#[inline]
pub fn gaussian_posterior(view: &CommittedView) -> (f64, f64) {
    let denom = view.count as f64 + 1.0;
    (view.sum / denom, 1.0 / denom)
}

#[inline]
pub fn bts_gaussian_sample(view: &CommittedView, stream: &mut RandomStream) -> Result<f64> {
    let (mean, var) = gaussian_posterior(view);
    sample_gaussian(stream, mean, var)
}

/// Upper end of the MOTS confidence range:
/// `mean + sqrt(alpha / k * log+(T / (N k)))`.
#[inline]
pub fn bmots_tau(view: &CommittedView, horizon: u64, arms: usize, alpha: f64) -> Result<f64> {
    if view.count == 0 {
        return Err(Error::ContractViolation(
            "confidence range needs at least one committed play",
        ));
    }
    let k = view.count as f64;
    let mean = view.sum / k;
    let bonus = (alpha / k * log_plus(horizon as f64 / (arms as f64 * k))?).sqrt();
    Ok(mean + bonus)
}

/// `min(Normal(mean, variance), tau)`.
#[inline]
pub fn clipped_gaussian(
    mean: f64,
    variance: f64,
    tau: f64,
    stream: &mut RandomStream,
) -> Result<f64> {
    Ok(sample_gaussian(stream, mean, variance)?.min(tau))
}

#[inline]
pub fn bmots_sample(
    view: &CommittedView,
    rho: f64,
    alpha: f64,
    horizon: u64,
    arms: usize,
    stream: &mut RandomStream,
) -> Result<f64> {
    let tau = bmots_tau(view, horizon, arms, alpha)?;
    let k = view.count as f64;
    clipped_gaussian(view.sum / k, 1.0 / (rho * k), tau, stream)
}

#[inline]
pub fn bmotsj_sample(
    view: &CommittedView,
    alpha: f64,
    horizon: u64,
    arms: usize,
    stream: &mut RandomStream,
) -> Result<f64> {
    let tau = bmots_tau(view, horizon, arms, alpha)?;
    let k = view.count as f64;
    Ok(sample_j(stream, view.sum / k, 1.0 / k)?.min(tau))
}

/// UCB1 index `mean + sqrt(2 ln t / k)`, with `t` the number of revealed
/// plays across all arms.
#[inline]
pub fn ucb1_index(view: &CommittedView, t: u64) -> Result<f64> {
    if view.count == 0 {
        return Err(Error::ContractViolation(
            "UCB1 index needs one committed play",
        ));
    }
    let k = view.count as f64;
    Ok(view.sum / k + (2.0 * (t.max(1) as f64).ln() / k).sqrt())
}

/// The per-arm index rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexRule {
    TsBeta,
    TsGaussian,
    Mots { rho: f64, alpha: f64 },
    MotsJ { alpha: f64 },
    Ucb1,
}

/// An index rule bound to a problem size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MabPolicy {
    rule: IndexRule,
    arms: usize,
    horizon: u64,
}

impl MabPolicy {
    pub fn new(rule: IndexRule, arms: usize, horizon: u64) -> Result<Self> {
        if arms == 0 {
            return Err(invalid("arms", "need at least one arm"));
        }
        match rule {
            IndexRule::Mots { rho, alpha } => {
                if !(rho > 0.5 && rho < 1.0) {
                    return Err(invalid("rho", format!("must lie in (1/2, 1), got {rho}")));
                }
                check_alpha(alpha)?;
            }
            IndexRule::MotsJ { alpha } => check_alpha(alpha)?,
            _ => {}
        }
        let policy = Self {
            rule,
            arms,
            horizon,
        };
        if policy.needs_initial_sweep() && horizon < arms as u64 {
            return Err(invalid(
                "horizon",
                format!("must be >= the arm count {arms} to play every arm once"),
            ));
        }
        Ok(policy)
    }

    pub fn rule(&self) -> IndexRule {
        self.rule
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// MOTS variants and UCB1 start by playing every arm once.
    pub fn needs_initial_sweep(&self) -> bool {
        matches!(
            self.rule,
            IndexRule::Mots { .. } | IndexRule::MotsJ { .. } | IndexRule::Ucb1
        )
    }

    #[inline]
    pub fn sample_index(
        &self,
        view: &CommittedView,
        total_committed: u64,
        stream: &mut RandomStream,
    ) -> Result<f64> {
        match self.rule {
            IndexRule::TsBeta => bts_beta_sample(view, stream),
            IndexRule::TsGaussian => bts_gaussian_sample(view, stream),
            IndexRule::Mots { rho, alpha } => {
                bmots_sample(view, rho, alpha, self.horizon, self.arms, stream)
            }
            IndexRule::MotsJ { alpha } => {
                bmotsj_sample(view, alpha, self.horizon, self.arms, stream)
            }
            IndexRule::Ucb1 => ucb1_index(view, total_committed),
        }
    }

    /// Draws an index for every arm in order and returns the argmax.
    pub fn select_arm<I>(&self, views: I, stream: &mut RandomStream) -> Result<usize>
    where
        I: IntoIterator<Item = CommittedView>,
        I::IntoIter: Clone,
    {
        let views = views.into_iter();
        let total = match self.rule {
            IndexRule::Ucb1 => views.clone().map(|v| v.count).sum(),
            _ => 0,
        };
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (a, view) in views.enumerate() {
            let value = self.sample_index(&view, total, stream)?;
            if value > best_value {
                best = a;
                best_value = value;
            }
        }
        Ok(best)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            "alpha",
            format!("must be finite and > 0, got {alpha}"),
        ))
    }
}

/// Batch size of a static schedule: explicit, or matched to the number of
/// batches the doubling policy used on the same seed (times `factor`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StaticBatches {
    Fixed(u64),
    Matched { matched: f64 },
}

/// Named multi-armed policy variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MabVariant {
    BTsBeta,
    BTsGaussian,
    BMots,
    BMotsJ,
    TsBeta,
    TsGaussian,
    Mots,
    MotsJ,
    Ucb1,
    StaticTsBeta,
    StaticTsGaussian,
}

/// How a variant is executed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Execution {
    /// Batch engine with the given schedule.
    Batched(Schedule),
    /// Batch engine with a static schedule whose size comes from a paired
    /// doubling run.
    MatchedStatic { factor: f64 },
    /// Independent fully sequential engine.
    Sequential,
}

/// Multi-armed policy configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MabPolicyConfig {
    pub variant: MabVariant,
    pub rho: f64,
    pub alpha: f64,
    pub batches: Option<StaticBatches>,
}

pub const DEFAULT_RHO: f64 = 0.9999;
pub const DEFAULT_ALPHA: f64 = 2.0;

impl MabPolicyConfig {
    pub fn new(variant: MabVariant) -> Self {
        Self {
            variant,
            rho: DEFAULT_RHO,
            alpha: DEFAULT_ALPHA,
            batches: None,
        }
    }

    pub fn index_rule(&self) -> IndexRule {
        use MabVariant::*;
        match self.variant {
            BTsBeta | TsBeta | StaticTsBeta => IndexRule::TsBeta,
            BTsGaussian | TsGaussian | StaticTsGaussian => IndexRule::TsGaussian,
            BMots | Mots => IndexRule::Mots {
                rho: self.rho,
                alpha: self.alpha,
            },
            BMotsJ | MotsJ => IndexRule::MotsJ { alpha: self.alpha },
            Ucb1 => IndexRule::Ucb1,
        }
    }

    /// The doubling-schedule variant a static baseline is matched against.
    pub fn doubling_counterpart(&self) -> Option<MabPolicyConfig> {
        let variant = match self.variant {
            MabVariant::StaticTsBeta => MabVariant::BTsBeta,
            MabVariant::StaticTsGaussian => MabVariant::BTsGaussian,
            _ => return None,
        };
        Some(MabPolicyConfig {
            variant,
            batches: None,
            ..*self
        })
    }

    pub fn build(&self, arms: usize, horizon: u64) -> Result<(MabPolicy, Execution)> {
        use MabVariant::*;
        let policy = MabPolicy::new(self.index_rule(), arms, horizon)?;
        let exec = match self.variant {
            BTsBeta | BTsGaussian | BMots | BMotsJ => Execution::Batched(Schedule::Doubling),
            TsBeta | TsGaussian | Mots | MotsJ => Execution::Sequential,
            Ucb1 => Execution::Batched(Schedule::EveryRound),
            StaticTsBeta | StaticTsGaussian => match self.batches {
                Some(StaticBatches::Fixed(m)) => {
                    Execution::Batched(Schedule::fixed_batches(m, horizon)?)
                }
                Some(StaticBatches::Matched { matched }) => {
                    if matched.is_nan() || matched <= 0.0 {
                        return Err(invalid("batches", "matched factor must be > 0"));
                    }
                    Execution::MatchedStatic { factor: matched }
                }
                None => Execution::MatchedStatic { factor: 1.0 },
            },
        };
        Ok((policy, exec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(count: u64, sum: f64) -> CommittedView {
        CommittedView {
            count,
            sum,
            successes: 0,
            failures: count,
        }
    }

    #[test]
    fn gaussian_posterior_parameters() {
        assert_eq!(gaussian_posterior(&view(0, 0.0)), (0.0, 1.0));
        let (m, v) = gaussian_posterior(&view(9, 10.0));
        assert_eq!(m, 1.0);
        assert!((v - 0.1).abs() < 1e-15);
        for k in 1..100u64 {
            let (_, a) = gaussian_posterior(&view(k, 0.0));
            let (_, b) = gaussian_posterior(&view(2 * k, 0.0));
            assert!(b < a);
        }
    }

    #[test]
    fn tau_values() {
        let n = 5;
        // k = T/N: bonus vanishes.
        let t = bmots_tau(&view(20, 7.0), 100, n, 2.0).unwrap();
        assert_eq!(t, 7.0 / 20.0);
        let t = bmots_tau(&view(1, 0.0), 4 * n as u64, n, 2.0).unwrap();
        assert!((t - (2.0 * 4f64.ln()).sqrt()).abs() < 1e-12);
        assert!((t - 1.6651).abs() < 1e-4);
        assert!(bmots_tau(&view(0, 0.0), 10, 1, 2.0).is_err());
    }

    #[test]
    fn tau_monotone_in_count() {
        let (horizon, arms) = (1000u64, 4usize);
        let mut prev = f64::INFINITY;
        for k in 1..=horizon / arms as u64 {
            let t = bmots_tau(&view(k, 0.3 * k as f64), horizon, arms, 2.0).unwrap();
            assert!(t <= prev + 1e-15, "k={k}");
            prev = t;
        }
    }

    #[test]
    fn ucb1_values() {
        let v = CommittedView {
            count: 1,
            sum: 0.5,
            successes: 0,
            failures: 1,
        };
        assert_eq!(ucb1_index(&v, 1).unwrap(), 0.5);
        let t = 50;
        let single = CommittedView {
            count: t,
            sum: 20.0,
            successes: 0,
            failures: t,
        };
        let expect = 20.0 / t as f64 + (2.0 * (t as f64).ln() / t as f64).sqrt();
        assert!((ucb1_index(&single, t).unwrap() - expect).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let idx = ucb1_index(
                &CommittedView {
                    count: k,
                    sum: 0.4 * k as f64,
                    successes: 0,
                    failures: k,
                },
                500,
            )
            .unwrap();
            assert!(idx < prev);
            prev = idx;
        }
        assert!(ucb1_index(&view(0, 0.0), 3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MabPolicy::new(
            IndexRule::Mots {
                rho: 0.5,
                alpha: 2.0
            },
            3,
            100
        )
        .is_err());
        assert!(MabPolicy::new(
            IndexRule::Mots {
                rho: 1.0,
                alpha: 2.0
            },
            3,
            100
        )
        .is_err());
        assert!(MabPolicy::new(IndexRule::MotsJ { alpha: 0.0 }, 3, 100).is_err());
        assert!(MabPolicy::new(IndexRule::MotsJ { alpha: 2.0 }, 3, 2).is_err());
        assert!(MabPolicy::new(IndexRule::TsBeta, 3, 2).is_ok());
        assert!(MabPolicy::new(IndexRule::TsBeta, 0, 2).is_err());
    }

    #[test]
    fn single_arm_always_selected() {
        let p = MabPolicy::new(IndexRule::TsBeta, 1, 10).unwrap();
        let mut s = RandomStream::new(0);
        for _ in 0..100 {
            assert_eq!(p.select_arm([CommittedView::default()], &mut s).unwrap(), 0);
        }
    }

    #[test]
    fn separated_beta_posteriors() {
        let p = MabPolicy::new(IndexRule::TsBeta, 2, 10).unwrap();
        let good = CommittedView {
            count: 1000,
            sum: 1000.0,
            successes: 1000,
            failures: 0,
        };
        let bad = CommittedView {
            count: 1000,
            sum: 0.0,
            successes: 0,
            failures: 1000,
        };
        let mut s = RandomStream::new(4);
        let wins = (0..1000)
            .filter(|_| p.select_arm([good, bad], &mut s).unwrap() == 0)
            .count();
        assert!(wins >= 999);
    }

    #[test]
    fn ucb_ties_pick_lowest_index() {
        let p = MabPolicy::new(IndexRule::Ucb1, 3, 10).unwrap();
        let v = CommittedView {
            count: 2,
            sum: 1.0,
            successes: 1,
            failures: 1,
        };
        let mut s = RandomStream::new(0);
        assert_eq!(p.select_arm([v, v, v], &mut s).unwrap(), 0);
    }

    #[test]
    fn variant_execution() {
        let (_, exec) = MabPolicyConfig::new(MabVariant::BMots)
            .build(5, 100)
            .unwrap();
        assert_eq!(exec, Execution::Batched(Schedule::Doubling));
        let (_, exec) = MabPolicyConfig::new(MabVariant::Mots)
            .build(5, 100)
            .unwrap();
        assert_eq!(exec, Execution::Sequential);
        let mut cfg = MabPolicyConfig::new(MabVariant::StaticTsBeta);
        cfg.batches = Some(StaticBatches::Fixed(4));
        let (_, exec) = cfg.build(5, 100).unwrap();
        assert_eq!(exec, Execution::Batched(Schedule::Static { batches: 4 }));
        cfg.batches = Some(StaticBatches::Fixed(0));
        assert!(cfg.build(5, 100).is_err());
    }
}
