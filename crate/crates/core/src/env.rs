//! Stochastic reward and context generators.
//!
//! Ground truth (arm means, the linear parameter) is exposed only through
//! [`Environment::expected_reward`], which the simulation engines use for
//! regret accounting and never pass on to a policy.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::RandomStream;

const NORM_SLACK: f64 = 1e-9;

/// Per-arm context vectors for one round, stored row-major by arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    round: u64,
    dim: usize,
    data: Vec<f64>,
}

impl ContextSet {
    pub fn new(round: u64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len(),
            });
        }
        let set = Self { round, dim, data };
        for a in 0..set.num_arms() {
            let n = norm(set.arm(a));
            if n > 1.0 + NORM_SLACK {
                return Err(invalid("context", format!("arm {a} has norm {n} > 1")));
            }
        }
        Ok(set)
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_arms(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn arm(&self, a: usize) -> &[f64] {
        &self.data[a * self.dim..(a + 1) * self.dim]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Uniform direction in `R^d`.
pub fn sample_unit_sphere(stream: &mut RandomStream, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| stream.standard_normal()).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform point in the closed unit ball of `R^d`.
pub fn sample_unit_ball(stream: &mut RandomStream, dim: usize) -> Vec<f64> {
    let dir = sample_unit_sphere(stream, dim);
    let radius = stream.uniform().powf(1.0 / dim as f64);
    dir.into_iter().map(|x| x * radius).collect()
}

/// Coin flip with bias `r`, turning a `[0, 1]` reward into `{0, 1}`.
pub fn bernoulli_round(r: f64, stream: &mut RandomStream) -> Result<u8> {
    if !(0.0..=1.0).contains(&r) {
        return Err(invalid("r", format!("must lie in [0, 1], got {r}")));
    }
    Ok(u8::from(stream.uniform() < r))
}

pub trait Environment {
    fn num_arms(&self) -> usize;

    /// Context dimension, `None` for context-free environments.
    fn context_dim(&self) -> Option<usize> {
        None
    }

    /// Contexts shown at `round`; `None` for context-free environments.
    fn contexts(&mut self, round: u64, stream: &mut RandomStream) -> Result<Option<ContextSet>>;

    fn draw_reward(
        &self,
        arm: usize,
        ctx: Option<&ContextSet>,
        stream: &mut RandomStream,
    ) -> Result<f64>;

    fn expected_reward(&self, arm: usize, ctx: Option<&ContextSet>) -> Result<f64>;

    fn optimal_reward(&self, ctx: Option<&ContextSet>) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.num_arms() {
            best = best.max(self.expected_reward(a, ctx)?);
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardLaw {
    /// `{0, 1}` with `P(1) = mean`.
    Bernoulli,
    /// `Normal(mean, 1)`.
    Gaussian,
    /// `Uniform[mean - w, mean + w]` with `w = min(mean, 1 - mean)`.
    Bounded01,
}

/// Independent arms with fixed means.
#[derive(Debug, Clone)]
pub struct StochasticEnv {
    law: RewardLaw,
    means: Vec<f64>,
    best: f64,
}

impl StochasticEnv {
    pub fn new(law: RewardLaw, means: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return Err(invalid("means", "need at least one arm"));
        }
        for &m in &means {
            let ok = match law {
                RewardLaw::Gaussian => m.is_finite(),
                _ => (0.0..=1.0).contains(&m),
            };
            if !ok {
                return Err(invalid(
                    "means",
                    format!("mean {m} out of range for {law:?}"),
                ));
            }
        }
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { law, means, best })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }
}

impl Environment for StochasticEnv {
    fn num_arms(&self) -> usize {
        self.means.len()
    }

    fn contexts(&mut self, _: u64, _: &mut RandomStream) -> Result<Option<ContextSet>> {
        Ok(None)
    }

    #[inline]
    fn draw_reward(
        &self,
        arm: usize,
        _: Option<&ContextSet>,
        stream: &mut RandomStream,
    ) -> Result<f64> {
        let m = self.means[arm];
        Ok(match self.law {
            RewardLaw::Bernoulli => f64::from(u8::from(stream.uniform() < m)),
            RewardLaw::Gaussian => m + stream.standard_normal(),
            RewardLaw::Bounded01 => m + m.min(1.0 - m) * (2.0 * stream.uniform() - 1.0),
        })
    }

    #[inline]
    fn expected_reward(&self, arm: usize, _: Option<&ContextSet>) -> Result<f64> {
        Ok(self.means[arm])
    }

    #[inline]
    fn optimal_reward(&self, _: Option<&ContextSet>) -> Result<f64> {
        Ok(self.best)
    }
}

/// Context rows loaded from a dataset: one row per round, `arms * dim`
/// values each.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTable {
    arms: usize,
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl ContextTable {
    pub fn from_rows(arms: usize, dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if arms == 0 || dim == 0 {
            return Err(invalid("dim", "arms and dim must be positive"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != arms * dim {
                return Err(Error::DimensionMismatch {
                    expected: arms * dim,
                    actual: row.len(),
                });
            }
            // Validate norms up front.
            ContextSet::new(i as u64 + 1, dim, row.clone())?;
        }
        Ok(Self { arms, dim, rows })
    }

    /// Reads a headerless CSV: `t, b_{0,0}, ..., b_{0,d-1}, b_{1,0}, ...`.
    pub fn load_csv(path: &Path, arms: usize, dim: usize) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let mut fields = record.iter();
            fields
                .next()
                .ok_or_else(|| invalid("contexts", "empty row"))?;
            let row = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        invalid(
                            "contexts",
                            format!("{}: bad value `{f}`: {e}", path.display()),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(arms, dim, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads whitespace- or comma-separated parameter values.
pub fn load_mu_sidecar(path: &Path, dim: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mu = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| invalid("mu", format!("{}: bad value `{s}`: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    if mu.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: mu.len(),
        });
    }
    Ok(mu)
}

#[derive(Debug, Clone)]
enum ContextSource {
    Synthetic,
    Dataset {
        table: Arc<ContextTable>,
        cursor: usize,
    },
}

/// Linear contextual rewards `<b, mu> + Normal(0, sigma^2)`.
#[derive(Debug, Clone)]
pub struct LinearEnv {
    arms: usize,
    dim: usize,
    mu: Vec<f64>,
    noise_sigma: f64,
    source: ContextSource,
}

impl LinearEnv {
    /// Contexts drawn uniformly on the unit sphere each round.
    pub fn synthetic(arms: usize, mu: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        Self::validate(arms, &mu, noise_sigma)?;
        Ok(Self {
            arms,
            dim: mu.len(),
            mu,
            noise_sigma,
            source: ContextSource::Synthetic,
        })
    }

    /// Contexts replayed row by row from a table.
    pub fn dataset(table: Arc<ContextTable>, mu: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        Self::validate(table.arms, &mu, noise_sigma)?;
        if mu.len() != table.dim {
            return Err(Error::DimensionMismatch {
                expected: table.dim,
                actual: mu.len(),
            });
        }
        Ok(Self {
            arms: table.arms,
            dim: table.dim,
            mu,
            noise_sigma,
            source: ContextSource::Dataset { table, cursor: 0 },
        })
    }

    fn validate(arms: usize, mu: &[f64], noise_sigma: f64) -> Result<()> {
        if arms == 0 {
            return Err(invalid("arms", "need at least one arm"));
        }
        if mu.is_empty() {
            return Err(invalid("mu", "dimension must be positive"));
        }
        if norm(mu) > 1.0 + NORM_SLACK {
            return Err(invalid("mu", format!("norm {} exceeds 1", norm(mu))));
        }
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(invalid(
                "noise_sigma",
                format!("must be finite and >= 0, got {noise_sigma}"),
            ));
        }
        Ok(())
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    fn require<'a>(&self, ctx: Option<&'a ContextSet>) -> Result<&'a ContextSet> {
        let ctx = ctx.ok_or(Error::MissingContext)?;
        if ctx.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: ctx.dim(),
            });
        }
        Ok(ctx)
    }
}

impl Environment for LinearEnv {
    fn num_arms(&self) -> usize {
        self.arms
    }

    fn context_dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn contexts(&mut self, round: u64, stream: &mut RandomStream) -> Result<Option<ContextSet>> {
        match &mut self.source {
            ContextSource::Synthetic => {
                let mut data = Vec::with_capacity(self.arms * self.dim);
                for _ in 0..self.arms {
                    data.extend(sample_unit_sphere(stream, self.dim));
                }
                Ok(Some(ContextSet {
                    round,
                    dim: self.dim,
                    data,
                }))
            }
            ContextSource::Dataset { table, cursor } => {
                let row = table.rows.get(*cursor).ok_or(Error::EndOfData {
                    round,
                    rows: table.rows.len(),
                })?;
                *cursor += 1;
                Ok(Some(ContextSet {
                    round,
                    dim: self.dim,
                    data: row.clone(),
                }))
            }
        }
    }

    fn draw_reward(
        &self,
        arm: usize,
        ctx: Option<&ContextSet>,
        stream: &mut RandomStream,
    ) -> Result<f64> {
        let ctx = self.require(ctx)?;
        Ok(dot(ctx.arm(arm), &self.mu) + self.noise_sigma * stream.standard_normal())
    }

    fn expected_reward(&self, arm: usize, ctx: Option<&ContextSet>) -> Result<f64> {
        let ctx = self.require(ctx)?;
        Ok(dot(ctx.arm(arm), &self.mu))
    }
}

/// Arm means given explicitly, as one best arm plus `arms - 1` others, or
/// (`random`) drawn uniformly on [0, 1] afresh for every run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rest: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub random: bool,
}

impl MeanSpec {
    pub fn gap(arms: usize, best: f64, rest: f64) -> Self {
        Self {
            means: None,
            arms: Some(arms),
            best: Some(best),
            rest: Some(rest),
            random: false,
        }
    }

    /// `arms` means drawn uniformly on [0, 1] per run.
    pub fn random(arms: usize) -> Self {
        Self {
            arms: Some(arms),
            random: true,
            ..Self::default()
        }
    }

    fn prepare(
        &self,
        law: RewardLaw,
        default_best: f64,
        default_rest: f64,
    ) -> Result<PreparedEnvironment> {
        if !self.random {
            return Ok(PreparedEnvironment::Stochastic {
                law,
                means: self.resolve(default_best, default_rest)?,
            });
        }
        match (self.arms, &self.means, self.best, self.rest) {
            (Some(arms), None, None, None) if arms > 0 => {
                Ok(PreparedEnvironment::RandomStochastic { law, arms })
            }
            _ => Err(Error::Config {
                field: "env.random".into(),
                reason: "random means take a positive `arms` and no `means`, `best` or `rest`"
                    .into(),
            }),
        }
    }

    fn resolve(&self, default_best: f64, default_rest: f64) -> Result<Vec<f64>> {
        match (&self.means, self.arms) {
            (Some(_), Some(_)) => Err(Error::Config {
                field: "env.means".into(),
                reason: "give either `means` or `arms`, not both".into(),
            }),
            (Some(m), None) => Ok(m.clone()),
            (None, Some(n)) if n > 0 => {
                let mut m = vec![self.rest.unwrap_or(default_rest); n];
                m[0] = self.best.unwrap_or(default_best);
                Ok(m)
            }
            _ => Err(Error::Config {
                field: "env.arms".into(),
                reason: "need `means` or a positive `arms`".into(),
            }),
        }
    }
}

/// Serializable description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentSpec {
    /// Defaults: best arm 0.75, the rest 0.5.
    Bernoulli(MeanSpec),
    /// Unit variance. Defaults: best arm 1.0, the rest 0.8.
    Gaussian(MeanSpec),
    /// Defaults as for Bernoulli.
    Bounded01(MeanSpec),
    /// Sphere-uniform contexts; `mu` drawn uniformly in the unit ball per
    /// run when absent.
    Linear {
        arms: usize,
        dim: usize,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<Vec<f64>>,
    },
    /// Contexts from a CSV file, true parameter from a sidecar file.
    Dataset {
        arms: usize,
        dim: usize,
        contexts: PathBuf,
        mu: PathBuf,
        #[serde(default)]
        noise_sigma: f64,
    },
}

impl EnvironmentSpec {
    /// Copy with the arm count replaced; explicit mean lists cannot be
    /// resized.
    pub fn with_arms(&self, n: usize) -> Result<Self> {
        let resize = |m: &MeanSpec| -> Result<MeanSpec> {
            if m.means.is_some() {
                return Err(Error::Config {
                    field: "env.means".into(),
                    reason: "sweeping arms needs the `arms`/`best`/`rest` form".into(),
                });
            }
            Ok(MeanSpec {
                arms: Some(n),
                ..m.clone()
            })
        };
        Ok(match self {
            Self::Bernoulli(m) => Self::Bernoulli(resize(m)?),
            Self::Gaussian(m) => Self::Gaussian(resize(m)?),
            Self::Bounded01(m) => Self::Bounded01(resize(m)?),
            Self::Linear {
                dim,
                noise_sigma,
                mu,
                ..
            } => Self::Linear {
                arms: n,
                dim: *dim,
                noise_sigma: *noise_sigma,
                mu: mu.clone(),
            },
            Self::Dataset { .. } => {
                return Err(Error::Config {
                    field: "env.arms".into(),
                    reason: "dataset environments have a fixed arm count".into(),
                })
            }
        })
    }

    /// Resolves defaults and loads any files (relative paths against
    /// `base_dir`).
    pub fn prepare(&self, base_dir: Option<&Path>) -> Result<PreparedEnvironment> {
        let resolve = |p: &Path| match base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        };
        let prepared = match self {
            Self::Bernoulli(m) => m.prepare(RewardLaw::Bernoulli, 0.75, 0.5)?,
            Self::Gaussian(m) => m.prepare(RewardLaw::Gaussian, 1.0, 0.8)?,
            Self::Bounded01(m) => m.prepare(RewardLaw::Bounded01, 0.75, 0.5)?,
            Self::Linear {
                arms,
                dim,
                noise_sigma,
                mu,
            } => {
                if let Some(mu) = mu {
                    if mu.len() != *dim {
                        return Err(Error::DimensionMismatch {
                            expected: *dim,
                            actual: mu.len(),
                        });
                    }
                }
                if *dim == 0 {
                    return Err(invalid("dim", "must be positive"));
                }
                PreparedEnvironment::Linear {
                    arms: *arms,
                    dim: *dim,
                    noise_sigma: *noise_sigma,
                    mu: mu.clone(),
                }
            }
            Self::Dataset {
                arms,
                dim,
                contexts,
                mu,
                noise_sigma,
            } => PreparedEnvironment::Dataset {
                table: Arc::new(ContextTable::load_csv(&resolve(contexts), *arms, *dim)?),
                mu: load_mu_sidecar(&resolve(mu), *dim)?,
                noise_sigma: *noise_sigma,
            },
        };
        // Surface parameter errors before any run starts.
        prepared.instantiate(&mut RandomStream::new(0))?;
        Ok(prepared)
    }
}

/// An environment description with defaults resolved and data loaded,
/// ready to be instantiated once per run.
#[derive(Debug, Clone)]
pub enum PreparedEnvironment {
    Stochastic {
        law: RewardLaw,
        means: Vec<f64>,
    },
    RandomStochastic {
        law: RewardLaw,
        arms: usize,
    },
    Linear {
        arms: usize,
        dim: usize,
        noise_sigma: f64,
        mu: Option<Vec<f64>>,
    },
    Dataset {
        table: Arc<ContextTable>,
        mu: Vec<f64>,
        noise_sigma: f64,
    },
}

impl PreparedEnvironment {
    pub fn num_arms(&self) -> usize {
        match self {
            Self::Stochastic { means, .. } => means.len(),
            Self::RandomStochastic { arms, .. } => *arms,
            Self::Linear { arms, .. } => *arms,
            Self::Dataset { table, .. } => table.arms,
        }
    }

    pub fn context_dim(&self) -> Option<usize> {
        match self {
            Self::Stochastic { .. } | Self::RandomStochastic { .. } => None,
            Self::Linear { dim, .. } => Some(*dim),
            Self::Dataset { table, .. } => Some(table.dim),
        }
    }

    pub fn is_contextual(&self) -> bool {
        self.context_dim().is_some()
    }

    /// Builds a fresh environment; `instance` supplies any per-run ground
    /// truth (random arm means, the synthetic linear parameter).
    pub fn instantiate(&self, instance: &mut RandomStream) -> Result<Box<dyn Environment + Send>> {
        Ok(match self {
            Self::Stochastic { law, means } => Box::new(StochasticEnv::new(*law, means.clone())?),
            Self::RandomStochastic { law, arms } => {
                let means = (0..*arms).map(|_| instance.uniform()).collect();
                Box::new(StochasticEnv::new(*law, means)?)
            }
            Self::Linear {
                arms,
                dim,
                noise_sigma,
                mu,
            } => {
                let mu = mu
                    .clone()
                    .unwrap_or_else(|| sample_unit_ball(instance, *dim));
                Box::new(LinearEnv::synthetic(*arms, mu, *noise_sigma)?)
            }
            Self::Dataset {
                table,
                mu,
                noise_sigma,
            } => Box::new(LinearEnv::dataset(table.clone(), mu.clone(), *noise_sigma)?),
        })
    }
}
