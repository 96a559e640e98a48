//! Experiment configuration, replicated runs, aggregation and CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{InvariantMonitor, RunRecord, Schedule};
use crate::contextual::{v_parameter, ContextualPolicy};
use crate::engine::{run_contextual, run_mab, RunStreams};
use crate::env::{EnvironmentSpec, PreparedEnvironment};
use crate::error::{Error, Result};
use crate::policy::{
    Execution, MabPolicyConfig, MabVariant, StaticBatches, DEFAULT_ALPHA, DEFAULT_RHO,
};
use crate::sequential::{run_contextual_sequential, run_mab_sequential};

pub const SUMMARY_HEADER: [&str; 4] = ["t", "mean_regret", "std_regret", "mean_batches"];
pub const ROUNDS_HEADER: [&str; 5] = ["t", "arm", "inst_regret", "cum_regret", "batch_index"];
pub const SWEEP_HEADER: [&str; 5] = [
    "value",
    "mean_batches",
    "std_batches",
    "mean_regret",
    "bound",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextualVariant {
    /// Batched, doubling schedule.
    BTsC,
    /// Fully sequential.
    TsC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variant {
    Mab(MabVariant),
    Contextual(ContextualVariant),
}

/// One policy entry of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub variant: Variant,
    /// Label used in output file names; defaults to the variant name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<StaticBatches>,
    /// Contextual noise scale used in the exploration parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Accepted and carried along; not used by any policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

pub const DEFAULT_SIGMA: f64 = 0.01;
pub const DEFAULT_DELTA: f64 = 0.61;

impl PolicyConfig {
    pub fn mab(variant: MabVariant) -> Self {
        Self::new(Variant::Mab(variant))
    }

    pub fn contextual(variant: ContextualVariant) -> Self {
        Self::new(Variant::Contextual(variant))
    }

    fn new(variant: Variant) -> Self {
        Self {
            variant,
            name: None,
            rho: None,
            alpha: None,
            batches: None,
            sigma: None,
            delta: None,
            epsilon: None,
        }
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        serde_json::to_value(self.variant)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_else(|| format!("{:?}", self.variant))
    }

    pub fn mab_config(&self) -> Option<MabPolicyConfig> {
        match self.variant {
            Variant::Mab(variant) => Some(MabPolicyConfig {
                variant,
                rho: self.rho.unwrap_or(DEFAULT_RHO),
                alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
                batches: self.batches,
            }),
            Variant::Contextual(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Run,
    Sweep,
    Compare,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Arms,
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<u64>,
}

fn one() -> usize {
    1
}

/// A complete experiment description, read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policies: Vec<PolicyConfig>,
    pub env: EnvironmentSpec,
    pub horizon: u64,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Also write a per-round CSV for every run.
    #[serde(default)]
    pub per_round: bool,
    /// Directory relative data paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn new(
        policy: PolicyConfig,
        env: EnvironmentSpec,
        horizon: u64,
        runs: usize,
        seed: u64,
    ) -> Self {
        Self {
            policy: Some(policy),
            policies: Vec::new(),
            env,
            horizon,
            runs,
            seed,
            out: None,
            mode: None,
            sweep: None,
            per_round: false,
            base_dir: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(config_err("runs", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(config_err("horizon", "must be >= 1"));
        }
        if self.policy.is_none() && self.policies.is_empty() {
            return Err(config_err(
                "policy",
                "need `policy` or a non-empty `policies` list",
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(config_err("sweep.values", "must not be empty"));
            }
            if sweep.values.contains(&0) {
                return Err(config_err("sweep.values", "values must be positive"));
            }
        }
        for p in self.all_policies() {
            if let Some(d) = p.delta {
                if !(d > 0.0 && d < 1.0) {
                    return Err(config_err(
                        "policy.delta",
                        format!("must lie in (0, 1), got {d}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `policy` followed by `policies`.
    pub fn all_policies(&self) -> Vec<&PolicyConfig> {
        self.policy.iter().chain(self.policies.iter()).collect()
    }

    pub fn primary_policy(&self) -> Result<&PolicyConfig> {
        self.all_policies()
            .into_iter()
            .next()
            .ok_or_else(|| config_err("policy", "missing"))
    }

    pub fn prepare_env(&self) -> Result<PreparedEnvironment> {
        self.env.prepare(self.base_dir.as_deref())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.runs as u64).map(|i| self.seed.wrapping_add(i))
    }
}

/// Result of one simulation, with the invariant report when checked.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub monitor: Option<InvariantMonitor>,
}

/// Runs one seeded simulation of `policy` on a fresh instance of `env`.
pub fn run_policy(
    policy: &PolicyConfig,
    env: &PreparedEnvironment,
    horizon: u64,
    seed: u64,
    check: bool,
) -> Result<RunOutcome> {
    let mut streams = RunStreams::from_seed(seed);
    let mut instance = env.instantiate(&mut streams.instance)?;
    let mut monitor = check.then(InvariantMonitor::new);

    let record = match policy.variant {
        Variant::Contextual(kind) => {
            let dim = env.context_dim().ok_or_else(|| {
                config_err("env", "contextual policies need a contextual environment")
            })?;
            let v = v_parameter(
                policy.sigma.unwrap_or(DEFAULT_SIGMA),
                dim,
                horizon,
                policy.delta.unwrap_or(DEFAULT_DELTA),
            )?;
            let mut ctx_policy = ContextualPolicy::new(dim, v)?;
            match kind {
                ContextualVariant::BTsC => run_contextual(
                    &mut ctx_policy,
                    Schedule::Doubling,
                    instance.as_mut(),
                    horizon,
                    &mut streams,
                    monitor.as_mut(),
                )?,
                ContextualVariant::TsC => run_contextual_sequential(
                    &mut ctx_policy,
                    instance.as_mut(),
                    horizon,
                    &mut streams,
                )?,
            }
        }
        Variant::Mab(_) => {
            if env.is_contextual() {
                return Err(config_err(
                    "env",
                    "multi-armed policies need a context-free environment",
                ));
            }
            let cfg = policy.mab_config().expect("multi-armed variant");
            let (mab, exec) = cfg.build(env.num_arms(), horizon)?;
            let schedule = match exec {
                Execution::Batched(schedule) => schedule,
                Execution::Sequential => {
                    let record =
                        run_mab_sequential(&mab, instance.as_mut(), horizon, &mut streams)?;
                    return Ok(RunOutcome { record, monitor });
                }
                Execution::MatchedStatic { factor } => {
                    let partner = PolicyConfig {
                        variant: Variant::Mab(
                            cfg.doubling_counterpart().expect("static variant").variant,
                        ),
                        batches: None,
                        ..policy.clone()
                    };
                    let paired = run_policy(&partner, env, horizon, seed, false)?;
                    let m = (paired.record.batch_count() as f64 * factor).round() as u64;
                    Schedule::fixed_batches(m.clamp(1, horizon), horizon)?
                }
            };
            run_mab(
                &mab,
                schedule,
                instance.as_mut(),
                horizon,
                &mut streams,
                monitor.as_mut(),
            )?
        }
    };
    Ok(RunOutcome { record, monitor })
}

/// Runs `config.runs` replications of `policy` with seeds `seed, seed + 1, ...`.
pub fn run_replicated(
    config: &ExperimentConfig,
    policy: &PolicyConfig,
    env: &PreparedEnvironment,
    check: bool,
) -> Result<Vec<RunOutcome>> {
    let seeds: Vec<u64> = config.seeds().collect();
    seeds
        .into_par_iter()
        .map(|seed| run_policy(policy, env, config.horizon, seed, check))
        .collect()
}

/// Runs the config's primary policy and returns one record per run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let env = config.prepare_env()?;
    let outcomes = run_replicated(config, config.primary_policy()?, &env, false)?;
    Ok(outcomes.into_iter().map(|o| o.record).collect())
}

/// Aggregated statistics at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t: u64,
    pub mean_regret: f64,
    /// Population standard deviation across runs.
    pub std_regret: f64,
    pub mean_batches: f64,
}

/// Powers of two up to `horizon`, plus `horizon` itself.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut points: Vec<u64> = (0..64)
        .map(|j| 1u64 << j)
        .take_while(|&p| p <= horizon)
        .collect();
    if points.last() != Some(&horizon) && horizon > 0 {
        points.push(horizon);
    }
    points
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    let Some(horizon) = records.iter().map(RunRecord::horizon).min() else {
        return Vec::new();
    };
    checkpoints(horizon)
        .into_iter()
        .map(|t| {
            let regrets: Vec<f64> = records.iter().map(|r| r.regret_at(t)).collect();
            let batches: Vec<f64> = records
                .iter()
                .map(|r| r.batches_through(t) as f64)
                .collect();
            let (mean_regret, std_regret) = mean_std(&regrets);
            SummaryRow {
                t,
                mean_regret,
                std_regret,
                mean_batches: mean_std(&batches).0,
            }
        })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `t,mean_regret,std_regret,mean_batches`. Floats use Rust's
/// shortest round-trip decimal form.
pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    write_rows(
        path,
        &SUMMARY_HEADER,
        rows.iter().map(|r| {
            [
                r.t.to_string(),
                r.mean_regret.to_string(),
                r.std_regret.to_string(),
                r.mean_batches.to_string(),
            ]
        }),
    )
}

/// Writes `t,arm,inst_regret,cum_regret,batch_index` for one run.
pub fn write_rounds_csv(record: &RunRecord, path: &Path) -> Result<()> {
    write_rows(
        path,
        &ROUNDS_HEADER,
        (0..record.arms.len()).map(|i| {
            [
                (i + 1).to_string(),
                record.arms[i].to_string(),
                record.inst_regret[i].to_string(),
                record.cum_regret[i].to_string(),
                record.batch_index[i].to_string(),
            ]
        }),
    )
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(wrap)?;
    let bad = |field: &str| config_err(field, format!("unparsable value in {}", path.display()));
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(wrap)?;
            let get = |i: usize| rec.get(i).unwrap_or("");
            Ok(SummaryRow {
                t: get(0).parse().map_err(|_| bad("t"))?,
                mean_regret: get(1).parse().map_err(|_| bad("mean_regret"))?,
                std_regret: get(2).parse().map_err(|_| bad("std_regret"))?,
                mean_batches: get(3).parse().map_err(|_| bad("mean_batches"))?,
            })
        })
        .collect()
}

/// Least-squares line `y = intercept + slope x` with its R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    LinearFit {
        slope,
        intercept,
        r2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: u64,
    pub mean_batches: f64,
    pub std_batches: f64,
    pub mean_regret: f64,
    /// Doubling-rule batch bound `N (floor(log2 T) + 1)` at this point.
    pub bound: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    /// Batch count against `N` (arm sweep) or `log2 T` (horizon sweep).
    pub fit: LinearFit,
}

/// Sweeps the arm count or the horizon for the primary policy.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| config_err("sweep", "sweep mode needs a `sweep` section"))?;
    let policy = config.primary_policy()?;
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut cfg = config.clone();
        match spec.param {
            SweepParam::Arms => cfg.env = config.env.with_arms(value as usize)?,
            SweepParam::Horizon => cfg.horizon = value,
        }
        let env = cfg.prepare_env()?;
        let outcomes = run_replicated(&cfg, policy, &env, false)?;
        let batches: Vec<f64> = outcomes
            .iter()
            .map(|o| o.record.batch_count() as f64)
            .collect();
        let regrets: Vec<f64> = outcomes.iter().map(|o| o.record.final_regret()).collect();
        let (mean_batches, std_batches) = mean_std(&batches);
        rows.push(SweepRow {
            value,
            mean_batches,
            std_batches,
            mean_regret: mean_std(&regrets).0,
            bound: crate::bandit::doubling_batch_bound(env.num_arms(), cfg.horizon),
        });
    }
    let xs: Vec<f64> = rows
        .iter()
        .map(|r| match spec.param {
            SweepParam::Arms => r.value as f64,
            SweepParam::Horizon => (r.value as f64).log2(),
        })
        .collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_batches).collect();
    Ok(SweepResult {
        param: spec.param,
        fit: linear_fit(&xs, &ys),
        rows,
    })
}

pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    write_rows(
        path,
        &SWEEP_HEADER,
        result.rows.iter().map(|r| {
            [
                r.value.to_string(),
                r.mean_batches.to_string(),
                r.std_batches.to_string(),
                r.mean_regret.to_string(),
                r.bound.to_string(),
            ]
        }),
    )
}

/// Output file name for one policy in compare mode.
pub fn compare_file_name(label: &str) -> String {
    let clean: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("summary_{clean}.csv")
}

/// What a mode produced.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
    pub violations: usize,
}

fn describe(label: &str, records: &[RunRecord]) -> String {
    let regrets: Vec<f64> = records.iter().map(RunRecord::final_regret).collect();
    let batches: Vec<f64> = records.iter().map(|r| r.batch_count() as f64).collect();
    let (m, s) = mean_std(&regrets);
    let (b, _) = mean_std(&batches);
    let mut line = String::new();
    let _ = write!(
        line,
        "{label}: runs={} mean_regret={m:.4} std_regret={s:.4} mean_batches={b:.2}",
        records.len()
    );
    line
}

/// Executes `mode` and writes its outputs under `config.out` (default `.`).
pub fn execute(config: &ExperimentConfig, mode: Mode) -> Result<Report> {
    config.validate()?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut report = Report::default();
    match mode {
        Mode::Run => {
            let env = config.prepare_env()?;
            let policy = config.primary_policy()?;
            let records: Vec<RunRecord> = run_replicated(config, policy, &env, false)?
                .into_iter()
                .map(|o| o.record)
                .collect();
            let path = out.join("summary.csv");
            write_summary_csv(&aggregate(&records), &path)?;
            report.files.push(path);
            if config.per_round {
                for (i, rec) in records.iter().enumerate() {
                    let path = out.join(format!("rounds_{i}.csv"));
                    write_rounds_csv(rec, &path)?;
                    report.files.push(path);
                }
            }
            report.lines.push(describe(&policy.label(), &records));
        }
        Mode::Compare => {
            let env = config.prepare_env()?;
            for policy in config.all_policies() {
                let records: Vec<RunRecord> = run_replicated(config, policy, &env, false)?
                    .into_iter()
                    .map(|o| o.record)
                    .collect();
                let path = out.join(compare_file_name(&policy.label()));
                write_summary_csv(&aggregate(&records), &path)?;
                report.files.push(path);
                report.lines.push(describe(&policy.label(), &records));
            }
        }
        Mode::Sweep => {
            let result = sweep(config)?;
            let path = out.join("sweep.csv");
            write_sweep_csv(&result, &path)?;
            report.files.push(path);
            let axis = match result.param {
                SweepParam::Arms => "N",
                SweepParam::Horizon => "log2 T",
            };
            report.lines.push(format!(
                "batches ~ {:.4} + {:.4} * {axis}  (R^2 = {:.4})",
                result.fit.intercept, result.fit.slope, result.fit.r2
            ));
        }
        Mode::Check => {
            let env = config.prepare_env()?;
            for policy in config.all_policies() {
                let outcomes = run_replicated(config, policy, &env, true)?;
                let mut violations = 0;
                for o in &outcomes {
                    if let Some(m) = &o.monitor {
                        violations += m.violations();
                        for msg in m.messages().iter().take(5) {
                            report.lines.push(format!(
                                "{} seed {}: {msg}",
                                policy.label(),
                                o.record.seed
                            ));
                        }
                    }
                }
                report.violations += violations;
                report.lines.push(format!(
                    "{}: {} runs checked, {violations} violations",
                    policy.label(),
                    outcomes.len()
                ));
            }
        }
    }
    Ok(report)
}
