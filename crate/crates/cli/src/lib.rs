//! Experiment runner behind the `percolab` binary: configuration files,
//! the JSONL result store, and the four subcommands.

pub mod config;
pub mod record;

use std::time::Instant;

use percolab::estimators::{default_arm_exponent, sn_tails, volume_tail, MonteCarlo};
use percolab::oracle::catalog::Catalog;
use percolab::scaling::{estimate_pc, exp_rate_fit, loglog_fit, scaling_collapse, PcOptions};
use percolab::validation::{run_suite, standard_fixtures, SuiteReport};
use percolab::{Error, Region, TailCurve, Vertex, SAMPLER_ID};
use serde_json::{json, Value};

use config::{hash_hex, Estimand, ExperimentConfig, FitOp, FitSpec};
use record::{csv_row, Counters, RecordError, ResultRecord, CSV_HEADER, TOOL_VERSION};

pub const DEFAULT_PC_SIGMAS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Resource(String),
    OracleFailure(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Resource(m) => write!(f, "resource cap: {m}"),
            CliError::OracleFailure(m) => write!(f, "oracle failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    /// Process exit status: 1 validation, 2 resource cap, 3 oracle failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Resource(_) => 2,
            CliError::OracleFailure(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if is_resource(&e) {
            CliError::Resource(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn is_resource(e: &Error) -> bool {
    matches!(e, Error::ResourceCap { .. } | Error::BudgetExhausted(_))
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid-argument",
        Error::UnsupportedRegion(_) => "unsupported-region",
        Error::ResourceCap { .. } => "resource-cap",
        Error::BudgetExhausted(_) => "budget-exhausted",
        Error::Precondition(_) => "precondition",
        Error::InsufficientSignal(_) => "insufficient-signal",
        Error::Inconclusive(_) => "inconclusive",
        Error::NoOverlap(_) => "no-overlap",
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payloads serialize")
}

/// Records of one run and the worst failure among its cells.
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub failure: Option<CliError>,
}

fn monte_carlo(cfg: &ExperimentConfig) -> MonteCarlo {
    MonteCarlo::new(cfg.model, cfg.seed, cfg.trials.unwrap_or(1))
        .with_budget(cfg.budget.resolve())
        .with_workers(cfg.workers())
}

fn record(cfg: &ExperimentConfig, record_type: &str, cell: Value) -> ResultRecord {
    ResultRecord {
        record_type: record_type.into(),
        config_hash: cfg.hash(),
        tool_version: TOOL_VERSION.into(),
        sampler: SAMPLER_ID.into(),
        estimand: cfg.estimand.id().into(),
        inputs: json!({ "config": to_value(cfg), "cell": cell }),
        payload: Value::Null,
        error: None,
        wall_time_s: 0.0,
        counters: Counters::default(),
        sources: vec![],
    }
}

fn curve_payload(c: TailCurve) -> (Value, Counters) {
    (to_value(&c), Counters::from_estimates(&c.estimates))
}

fn run_cell(cfg: &ExperimentConfig, mc: &MonteCarlo, p: f64, n: Option<i64>) -> percolab::Result<(Value, Counters)> {
    let ns = cfg.ns();
    let d = cfg.model.d;
    Ok(match cfg.estimand {
        Estimand::Pi => curve_payload(mc.estimate_pi_curve(p, &ns)?),
        Estimand::IntrinsicArm => {
            let grid = ns
                .iter()
                .map(|n| u32::try_from(*n).map_err(|_| Error::InvalidArgument(format!("intrinsic arm length {n}"))))
                .collect::<percolab::Result<Vec<u32>>>()?;
            curve_payload(mc.estimate_intrinsic_arm_curve(p, &grid)?)
        }
        Estimand::Exd => curve_payload(mc.estimate_exd_curve(p, &ns)?),
        Estimand::TauAxis => curve_payload(mc.estimate_tau_axis_orbit(p, &ns)?),
        Estimand::ClusterTail => curve_payload(mc.estimate_cluster_tail(p, cfg.t_grid.as_deref().unwrap_or_default())?),
        Estimand::Tau => {
            let region = cfg.region.clone().unwrap_or(Region::Full);
            let x: &Vertex = cfg.x.as_ref().expect("validated");
            let y: &Vertex = cfg.y.as_ref().expect("validated");
            let e = mc.estimate_tau(p, x, y, &region)?;
            let c = Counters::from_estimates([&e]);
            (to_value(&e), c)
        }
        Estimand::Chi => {
            let e = mc.estimate_chi(p)?;
            let c = Counters::from_estimates([&e]);
            (to_value(&e), c)
        }
        Estimand::Spanning => {
            let s = mc.estimate_spanning(p, n.expect("n is a cell"))?;
            let c = Counters::from_estimates([&s.estimate]);
            (to_value(&s), c)
        }
        Estimand::SnTails | Estimand::VolumeTail => {
            let n = n.expect("n is a cell");
            let grid = cfg.lambda_grid.as_deref().unwrap_or_default();
            let s = mc.conditioned_arm_samples(p, n, cfg.min_accepted.expect("validated"))?;
            let counters = Counters {
                trials: s.trials,
                accepted: s.accepted,
                truncated: s.truncated,
            };
            let payload = if cfg.estimand == Estimand::SnTails {
                let (lower, upper) = sn_tails(&s, grid);
                json!({ "lower": lower, "upper": upper })
            } else {
                to_value(&volume_tail(&s, grid, mc.budget.max_volume))
            };
            (payload, counters)
        }
        Estimand::LDelta => {
            let l = mc.estimate_l_delta(p, cfg.delta.expect("validated"), cfg.n_max.expect("validated"))?;
            let c = Counters::from_estimates(&l.curve.estimates);
            (to_value(&l), c)
        }
        Estimand::Xi => {
            let a = cfg.arm_exponent.or(default_arm_exponent(d)).expect("validated");
            let x = mc.estimate_xi(p, &ns, a)?;
            let c = Counters::from_estimates(&x.curve.estimates);
            (to_value(&x), c)
        }
        Estimand::Pc => unreachable!("pc runs through pc-estimate"),
    })
}

fn worse(a: Option<CliError>, b: CliError) -> Option<CliError> {
    match a {
        Some(a) if a.exit_code() >= b.exit_code() => Some(a),
        _ => Some(b),
    }
}

/// Runs every cell of the configuration's grid. Cells that fail still
/// produce a record carrying the error; the run goes on.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    if cfg.estimand == Estimand::Pc {
        return Err(CliError::Validation("field `estimand`: `pc` is run by the pc-estimate subcommand".into()));
    }
    let mc = monte_carlo(cfg);
    let ns: Vec<Option<i64>> = if cfg.estimand.n_is_cell() {
        cfg.ns().into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let mut out = RunOutput {
        records: vec![],
        failure: None,
    };
    for p in cfg.ps() {
        for n in &ns {
            let cell = match n {
                Some(n) => json!({ "p": p, "n": n }),
                None => json!({ "p": p }),
            };
            let mut rec = record(cfg, "estimate", cell);
            let start = Instant::now();
            match run_cell(cfg, &mc, p, *n) {
                Ok((payload, counters)) => {
                    rec.payload = payload;
                    rec.counters = counters;
                }
                Err(e) => {
                    rec.error = Some(RecordError {
                        kind: error_kind(&e).into(),
                        message: e.to_string(),
                    });
                    out.failure = worse(out.failure.take(), CliError::from(e));
                }
            }
            rec.wall_time_s = start.elapsed().as_secs_f64();
            out.records.push(rec);
        }
    }
    Ok(out)
}

pub fn pc_estimate(cfg: &ExperimentConfig) -> Result<ResultRecord, CliError> {
    cfg.validate()?;
    if cfg.estimand != Estimand::Pc {
        return Err(CliError::Validation(format!(
            "field `estimand`: pc-estimate needs `pc`, got `{}`",
            cfg.estimand.id()
        )));
    }
    let ns = cfg.ns();
    let arm_exponent = match cfg.arm_exponent.or(default_arm_exponent(cfg.model.d)) {
        Some(a) => a,
        None => return Err(CliError::Validation(format!("field `arm_exponent`: no default in dimension {}", cfg.model.d))),
    };
    let opts = PcOptions {
        bracket: cfg.bracket.expect("validated"),
        arm_exponent,
        sigmas: cfg.sigmas.unwrap_or(DEFAULT_PC_SIGMAS),
    };
    let mut rec = record(cfg, "pc", json!({ "n1": ns[0], "n2": ns[1] }));
    let start = Instant::now();
    let est = estimate_pc(&monte_carlo(cfg), ns[0], ns[1], cfg.tolerance.expect("validated"), &opts)?;
    rec.wall_time_s = start.elapsed().as_secs_f64();
    rec.counters.trials = cfg.trials.unwrap_or(0);
    rec.payload = to_value(&est);
    Ok(rec)
}

/// Result of `fit`: the record to append and the CSV rows of the data used.
pub struct FitOutput {
    pub record: ResultRecord,
    pub csv: String,
}

fn found_summary(records: &[ResultRecord]) -> String {
    let mut seen: std::collections::BTreeMap<String, usize> = Default::default();
    for r in records {
        *seen.entry(format!("{}:{}", r.record_type, r.estimand)).or_default() += 1;
    }
    if seen.is_empty() {
        return "no records".into();
    }
    seen.iter().map(|(k, v)| format!("{v} × {k}")).collect::<Vec<_>>().join(", ")
}

pub fn fit(records: &[ResultRecord], spec: &FitSpec) -> Result<FitOutput, CliError> {
    let matching: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.record_type == "estimate" && r.estimand == spec.estimand.id() && r.error.is_none())
        .filter(|r| match (spec.p, r.p()) {
            (Some(want), Some(have)) => (want - have).abs() <= 1e-12,
            (Some(_), None) => false,
            (None, _) => true,
        })
        .collect();
    if matching.is_empty() {
        return Err(CliError::Validation(format!(
            "no usable `{}` records{}; found {}",
            spec.estimand.id(),
            spec.p.map(|p| format!(" at p = {p}")).unwrap_or_default(),
            found_summary(records)
        )));
    }
    let in_range = |x: f64| spec.x_min.is_none_or(|m| x >= m) && spec.x_max.is_none_or(|m| x <= m);

    let mut sources: Vec<String> = matching.iter().map(|r| r.config_hash.clone()).collect();
    sources.sort();
    sources.dedup();

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let payload = if spec.op == FitOp::Collapse {
        let pc = spec.pc.expect("validated");
        let mut curves: Vec<(f64, TailCurve)> = vec![];
        for r in &matching {
            let rows: Vec<_> = r.rows().into_iter().filter(|(x, _)| in_range(*x)).collect();
            let p = r.p().ok_or_else(|| CliError::Validation("collapse needs records with a `p` cell".into()))?;
            for (x, e) in &rows {
                csv.push_str(&format!("{p},{}\n", csv_row(*x, e)));
            }
            curves.push((
                p,
                TailCurve {
                    estimand: r.estimand.clone(),
                    abscissae: rows.iter().map(|r| r.0).collect(),
                    estimates: rows.into_iter().map(|r| r.1).collect(),
                    partial: false,
                },
            ));
        }
        let reference = curves
            .iter()
            .find(|(p, _)| (p - pc).abs() <= 1e-12)
            .map(|c| c.1.clone())
            .ok_or_else(|| {
                let ps: Vec<String> = curves.iter().map(|c| c.0.to_string()).collect();
                CliError::Validation(format!("no record at p = {pc} to serve as reference; found p = {}", ps.join(", ")))
            })?;
        csv = csv.replacen(CSV_HEADER, &format!("p,{CSV_HEADER}"), 1);
        to_value(&scaling_collapse(&curves, &reference, pc)?)
    } else {
        let mut rows: Vec<_> = matching.iter().flat_map(|r| r.rows()).filter(|(x, _)| in_range(*x)).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (x, e) in &rows {
            csv.push_str(&csv_row(*x, e));
            csv.push('\n');
        }
        let points: Vec<(f64, f64, f64)> = rows.iter().map(|(x, e)| (*x, e.mean, e.stderr)).collect();
        let f = match spec.op {
            FitOp::Loglog => loglog_fit(&points)?,
            _ => exp_rate_fit(&points)?,
        };
        to_value(&f)
    };

    let spec_value = to_value(spec);
    let canonical = serde_json::to_string(&json!({ "spec": spec_value, "sources": sources })).expect("values serialize");
    let record = ResultRecord {
        record_type: "fit".into(),
        config_hash: hash_hex(&canonical),
        tool_version: TOOL_VERSION.into(),
        sampler: SAMPLER_ID.into(),
        estimand: spec.estimand.id().into(),
        inputs: json!({ "spec": spec_value }),
        payload,
        error: None,
        wall_time_s: 0.0,
        counters: Counters::default(),
        sources,
    };
    Ok(FitOutput { record, csv })
}

pub struct SuiteOptions {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub empty_catalog: bool,
    /// Fault injection: replace the sampler's 2^-53 unit so every variate is
    /// scaled and estimators drift away from the exact values.
    pub corrupt_sampler: Option<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            trials: 100_000,
            seed: 20_240_611,
            workers: 0,
            empty_catalog: false,
            corrupt_sampler: None,
        }
    }
}

pub fn oracle_suite(opts: &SuiteOptions) -> Result<SuiteReport, CliError> {
    let (catalog, fixtures) = if opts.empty_catalog {
        (Catalog::empty(), vec![])
    } else {
        (Catalog::standard(), standard_fixtures())
    };
    let mut base = MonteCarlo::new(percolab::LatticeModel::nearest_neighbor(1), opts.seed, opts.trials).with_workers(opts.workers);
    if let Some(unit) = opts.corrupt_sampler {
        base = base.with_corrupted_sampler(unit);
    }
    Ok(run_suite(&catalog, &fixtures, &base)?)
}
