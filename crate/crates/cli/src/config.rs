//! Experiment configuration files.

use std::path::Path;

use percolab::{Budget, LatticeModel, Region, Vertex};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Versioned identifier of the configuration schema in `schema/`.
pub const SCHEMA_ID: &str = "urn:percolab:experiment-config:v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimand {
    Pi,
    Tau,
    TauAxis,
    SnTails,
    VolumeTail,
    ClusterTail,
    IntrinsicArm,
    Spanning,
    Exd,
    LDelta,
    Xi,
    Chi,
    Pc,
}

impl Estimand {
    pub const ALL: [Estimand; 13] = [
        Estimand::Pi,
        Estimand::Tau,
        Estimand::TauAxis,
        Estimand::SnTails,
        Estimand::VolumeTail,
        Estimand::ClusterTail,
        Estimand::IntrinsicArm,
        Estimand::Spanning,
        Estimand::Exd,
        Estimand::LDelta,
        Estimand::Xi,
        Estimand::Chi,
        Estimand::Pc,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Estimand::Pi => "pi",
            Estimand::Tau => "tau",
            Estimand::TauAxis => "tau-axis",
            Estimand::SnTails => "sn-tails",
            Estimand::VolumeTail => "volume-tail",
            Estimand::ClusterTail => "cluster-tail",
            Estimand::IntrinsicArm => "intrinsic-arm",
            Estimand::Spanning => "spanning",
            Estimand::Exd => "exd",
            Estimand::LDelta => "l-delta",
            Estimand::Xi => "xi",
            Estimand::Chi => "chi",
            Estimand::Pc => "pc",
        }
    }

    /// Whether each value of `n` is a separate cell rather than a point of
    /// one curve.
    pub fn n_is_cell(self) -> bool {
        matches!(self, Estimand::SnTails | Estimand::VolumeTail | Estimand::Spanning)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_volume: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_intrinsic_radius: Option<u32>,
}

impl BudgetSpec {
    pub fn resolve(&self) -> Budget {
        let d = Budget::default();
        Budget {
            max_volume: self.max_volume.unwrap_or(d.max_volume),
            max_intrinsic_radius: self.max_intrinsic_radius.unwrap_or(d.max_intrinsic_radius),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "$schema", default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub experiment_id: String,
    pub estimand: Estimand,
    pub model: LatticeModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vertex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vertex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_accepted: Option<u64>,
    #[serde(default)]
    pub budget: BudgetSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("field `{field}`: {msg}"))
}

fn need<'a, T>(v: &'a Option<T>, field: &str, estimand: Estimand) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| invalid(field, format!("required by estimand `{}`", estimand.id())))
}

fn nonempty<T>(v: &Option<Vec<T>>, field: &str) -> Result<(), CliError> {
    match v {
        Some(g) if g.is_empty() => Err(invalid(field, "grid is empty")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(s) = &self.schema {
            if s != SCHEMA_ID {
                return Err(invalid("$schema", format!("expected {SCHEMA_ID}, got {s}")));
            }
        }
        if self.experiment_id.trim().is_empty() {
            return Err(invalid("experiment_id", "must not be empty"));
        }
        self.model.validate().map_err(|e| invalid("model", e))?;
        for (field, grid) in [("p_grid", &self.p_grid), ("lambda_grid", &self.lambda_grid)] {
            nonempty(grid, field)?;
            if let Some(g) = grid {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(field, "values must be finite"));
                }
            }
        }
        nonempty(&self.n_grid, "n_grid")?;
        nonempty(&self.t_grid, "t_grid")?;
        if self.p.is_some() && self.p_grid.is_some() {
            return Err(invalid("p", "give either `p` or `p_grid`, not both"));
        }
        if self.n.is_some() && self.n_grid.is_some() {
            return Err(invalid("n", "give either `n` or `n_grid`, not both"));
        }
        for p in self.ps() {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(if self.p.is_some() { "p" } else { "p_grid" }, format!("{p} is not in [0, 1]")));
            }
        }
        if self.trials == Some(0) {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.min_accepted == Some(0) {
            return Err(invalid("min_accepted", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        self.budget.resolve().validate().map_err(|e| invalid("budget", e))?;

        let e = self.estimand;
        need(&self.trials, "trials", e)?;
        if e == Estimand::Pc {
            let grid = need(&self.n_grid, "n_grid", e)?;
            if grid.len() != 2 {
                return Err(invalid("n_grid", "estimand `pc` takes exactly two radii [n1, n2]"));
            }
            need(&self.tolerance, "tolerance", e)?;
            need(&self.bracket, "bracket", e)?;
            return Ok(());
        }
        if self.ps().is_empty() {
            return Err(invalid("p", format!("`p` or `p_grid` is required by estimand `{}`", e.id())));
        }
        match e {
            Estimand::Pi | Estimand::TauAxis | Estimand::IntrinsicArm | Estimand::Exd | Estimand::Xi => {
                if self.ns().is_empty() {
                    return Err(invalid("n_grid", format!("required by estimand `{}`", e.id())));
                }
                if e == Estimand::Xi && self.arm_exponent.is_none() && percolab::estimators::default_arm_exponent(self.model.d).is_none() {
                    return Err(invalid("arm_exponent", format!("no default in dimension {}", self.model.d)));
                }
            }
            Estimand::SnTails | Estimand::VolumeTail => {
                if self.ns().is_empty() {
                    return Err(invalid("n", format!("required by estimand `{}`", e.id())));
                }
                need(&self.lambda_grid, "lambda_grid", e)?;
                need(&self.min_accepted, "min_accepted", e)?;
            }
            Estimand::Spanning => {
                if self.ns().is_empty() {
                    return Err(invalid("n", "required by estimand `spanning`"));
                }
            }
            Estimand::ClusterTail => {
                need(&self.t_grid, "t_grid", e)?;
            }
            Estimand::LDelta => {
                need(&self.delta, "delta", e)?;
                need(&self.n_max, "n_max", e)?;
            }
            Estimand::Tau => {
                need(&self.x, "x", e)?;
                need(&self.y, "y", e)?;
            }
            Estimand::Chi | Estimand::Pc => {}
        }
        Ok(())
    }

    pub fn ps(&self) -> Vec<f64> {
        match (&self.p, &self.p_grid) {
            (Some(p), _) => vec![*p],
            (None, Some(g)) => g.clone(),
            _ => vec![],
        }
    }

    pub fn ns(&self) -> Vec<i64> {
        match (&self.n, &self.n_grid) {
            (Some(n), _) => vec![*n],
            (None, Some(g)) => g.clone(),
            _ => vec![],
        }
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(0)
    }

    /// Canonical form for hashing: keys sorted at every level, no
    /// whitespace, and `workers` removed since it never affects results.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("configs serialize");
        if let Value::Object(m) = &mut v {
            m.remove("workers");
        }
        // serde_json maps are ordered by key, so this is already sorted.
        serde_json::to_string(&v).expect("values serialize")
    }

    pub fn hash(&self) -> String {
        hash_hex(&self.canonical_json())
    }
}

pub fn hash_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Fit requests for `percolab fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub op: FitOp,
    pub estimand: Estimand,
    /// Keep only records at this `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    /// Candidate critical point for `collapse`; the record at this `p` is
    /// the reference curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitOp {
    Loglog,
    ExpRate,
    Collapse,
}

impl FitSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let spec: FitSpec = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("fit spec: {e}")))?;
        if spec.op == FitOp::Collapse && spec.pc.is_none() {
            return Err(invalid("pc", "required by op `collapse`"));
        }
        Ok(spec)
    }
}
