//! Run configuration: JSON file, flag overrides, and resolution of defaults.

use std::path::{Path, PathBuf};

use bsderk::model::{by_name as problem_by_name, ProblemParams};
use bsderk::psi::by_name as weight_by_name;
use bsderk::solver::standard_weight;
use bsderk::suite::{H_LADDER, N_LADDER};
use bsderk::tableau::{classify_order, named};
use bsderk::{Band, Problem64, SchemeSpec64, SolverConfig, Tableau64};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Fz {
    Zero,
    Nonzero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Y,
    Z,
}

/// A named tableau (`name[:key=value,...]`) or a full inline tableau.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableauSpec {
    Named(String),
    Inline(Box<Tableau64>),
}

impl TableauSpec {
    pub fn build(&self) -> Result<Tableau64, CliError> {
        match self {
            TableauSpec::Named(s) => named(s).map_err(|e| CliError::Config(e.to_string())),
            TableauSpec::Inline(t) => Ok((**t).clone()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub problem: Option<String>,
    pub problem_params: ProblemParams,
    pub tableau: Option<TableauSpec>,
    /// Z weights `ψ` and `φ` used at every stage.
    pub psi: Option<String>,
    pub phi: Option<String>,
    pub order: Option<u8>,
    pub fz: Option<Fz>,
    pub solver: SolverConfig,
    pub n: Option<Vec<usize>>,
    pub h: Option<Vec<f64>>,
    pub anchor: Option<f64>,
    /// Half-width of the default slope bands.
    pub tolerance: Option<f64>,
    pub min_slope: Option<f64>,
    pub max_slope: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_spread: Option<f64>,
    pub which: Option<Which>,
    pub m: Option<usize>,
    pub t: Option<f64>,
    pub x: Option<f64>,
    /// `sin` for `sin(x + t)`, `exact` for the problem's solution `u`.
    pub test_fn: Option<String>,
    pub out_json: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON run configuration (unknown keys are rejected).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    /// Named tableau, e.g. `three_stage:c2=1/2,c3=1`.
    #[arg(long, alias = "scheme")]
    pub tableau: Option<String>,
    #[arg(long)]
    pub psi: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub order: Option<u8>,
    #[arg(long, value_enum)]
    pub fz: Option<Fz>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub h: Option<Vec<f64>>,
    #[arg(long)]
    pub anchor: Option<f64>,
    #[arg(long = "tol")]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub min_slope: Option<f64>,
    #[arg(long)]
    pub max_slope: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_spread: Option<f64>,
    #[arg(long, value_enum)]
    pub which: Option<Which>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub test_fn: Option<String>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub quad: Option<usize>,
    #[arg(long)]
    pub interp: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Config file (if any) with the flags applied on top.
    pub fn from_overrides(command: &str, o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => load(p)?,
            None => RunConfig::default(),
        };
        if let Some(found) = &c.command {
            if found != command {
                return Err(CliError::Config(format!("config is for `{found}`, not `{command}`")));
            }
        }
        c.command = Some(command.to_string());
        set(&mut c.problem, o.problem.clone());
        set(&mut c.tableau, o.tableau.clone().map(TableauSpec::Named));
        set(&mut c.psi, o.psi.clone());
        set(&mut c.phi, o.phi.clone());
        set(&mut c.order, o.order);
        set(&mut c.fz, o.fz);
        set(&mut c.n, o.n.clone());
        set(&mut c.h, o.h.clone());
        set(&mut c.anchor, o.anchor);
        set(&mut c.tolerance, o.tolerance);
        set(&mut c.min_slope, o.min_slope);
        set(&mut c.max_slope, o.max_slope);
        set(&mut c.epsilon, o.epsilon);
        set(&mut c.max_spread, o.max_spread);
        set(&mut c.which, o.which);
        set(&mut c.m, o.m);
        set(&mut c.t, o.t);
        set(&mut c.x, o.x);
        set(&mut c.test_fn, o.test_fn.clone());
        set(&mut c.problem_params.horizon, o.horizon);
        set(&mut c.problem_params.kappa, o.kappa);
        set(&mut c.problem_params.sigma, o.sigma);
        set(&mut c.out_json, o.out_json.clone());
        set(&mut c.out_csv, o.out_csv.clone());
        let g = &mut c.solver.grid;
        if let Some(v) = o.nodes {
            g.n_nodes = v;
        }
        if let Some(v) = o.quad {
            g.n_quad = v;
        }
        if let Some(v) = o.interp {
            g.p_interp = v;
        }
        if let Some(v) = o.radius {
            g.radius = v;
        }
        Ok(c)
    }

    /// The configuration as embedded in reports: defaults filled in, output paths dropped.
    pub fn echo(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.out_json = None;
        c.out_csv = None;
        serde_json::to_value(c).expect("config serializes")
    }

    pub fn problem(&mut self, default: &str) -> Result<Problem64, CliError> {
        let name = self.problem.get_or_insert_with(|| default.to_string()).clone();
        problem_by_name(&name, &self.problem_params).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn tableau(&self) -> Result<Tableau64, CliError> {
        self.tableau.as_ref().ok_or_else(|| CliError::Config("no tableau given (use --tableau)".into()))?.build()
    }

    /// Tableau plus weights; the order defaults to the classified one and the
    /// weights to the standard members of `B^{order-1}` and `B^{order-2}`.
    pub fn scheme(&mut self, fz_zero: bool) -> Result<(SchemeSpec64, u8), CliError> {
        let t = self.tableau()?;
        let order = match self.order {
            Some(o) => o,
            None => classify_order(&t, fz_zero),
        };
        if order == 0 {
            return Err(CliError::Config("tableau satisfies no order condition system".into()));
        }
        self.order = Some(order);
        let m = order as usize;
        let psi_name = self.psi.get_or_insert_with(|| standard_name(m.saturating_sub(1))).clone();
        let phi_name = self.phi.get_or_insert_with(|| standard_name(m.saturating_sub(2))).clone();
        let psi = weight_by_name(&psi_name).map_err(|e| CliError::Config(e.to_string()))?;
        let phi = weight_by_name(&phi_name).map_err(|e| CliError::Config(e.to_string()))?;
        let q = t.q;
        let spec = SchemeSpec64::new(t, vec![psi; q], vec![phi; q]).map_err(|e| CliError::Config(e.to_string()))?;
        Ok((spec, order))
    }

    pub fn n_ladder(&mut self, default: &[usize]) -> Vec<usize> {
        self.n.get_or_insert_with(|| default.to_vec()).clone()
    }

    pub fn h_ladder(&mut self) -> Vec<f64> {
        self.h.get_or_insert_with(|| H_LADDER.to_vec()).clone()
    }

    pub fn tol(&mut self) -> f64 {
        *self.tolerance.get_or_insert(0.35)
    }

    /// Explicit `min_slope`/`max_slope` if either is set, else `default`.
    pub fn band(&self, default: Band) -> Band {
        if self.min_slope.is_some() || self.max_slope.is_some() {
            Band { lo: self.min_slope, hi: self.max_slope }
        } else {
            default
        }
    }
}

/// Name of [`standard_weight`]`(m)` in the weight-name grammar.
pub fn standard_name(m: usize) -> String {
    let name = match m {
        0 => "indicator".to_string(),
        1 => "linear_b1".to_string(),
        _ => format!("default_bm:{m}"),
    };
    debug_assert_eq!(weight_by_name::<f64>(&name).ok(), Some(standard_weight(m)));
    name
}

pub const DEFAULT_N: [usize; 5] = N_LADDER;
pub const STABILITY_N: [usize; 4] = [8, 16, 32, 64];
