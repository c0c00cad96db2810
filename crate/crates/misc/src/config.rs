//! Study configuration (TOML, versioned by `schema`).
//!
//! ```toml
//! schema = 1
//!
//! [problem]
//! dim = 1            # 1 or 3
//! n_vars = 1
//! h0 = 0.3333333333333333
//! sigma = 0.16
//! x0 = [0.3]         # default 0.3 (d = 1) or [0.3, 0.2, 0.6] (d = 3)
//! dof_cap = 131072
//!
//! [rates]
//! source = "table"   # table | fitted | lemma
//! gamma_tilde = [1.0]
//! r_tilde = [2.0]
//! # g = [...]        # pins the stochastic rates (written by `fit-rates`)
//! eps_e = 0.0
//!
//! [study]
//! methods = ["misc-apriori", "misc-aposteriori"]
//! schedule = []      # a-priori levels L; empty picks them from the dof cap
//! points = 6
//!
//! [output]
//! csv = "study.csv"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use misc_core::field::{FieldSpec, QoiSpec};
use misc_core::index_sets::{RateModel, TABLE_G};
use misc_core::rates::{apriori_g, complexity_params, ComplexityParams};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema: u32,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub dim: usize,
    pub n_vars: usize,
    pub h0: f64,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Replaces the `d = 3` mode triples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<[u32; 3]>>,
    pub dof_cap: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            n_vars: 1,
            h0: 1.0 / 3.0,
            sigma: 0.16,
            x0: None,
            modes: None,
            dof_cap: misc_core::fd::DEFAULT_DOF_CAP,
        }
    }
}

impl ProblemConfig {
    pub fn field(&self) -> anyhow::Result<FieldSpec> {
        Ok(match &self.modes {
            Some(table) => FieldSpec::with_modes(self.dim, self.n_vars, table)?,
            None => FieldSpec::new(self.dim, self.n_vars)?,
        })
    }

    pub fn qoi(&self) -> anyhow::Result<QoiSpec> {
        let x0 = match &self.x0 {
            Some(x0) => x0.clone(),
            None => QoiSpec::standard(self.dim)?.x0,
        };
        Ok(QoiSpec::new(self.sigma, x0)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateSource {
    /// Tabulated `g` for the log-uniform problem.
    Table,
    /// Fitted from solver output (or pinned via `g`).
    Fitted,
    /// Halved polyellipse rates `g~ = g* (1 - eps_E) / 2`.
    Lemma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    pub source: RateSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_tilde: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_tilde: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    pub eps_e: f64,
    pub fit: FitConfig,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            source: RateSource::Table,
            gamma_tilde: None,
            r_tilde: None,
            g: None,
            eps_e: 0.0,
            fit: FitConfig::default(),
        }
    }
}

/// Sampling used when rates are fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Spatial level for the stochastic rays; default 4 (d = 1), 3 (d = 3).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_fine: Option<Vec<u32>>,
    /// Samples `alpha_i = j + 1`, `j = 1..=spatial_samples`.
    pub spatial_samples: u32,
    /// Samples `beta_n = j + 1`, `j = 1..=stochastic_samples`.
    pub stochastic_samples: u32,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha_fine: None,
            spatial_samples: 6,
            stochastic_samples: 4,
        }
    }
}

impl FitConfig {
    pub fn alpha_fine(&self, dim: usize) -> Vec<u32> {
        self.alpha_fine
            .clone()
            .unwrap_or_else(|| vec![if dim == 1 { 4 } else { 3 }; dim])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MiscApriori,
    MiscAposteriori,
    Mlsc,
    Scc,
    Sgsc,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::MiscApriori,
        Method::MiscAposteriori,
        Method::Mlsc,
        Method::Scc,
        Method::Sgsc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MiscApriori => "misc-apriori",
            Method::MiscAposteriori => "misc-aposteriori",
            Method::Mlsc => "mlsc",
            Method::Scc => "scc",
            Method::Sgsc => "sgsc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .with_context(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub methods: Vec<Method>,
    /// Increasing a-priori levels `L`; empty selects `points` levels ending
    /// at the finest one whose reference set fits the dof cap.
    pub schedule: Vec<f64>,
    pub points: usize,
    /// Spacing of the automatic schedule; default `max(r_i + gamma_i)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// `L_ref - L_max`; default `2 max(r_i + gamma_i)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Fixed (diagonal) spatial levels of the SGSC curves; empty uses every
    /// level within the dof cap.
    pub sgsc_levels: Vec<u32>,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            methods: vec![Method::MiscApriori],
            schedule: Vec::new(),
            points: 6,
            step: None,
            margin: None,
            sgsc_levels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_set: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            problem: ProblemConfig::default(),
            rates: RatesConfig::default(),
            study: StudySection::default(),
            output: OutputConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(
            self.schema == SCHEMA_VERSION,
            "unsupported config schema {} (expected {SCHEMA_VERSION})",
            self.schema
        );
        self.problem.field()?;
        self.problem.qoi()?;
        ensure!(self.problem.dof_cap > 0, "dof_cap must be positive");
        let s = &self.study;
        ensure!(!s.methods.is_empty(), "study.methods is empty");
        if !s.schedule.is_empty() {
            ensure!(
                s.schedule.windows(2).all(|w| w[0] < w[1]),
                "study.schedule must be strictly increasing"
            );
        } else {
            ensure!(s.points >= 1, "study.points must be at least 1");
        }
        if let Some(step) = s.step {
            ensure!(step > 0.0, "study.step must be positive");
        }
        if let Some(margin) = s.margin {
            ensure!(margin > 0.0, "study.margin must be positive");
        }
        let dim = self.problem.dim;
        for (name, v) in [("gamma_tilde", &self.rates.gamma_tilde), ("r_tilde", &self.rates.r_tilde)] {
            if let Some(v) = v {
                ensure!(v.len() == dim, "rates.{name} needs {dim} entries, got {}", v.len());
            }
        }
        if let Some(g) = &self.rates.g {
            ensure!(
                g.len() == self.problem.n_vars,
                "rates.g needs {} entries, got {}",
                self.problem.n_vars,
                g.len()
            );
        }
        if let Some(a) = &self.rates.fit.alpha_fine {
            ensure!(a.len() == dim, "rates.fit.alpha_fine needs {dim} entries");
        }
        Ok(())
    }

    /// Rates from the configured source. `fitted` without pinned `g` needs a
    /// fit first (see [`crate::fit`]) and is rejected here.
    pub fn rate_model(&self) -> anyhow::Result<RateModel> {
        let (d, n) = (self.problem.dim, self.problem.n_vars);
        let gamma = self.rates.gamma_tilde.clone().unwrap_or_else(|| vec![1.0; d]);
        let r = self.rates.r_tilde.clone().unwrap_or_else(|| vec![2.0; d]);
        let g = match (&self.rates.g, self.rates.source) {
            (Some(g), _) => g.clone(),
            (None, RateSource::Table) => {
                ensure!(n <= TABLE_G.len(), "the g table covers N <= {}", TABLE_G.len());
                TABLE_G[..n].to_vec()
            }
            (None, RateSource::Lemma) => apriori_g(self.problem.field()?.lambdas(), self.rates.eps_e)
                .iter()
                .map(|p| p.g_tilde)
                .collect(),
            (None, RateSource::Fitted) => bail!("rates.source = \"fitted\" needs rates.g or a fit"),
        };
        Ok(RateModel::from_tilde(&gamma, &r, &g)?)
    }

    /// Pin `rates` (e.g. fitted ones) into the config.
    /// Complexity exponents from the spatial rates (`g` does not enter).
    pub fn complexity(&self) -> anyhow::Result<ComplexityParams> {
        let d = self.problem.dim;
        let gamma = self.rates.gamma_tilde.clone().unwrap_or_else(|| vec![1.0; d]);
        let r = self.rates.r_tilde.clone().unwrap_or_else(|| vec![2.0; d]);
        let rates = RateModel::from_tilde(&gamma, &r, &[])?;
        Ok(complexity_params(&rates, 1.0)?)
    }

    pub fn pin_rates(&mut self, rates: &RateModel, source: RateSource) {
        self.rates.source = source;
        self.rates.gamma_tilde = Some(rates.gamma_tilde());
        self.rates.r_tilde = Some(rates.r_tilde());
        self.rates.g = Some(rates.gs.clone());
    }
}
