use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::forest::ForestConfig;
use crate::granger::{Method, NnConfig};
use crate::tcvae::TcvaeConfig;

/// Where trial data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    /// Confounded pair without an `x -> y` edge.
    Null,
    /// Confounded pair with an `x -> y` edge.
    Causal,
    /// Seasonal stand-in for a measured series; proxies are built from `z`.
    Standin,
    /// A CSV file given by `data.csv`.
    Csv,
}

/// A conditioning choice for the Granger test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Cond {
    None,
    P,
    Zhat,
    #[value(name = "z_true")]
    ZTrue,
}

impl Cond {
    pub const ALL: [Cond; 4] = [Cond::None, Cond::P, Cond::Zhat, Cond::ZTrue];

    pub fn label(self) -> &'static str {
        match self {
            Cond::None => "none",
            Cond::P => "p",
            Cond::Zhat => "zhat",
            Cond::ZTrue => "z_true",
        }
    }
}

/// Which confounder estimate is used as `zhat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZhatKind {
    /// Path following the posterior conditional means.
    #[default]
    Mean,
    /// One ancestral posterior draw.
    Draw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dgp: Dgp,
    pub csv: Option<PathBuf>,
    pub t: usize,
    pub ploss: f64,
    /// Proxy noise for `standin` and `csv` data, relative to `|mean(z)|`.
    pub noise_level: f64,
    pub d_p: usize,
    pub d_z: usize,
    pub burn_in: usize,
    pub causal_edge: bool,
    /// Trials per sweep point.
    pub trials: usize,
    /// Trial `k` uses seed `seed + k`.
    pub seed: u64,
    /// Whether `x -> y` really holds; counts false results when known.
    pub truth: Option<bool>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dgp: Dgp::Null,
            csv: None,
            t: 1000,
            ploss: 1.0,
            noise_level: 0.0,
            d_p: 1,
            d_z: 1,
            burn_in: 100,
            causal_edge: true,
            trials: 100,
            seed: 0,
            truth: None,
        }
    }
}

impl DataSection {
    pub fn truth(&self) -> Option<bool> {
        self.truth.or(match self.dgp {
            Dgp::Null => Some(false),
            Dgp::Causal => Some(self.causal_edge),
            Dgp::Standin => Some(true),
            Dgp::Csv => None,
        })
    }
}

/// TCVAE settings; `d_z` defaults to the data confounder dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_z: Option<usize>,
    pub gru_hidden: usize,
    pub head_hidden: usize,
    pub combiner_hidden: usize,
    pub instantaneous: bool,
    pub epochs: usize,
    pub lr: f64,
    pub window: Option<usize>,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub freeze: Vec<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = TcvaeConfig::default();
        Self {
            d_z: None,
            gru_hidden: c.gru_hidden,
            head_hidden: c.head_hidden,
            combiner_hidden: c.combiner_hidden,
            instantaneous: c.instantaneous,
            epochs: c.epochs,
            lr: c.lr,
            window: c.window,
            train_samples: c.train_samples,
            eval_samples: c.eval_samples,
            freeze: c.freeze,
        }
    }
}

impl ModelSection {
    pub fn tcvae(&self, data_d_z: usize, seed: u64) -> TcvaeConfig {
        TcvaeConfig {
            d_z: self.d_z.unwrap_or(data_d_z),
            gru_hidden: self.gru_hidden,
            head_hidden: self.head_hidden,
            combiner_hidden: self.combiner_hidden,
            instantaneous: self.instantaneous,
            epochs: self.epochs,
            lr: self.lr,
            window: self.window,
            train_samples: self.train_samples,
            eval_samples: self.eval_samples,
            seed,
            freeze: self.freeze.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSection {
    pub method: Method,
    pub lag: usize,
    pub alpha: f64,
    pub conditioning: Vec<Cond>,
    /// Each conditioner is repeated this many times.
    pub cond_copies: usize,
    pub zhat: ZhatKind,
    pub forest: ForestConfig,
    /// `seed` is replaced by the trial seed.
    pub nn: NnConfig,
}

impl Default for TestSection {
    fn default() -> Self {
        Self {
            method: Method::RfR2,
            lag: 4,
            alpha: 0.05,
            conditioning: vec![Cond::P, Cond::Zhat, Cond::ZTrue],
            cond_copies: 1,
            zhat: ZhatKind::Mean,
            forest: ForestConfig::default(),
            nn: NnConfig::default(),
        }
    }
}

/// Grid axes; an empty axis stays at its base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub ploss: Vec<f64>,
    pub d_z: Vec<usize>,
    pub d_p: Vec<usize>,
    pub noise_level: Vec<f64>,
    pub nn_steps: Vec<usize>,
    pub cond_copies: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Keep each trial's trained model under `models/`.
    pub save_models: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("vgranger-out"),
            save_models: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub test: TestSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

/// Names of the sweep axes, in grid order (outermost first).
pub const AXES: [&str; 6] = ["ploss", "d_z", "d_p", "noise_level", "nn_steps", "cond_copies"];

/// Resolved axis values at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ploss: f64,
    pub d_z: usize,
    pub d_p: usize,
    pub noise_level: f64,
    pub nn_steps: usize,
    pub cond_copies: usize,
}

impl SweepPoint {
    pub fn axis(&self, name: &str) -> f64 {
        match name {
            "ploss" => self.ploss,
            "d_z" => self.d_z as f64,
            "d_p" => self.d_p as f64,
            "noise_level" => self.noise_level,
            "nn_steps" => self.nn_steps as f64,
            "cond_copies" => self.cond_copies as f64,
            _ => panic!("unknown axis {name}"),
        }
    }
}

fn or_base<T: Copy>(axis: &[T], base: T) -> Vec<T> {
    if axis.is_empty() {
        vec![base]
    } else {
        axis.to_vec()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Axes given more than one value or listed explicitly.
    pub fn swept_axes(&self) -> Vec<&'static str> {
        let s = &self.sweep;
        let lens = [
            s.ploss.len(),
            s.d_z.len(),
            s.d_p.len(),
            s.noise_level.len(),
            s.nn_steps.len(),
            s.cond_copies.len(),
        ];
        AXES.iter()
            .zip(lens)
            .filter(|(_, n)| *n > 0)
            .map(|(a, _)| *a)
            .collect()
    }

    /// Cartesian product of the axes, last axis varying fastest.
    pub fn grid(&self) -> Vec<SweepPoint> {
        let s = &self.sweep;
        let mut out = Vec::new();
        for &ploss in &or_base(&s.ploss, self.data.ploss) {
            for &d_z in &or_base(&s.d_z, self.data.d_z) {
                for &d_p in &or_base(&s.d_p, self.data.d_p) {
                    for &noise_level in &or_base(&s.noise_level, self.data.noise_level) {
                        for &nn_steps in &or_base(&s.nn_steps, self.test.nn.steps) {
                            for &cond_copies in &or_base(&s.cond_copies, self.test.cond_copies) {
                                out.push(SweepPoint {
                                    ploss,
                                    d_z,
                                    d_p,
                                    noise_level,
                                    nn_steps,
                                    cond_copies,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.data;
        if d.trials == 0 {
            return bad("data.trials must be at least 1".into());
        }
        if d.dgp == Dgp::Csv && d.csv.is_none() {
            return bad("data.dgp = \"csv\" needs data.csv".into());
        }
        if d.dgp != Dgp::Csv && d.csv.is_some() {
            return bad("data.csv is only read when data.dgp = \"csv\"".into());
        }
        let synthetic = matches!(d.dgp, Dgp::Null | Dgp::Causal);
        if synthetic && (d.noise_level != 0.0 || !self.sweep.noise_level.is_empty()) {
            return bad("noise_level applies to standin and csv data; use ploss for generated data".into());
        }
        if !synthetic && !self.sweep.ploss.is_empty() {
            return bad("ploss applies to generated data only".into());
        }
        if d.dgp == Dgp::Standin && !self.sweep.d_z.is_empty() {
            return bad("the stand-in confounder is one-dimensional; remove sweep.d_z".into());
        }
        if self.test.conditioning.is_empty() {
            return bad("test.conditioning must name at least one conditioning set".into());
        }
        let mut seen = Vec::new();
        for c in &self.test.conditioning {
            if seen.contains(c) {
                return bad(format!("conditioning {} listed twice", c.label()));
            }
            seen.push(*c);
        }
        let s = &self.sweep;
        let base = [d.ploss, d.noise_level];
        if s.ploss.iter().chain(&s.noise_level).chain(&base).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("ploss and noise_level values must be finite and >= 0".into());
        }
        if s.d_z.iter().chain(&s.d_p).chain(&s.cond_copies).any(|&v| v == 0) {
            return bad("d_z, d_p and cond_copies values must be at least 1".into());
        }
        if d.d_z == 0 || d.d_p == 0 || self.test.cond_copies == 0 {
            return bad("d_z, d_p and cond_copies must be at least 1".into());
        }
        if self.test.lag == 0 {
            return bad("test.lag must be at least 1".into());
        }
        if !(self.test.alpha > 0.0 && self.test.alpha < 1.0) {
            return bad(format!("test.alpha must lie in (0, 1), got {}", self.test.alpha));
        }
        if self.test.conditioning.contains(&Cond::Zhat) {
            self.model
                .tcvae(d.d_z, 0)
                .validate()
                .map_err(|e| CliError::Config(format!("model: {e}")))?;
        }
        Ok(())
    }
}
