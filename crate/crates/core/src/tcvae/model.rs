use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::elbo::Carry;
use super::prior::{PriorIds, PriorParams, PriorVars};
use super::TcvaeError;
use crate::neural::checkpoint::{Checkpoint, Format};
use crate::neural::{diag_gaussian_logpdf, Activation, GaussianHead, Gru, Mlp};
use crate::stats::Standardizer;
use crate::synthdata::TimeSeriesBundle;
use crate::tensor::{concat, stack, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcvaeConfig {
    pub d_z: usize,
    pub gru_hidden: usize,
    pub head_hidden: usize,
    pub combiner_hidden: usize,
    /// Emission heads read `h_t` instead of `h_{t-1}`.
    pub instantaneous: bool,
    pub epochs: usize,
    pub lr: f64,
    /// Sliding-window length; `None` trains on the whole sequence.
    pub window: Option<usize>,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub seed: u64,
    /// Parameter-name prefixes excluded from optimization.
    pub freeze: Vec<String>,
}

impl Default for TcvaeConfig {
    fn default() -> Self {
        Self {
            d_z: 1,
            gru_hidden: 16,
            head_hidden: 32,
            combiner_hidden: 32,
            instantaneous: false,
            epochs: 100,
            lr: 0.005,
            window: None,
            train_samples: 1,
            eval_samples: 100,
            seed: 0,
            freeze: Vec::new(),
        }
    }
}

impl TcvaeConfig {
    pub fn validate(&self) -> Result<(), TcvaeError> {
        let bad = |m: &str| Err(TcvaeError::Config(m.to_string()));
        if self.d_z == 0 {
            return bad("d_z must be positive");
        }
        if self.gru_hidden == 0 || self.head_hidden == 0 || self.combiner_hidden == 0 {
            return bad("hidden sizes must be positive");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be a nonnegative number");
        }
        if self.train_samples == 0 || self.eval_samples == 0 {
            return bad("sample counts must be positive");
        }
        if self.window == Some(0) {
            return bad("window length must be positive");
        }
        Ok(())
    }
}

/// Standardized observations, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

impl Observations {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn d_p(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    /// Values feeding step `t` as "previous": zeros before the start.
    fn prev(&self, t: usize) -> (f64, f64, Vec<f64>) {
        if t == 0 {
            (0.0, 0.0, vec![0.0; self.d_p()])
        } else {
            (self.x[t - 1], self.y[t - 1], self.p[t - 1].clone())
        }
    }

    pub(crate) fn check_range(&self, range: &Range<usize>) -> Result<(), TcvaeError> {
        if range.is_empty() || range.end > self.len() {
            return Err(TcvaeError::Data(format!(
                "window {range:?} outside series of length {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Per-series columns in the order x, y, p_1.. used by the standardizer.
fn bundle_columns(bundle: &TimeSeriesBundle) -> Vec<Vec<f64>> {
    let mut cols = vec![bundle.x.clone(), bundle.y.clone()];
    cols.extend(bundle.p.iter().cloned());
    cols
}

#[derive(Debug, Clone)]
pub(crate) struct Arch {
    pub prior: PriorIds,
    pub gru_z: Gru,
    pub gru_x: Gru,
    pub phi_x: GaussianHead,
    pub phi_p: GaussianHead,
    pub phi_y: GaussianHead,
    pub rev_x: Gru,
    pub rev_p: Gru,
    pub rev_y: Gru,
    pub combiner: Mlp,
    pub phi_z: GaussianHead,
}

impl Arch {
    fn new(store: &mut ParamStore, c: &TcvaeConfig, d_p: usize, rng: &mut ChaCha8Rng) -> Self {
        let (d, h, k) = (c.d_z, c.gru_hidden, c.head_hidden);
        let prior = PriorIds::new(store, "tcvae/prior", d);
        let gru_z = Gru::new(store, "tcvae/gen/gru_z", d, h, rng);
        let gru_x = Gru::new(store, "tcvae/gen/gru_x", 1, h, rng);
        let phi_x = GaussianHead::new(store, "tcvae/gen/phi_x", 1 + h, &[k], 1, rng);
        let phi_p = GaussianHead::new(store, "tcvae/gen/phi_p", d_p + h, &[k], d_p, rng);
        let phi_y = GaussianHead::new(store, "tcvae/gen/phi_y", 1 + 2 * h, &[k], 1, rng);
        let rev_x = Gru::new(store, "tcvae/inf/rev_x", 1, h, rng);
        let rev_p = Gru::new(store, "tcvae/inf/rev_p", d_p, h, rng);
        let rev_y = Gru::new(store, "tcvae/inf/rev_y", 1, h, rng);
        let combiner = Mlp::new(
            store,
            "tcvae/inf/combiner",
            &[3 * h, c.combiner_hidden],
            Activation::Tanh,
            rng,
        );
        let phi_z = GaussianHead::new(store, "tcvae/inf/phi_z", d + c.combiner_hidden, &[k], d, rng);
        Self {
            prior,
            gru_z,
            gru_x,
            phi_x,
            phi_p,
            phi_y,
            rev_x,
            rev_p,
            rev_y,
            combiner,
            phi_z,
        }
    }
}

/// Generative log-likelihood pieces over one window.
#[derive(Debug, Clone)]
pub struct GenTerms<'t> {
    pub log_x: Var<'t>,
    pub log_p: Var<'t>,
    pub log_y: Var<'t>,
    /// Latent GRU state after consuming `z_t`, per window index.
    pub h_z: Vec<Var<'t>>,
}

/// A trained or freshly initialized model together with the standardizer
/// fitted on its training bundle.
#[derive(Debug, Clone)]
pub struct TcvaeModel {
    pub config: TcvaeConfig,
    pub d_p: usize,
    pub store: ParamStore,
    pub standardizer: Standardizer,
    /// Epochs already trained, carried through checkpoints.
    pub epochs_done: usize,
    pub(crate) arch: Arch,
}

impl TcvaeModel {
    pub fn new(config: TcvaeConfig, d_p: usize, standardizer: Standardizer) -> Result<Self, TcvaeError> {
        config.validate()?;
        if d_p == 0 {
            return Err(TcvaeError::Data("the model needs at least one proxy series".into()));
        }
        if standardizer.dim() != 2 + d_p {
            return Err(TcvaeError::Config(format!(
                "standardizer covers {} columns, expected {}",
                standardizer.dim(),
                2 + d_p
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let arch = Arch::new(&mut store, &config, d_p, &mut rng);
        Ok(Self {
            config,
            d_p,
            store,
            standardizer,
            epochs_done: 0,
            arch,
        })
    }

    /// Initializes a model whose standardizer is fitted on `bundle`.
    pub fn for_bundle(config: TcvaeConfig, bundle: &TimeSeriesBundle) -> Result<Self, TcvaeError> {
        bundle.validate(false)?;
        let st = Standardizer::fit(&bundle_columns(bundle));
        Self::new(config, bundle.d_p(), st)
    }

    pub fn observations(&self, bundle: &TimeSeriesBundle) -> Result<Observations, TcvaeError> {
        bundle.validate(false)?;
        if bundle.d_p() != self.d_p {
            return Err(TcvaeError::Data(format!(
                "bundle has {} proxies, model expects {}",
                bundle.d_p(),
                self.d_p
            )));
        }
        let cols = bundle_columns(bundle);
        let s = &self.standardizer;
        let x = s.apply_column(0, &cols[0]);
        let y = s.apply_column(1, &cols[1]);
        let pc: Vec<Vec<f64>> = (0..self.d_p).map(|j| s.apply_column(2 + j, &cols[2 + j])).collect();
        let p = (0..bundle.len()).map(|t| pc.iter().map(|c| c[t]).collect()).collect();
        Ok(Observations { x, y, p })
    }

    pub fn d_z(&self) -> usize {
        self.config.d_z
    }

    pub fn prior_params(&self) -> PriorParams {
        self.arch.prior.snapshot(&self.store)
    }

    pub fn prior_vars<'t>(&self, g: &Graph<'t>) -> PriorVars<'t> {
        self.arch.prior.vars(g)
    }

    /// Initial recurrent state for a window starting at series index 0.
    pub fn zero_carry(&self) -> Carry {
        Carry {
            h_z: vec![0.0; self.config.gru_hidden],
            h_x: vec![0.0; self.config.gru_hidden],
            z: vec![0.0; self.config.d_z],
        }
    }

    /// Cause-GRU states over the window; `out[i]` has consumed `x[..=start+i]`.
    pub(crate) fn cause_states<'t>(
        &self,
        g: &Graph<'t>,
        obs: &Observations,
        range: Range<usize>,
        h_x0: &[f64],
    ) -> Result<Vec<Var<'t>>, TcvaeError> {
        let inputs: Vec<Var<'t>> = obs.x[range].iter().map(|&v| g.vector(vec![v])).collect();
        Ok(self
            .arch
            .gru_x
            .run(g, &inputs, g.vector(h_x0.to_vec()), crate::neural::Direction::Forward)?)
    }

    /// `log p(x|z)`, `log p(p|z)` and `log p(y|x,z)` over `range` for a latent
    /// path aligned with the window.
    pub fn generate_logpdf<'t>(
        &self,
        g: &Graph<'t>,
        obs: &Observations,
        range: Range<usize>,
        z_path: &[Var<'t>],
        carry: &Carry,
    ) -> Result<GenTerms<'t>, TcvaeError> {
        obs.check_range(&range)?;
        let h_x = self.cause_states(g, obs, range.clone(), &carry.h_x)?;
        self.generate_with_cause(g, obs, range, z_path, carry, &h_x)
    }

    pub(crate) fn generate_with_cause<'t>(
        &self,
        g: &Graph<'t>,
        obs: &Observations,
        range: Range<usize>,
        z_path: &[Var<'t>],
        carry: &Carry,
        h_x: &[Var<'t>],
    ) -> Result<GenTerms<'t>, TcvaeError> {
        let len = range.len();
        if z_path.len() != len {
            return Err(TcvaeError::Data(format!(
                "latent path of length {} for window of length {len}",
                z_path.len()
            )));
        }
        let a = &self.arch;
        let h_z = a
            .gru_z
            .run(g, z_path, g.vector(carry.h_z.clone()), crate::neural::Direction::Forward)?;
        let hz0 = g.vector(carry.h_z.clone());
        let hx0 = g.vector(carry.h_x.clone());
        let mut rows_x = Vec::with_capacity(len);
        let mut rows_p = Vec::with_capacity(len);
        let mut rows_y = Vec::with_capacity(len);
        let mut tgt_p = Vec::with_capacity(len * self.d_p);
        for (i, t) in range.clone().enumerate() {
            let (hz, hx) = if self.config.instantaneous {
                (h_z[i], h_x[i])
            } else if i == 0 {
                (hz0, hx0)
            } else {
                (h_z[i - 1], h_x[i - 1])
            };
            let (xp, yp, pp) = obs.prev(t);
            rows_x.push(concat(&[g.vector(vec![xp]), hz])?);
            rows_p.push(concat(&[g.vector(pp), hz])?);
            rows_y.push(concat(&[g.vector(vec![yp]), hz, hx])?);
            tgt_p.extend_from_slice(&obs.p[t]);
        }
        let column = |v: &[f64]| g.constant(Tensor::from_parts(vec![v.len(), 1], v.to_vec()));
        let term = |head: &GaussianHead, rows: &[Var<'t>], target: Var<'t>, name: &'static str| {
            let (mu, sigma) = head.forward(g, stack(rows)?)?;
            let lp = diag_gaussian_logpdf(target, mu, sigma)?;
            finite(lp, name)
        };
        let log_x = term(&a.phi_x, &rows_x, column(&obs.x[range.clone()]), "log_p_x")?;
        let log_p = term(
            &a.phi_p,
            &rows_p,
            g.constant(Tensor::from_parts(vec![len, self.d_p], tgt_p)),
            "log_p_p",
        )?;
        let log_y = term(&a.phi_y, &rows_y, column(&obs.y[range]), "log_p_y")?;
        Ok(GenTerms {
            log_x,
            log_p,
            log_y,
            h_z,
        })
    }

    /// Combined reverse-GRU context `phi(g^x_t, g^p_t, g^y_t)` per window
    /// index. `order` only changes the order in which the three recurrences
    /// are placed on the tape.
    pub(crate) fn context<'t>(
        &self,
        g: &Graph<'t>,
        obs: &Observations,
        range: Range<usize>,
        order: [super::Stream; 3],
    ) -> Result<Vec<Var<'t>>, TcvaeError> {
        use super::Stream;
        let a = &self.arch;
        let mut states: [Option<Vec<Var<'t>>>; 3] = [None, None, None];
        for s in order {
            let (gru, inputs): (&Gru, Vec<Var<'t>>) = match s {
                Stream::X => (&a.rev_x, obs.x[range.clone()].iter().map(|&v| g.vector(vec![v])).collect()),
                Stream::P => (&a.rev_p, obs.p[range.clone()].iter().map(|v| g.vector(v.clone())).collect()),
                Stream::Y => (&a.rev_y, obs.y[range.clone()].iter().map(|&v| g.vector(vec![v])).collect()),
            };
            let out = gru.run(g, &inputs, gru.zero_state(g), crate::neural::Direction::Reverse)?;
            states[s as usize] = Some(out);
        }
        let [Some(gx), Some(gp), Some(gy)] = states else {
            return Err(TcvaeError::Config("every reverse stream must be evaluated once".into()));
        };
        (0..range.len())
            .map(|i| Ok(a.combiner.forward(g, concat(&[gx[i], gp[i], gy[i]])?)?))
            .collect()
    }

    /// Posterior mean and scale of `z_t` given `z_{t-1}` and the context.
    pub(crate) fn posterior_step<'t>(
        &self,
        g: &Graph<'t>,
        z_prev: Var<'t>,
        context: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>), TcvaeError> {
        Ok(self.arch.phi_z.forward(g, concat(&[z_prev, context])?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TcvaeError> {
        let meta = serde_json::json!({
            "kind": "tcvae",
            "config": self.config,
            "d_p": self.d_p,
            "standardizer": self.standardizer,
            "epochs_done": self.epochs_done,
        });
        Checkpoint::from_store(&self.store, meta).save(path, Format::from_path(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TcvaeError> {
        let ck = Checkpoint::load(path)?;
        Self::from_checkpoint(&ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TcvaeError> {
        if ck.meta.get("kind").and_then(|v| v.as_str()) != Some("tcvae") {
            return Err(TcvaeError::Data("checkpoint does not hold a tcvae model".into()));
        }
        let field = |name: &str| {
            ck.meta
                .get(name)
                .cloned()
                .ok_or_else(|| TcvaeError::Data(format!("checkpoint metadata lacks {name}")))
        };
        let config: TcvaeConfig = serde_json::from_value(field("config")?)?;
        let d_p: usize = serde_json::from_value(field("d_p")?)?;
        let standardizer: Standardizer = serde_json::from_value(field("standardizer")?)?;
        let mut model = Self::new(config, d_p, standardizer)?;
        model.epochs_done = match ck.meta.get("epochs_done") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => 0,
        };
        ck.apply(&mut model.store)?;
        Ok(model)
    }
}

pub(crate) fn finite<'t>(v: Var<'t>, term: &'static str) -> Result<Var<'t>, TcvaeError> {
    let value = v.item();
    if value.is_finite() {
        Ok(v)
    } else {
        Err(TcvaeError::NonFinite { term, value })
    }
}
