use super::TcvaeError;
use crate::tensor::{softplus_inverse, stack, Graph, ParamId, ParamStore, Tensor, Var};

/// Parameter handles of the learnable prior. Noise scales are stored raw and
/// mapped through softplus.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PriorIds {
    pub transition: ParamId,
    pub observation: ParamId,
    pub sigma_v_raw: ParamId,
    pub sigma_eps_raw: ParamId,
    pub dim: usize,
}

impl PriorIds {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        let mut t = Tensor::identity(dim);
        for v in t.data_mut() {
            *v *= 0.5;
        }
        let raw = Tensor::filled(&[dim], softplus_inverse(1.0));
        Self {
            transition: store.insert(format!("{prefix}/T"), t),
            observation: store.insert(format!("{prefix}/O"), Tensor::identity(dim)),
            sigma_v_raw: store.insert(format!("{prefix}/sigma_v_raw"), raw.clone()),
            sigma_eps_raw: store.insert(format!("{prefix}/sigma_eps_raw"), raw),
            dim,
        }
    }

    pub fn vars<'t>(&self, g: &Graph<'t>) -> PriorVars<'t> {
        PriorVars {
            transition: g.param(self.transition),
            observation: g.param(self.observation),
            sigma_v: g.param(self.sigma_v_raw).softplus(),
            sigma_eps: g.param(self.sigma_eps_raw).softplus(),
        }
    }

    pub fn snapshot(&self, store: &ParamStore) -> PriorParams {
        let sp = |id| {
            store
                .get(id)
                .data()
                .iter()
                .map(|&v| crate::tensor::softplus(v))
                .collect()
        };
        PriorParams {
            dim: self.dim,
            transition: store.get(self.transition).data().to_vec(),
            observation: store.get(self.observation).data().to_vec(),
            sigma_v: sp(self.sigma_v_raw),
            sigma_eps: sp(self.sigma_eps_raw),
        }
    }
}

/// Linear Gaussian state-space prior in plain values. Matrices are row-major
/// `dim x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    pub dim: usize,
    pub transition: Vec<f64>,
    pub observation: Vec<f64>,
    pub sigma_v: Vec<f64>,
    pub sigma_eps: Vec<f64>,
}

impl PriorParams {
    pub fn new(
        dim: usize,
        transition: Vec<f64>,
        observation: Vec<f64>,
        sigma_v: Vec<f64>,
        sigma_eps: Vec<f64>,
    ) -> Result<Self, TcvaeError> {
        if dim == 0 {
            return Err(TcvaeError::Config("latent dimension must be positive".into()));
        }
        if transition.len() != dim * dim || observation.len() != dim * dim {
            return Err(TcvaeError::Config(format!("prior matrices must be {dim}x{dim}")));
        }
        if sigma_v.len() != dim || sigma_eps.len() != dim {
            return Err(TcvaeError::Config(format!("prior noise scales must have length {dim}")));
        }
        if sigma_v.iter().chain(&sigma_eps).any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(TcvaeError::Config("prior noise scales must be positive".into()));
        }
        Ok(Self {
            dim,
            transition,
            observation,
            sigma_v,
            sigma_eps,
        })
    }

    pub fn vars<'t>(&self, g: &Graph<'t>) -> PriorVars<'t> {
        let d = self.dim;
        let m = |v: &[f64]| g.constant(Tensor::from_parts(vec![d, d], v.to_vec()));
        PriorVars {
            transition: m(&self.transition),
            observation: m(&self.observation),
            sigma_v: g.vector(self.sigma_v.clone()),
            sigma_eps: g.vector(self.sigma_eps.clone()),
        }
    }

    /// Log-density of a path (`z_path[t]` has length `dim`) started from
    /// `z_0 = 0`.
    pub fn logpdf(&self, z_path: &[Vec<f64>]) -> Result<f64, TcvaeError> {
        let store = ParamStore::new();
        let tape = crate::tensor::Tape::new();
        let g = Graph::new(&tape, &store);
        let vars = self.vars(&g);
        let mut path = Vec::with_capacity(z_path.len());
        for z in z_path {
            if z.len() != self.dim {
                return Err(TcvaeError::Data(format!(
                    "latent vector of length {} for prior of dimension {}",
                    z.len(),
                    self.dim
                )));
            }
            path.push(g.vector(z.clone()));
        }
        let z0 = g.constant(Tensor::zeros(&[self.dim]));
        Ok(vars.logpdf(z0, &path)?.item())
    }
}

/// Prior quantities placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct PriorVars<'t> {
    pub transition: Var<'t>,
    pub observation: Var<'t>,
    pub sigma_v: Var<'t>,
    pub sigma_eps: Var<'t>,
}

impl<'t> PriorVars<'t> {
    /// `O diag(sigma_v^2) O^T + diag(sigma_eps^2)`.
    pub fn covariance(&self) -> Result<Var<'t>, TcvaeError> {
        let o = self.observation;
        let scaled = o.mul(self.sigma_v.square())?;
        Ok(scaled
            .matmul(o.transpose()?)?
            .add(self.sigma_eps.square().diag()?)?)
    }

    /// `sum_t log N(z_t; O T z_{t-1}, Sigma)` with `z_prev` standing in for
    /// the state before the first element of `z_path`.
    pub fn logpdf(&self, z_prev: Var<'t>, z_path: &[Var<'t>]) -> Result<Var<'t>, TcvaeError> {
        if z_path.is_empty() {
            return Err(TcvaeError::Data("empty latent path".into()));
        }
        let mut prev = Vec::with_capacity(z_path.len());
        prev.push(z_prev);
        prev.extend_from_slice(&z_path[..z_path.len() - 1]);
        let a = self.observation.matmul(self.transition)?;
        let mean = stack(&prev)?.matmul(a.transpose()?)?;
        let resid = stack(z_path)?.sub(mean)?;
        let out = resid.mvn_logpdf(self.covariance()?)?;
        let v = out.item();
        if !v.is_finite() {
            return Err(TcvaeError::NonFinite {
                term: "log_prior",
                value: v,
            });
        }
        Ok(out)
    }
}
