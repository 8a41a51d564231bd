use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{finite, Observations, TcvaeModel};
use super::TcvaeError;
use crate::neural::diag_gaussian_logpdf;
use crate::tensor::{stack, Graph, Var};

/// The three observed streams read by the reverse recurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    X = 0,
    P = 1,
    Y = 2,
}

pub(crate) const DEFAULT_ORDER: [Stream; 3] = [Stream::X, Stream::P, Stream::Y];

/// Detached state handed from one window to the next: latent and cause GRU
/// states after the head index and the latent sample drawn there.
#[derive(Debug, Clone, PartialEq)]
pub struct Carry {
    pub h_z: Vec<f64>,
    pub h_x: Vec<f64>,
    pub z: Vec<f64>,
}

/// Standard-normal draws `xi[sample][t][coordinate]`, fixed ahead of a pass
/// so the reparameterized path is a deterministic function of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraws {
    pub xi: Vec<Vec<Vec<f64>>>,
}

impl NoiseDraws {
    pub fn standard<R: Rng + ?Sized>(rng: &mut R, samples: usize, len: usize, dim: usize) -> Self {
        let xi = (0..samples)
            .map(|_| {
                (0..len)
                    .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
                    .collect()
            })
            .collect();
        Self { xi }
    }

    pub fn samples(&self) -> usize {
        self.xi.len()
    }
}

/// One ancestral draw from a Markov Gaussian posterior.
#[derive(Debug, Clone)]
pub struct PosteriorSample<'t> {
    pub z: Vec<Var<'t>>,
    pub mu: Vec<Var<'t>>,
    pub sigma: Vec<Var<'t>>,
    /// `log q` of the whole path.
    pub log_q: Var<'t>,
}

/// Samples `z_t = mu_t + sigma_t * xi_t` for `t < len`, where
/// `(mu_t, sigma_t) = step(t, z_{t-1})` and `z_{-1} = z0`. Without noise the
/// path follows the conditional means. Values may have any 1-d shape, which
/// lets a batch of independent chains share one pass.
pub fn sample_posterior<'t, F>(
    z0: Var<'t>,
    xi: Option<&[Vec<f64>]>,
    len: usize,
    mut step: F,
) -> Result<PosteriorSample<'t>, TcvaeError>
where
    F: FnMut(usize, Var<'t>) -> Result<(Var<'t>, Var<'t>), TcvaeError>,
{
    if len == 0 {
        return Err(TcvaeError::Data("empty posterior path".into()));
    }
    if let Some(xi) = xi {
        if xi.len() != len {
            return Err(TcvaeError::Data(format!(
                "{} noise vectors for a path of length {len}",
                xi.len()
            )));
        }
    }
    let tape = z0.tape();
    let mut z = Vec::with_capacity(len);
    let mut mus = Vec::with_capacity(len);
    let mut sigmas = Vec::with_capacity(len);
    let mut prev = z0;
    for t in 0..len {
        let (mu, sigma) = step(t, prev)?;
        if mu.shape() != sigma.shape() || mu.shape() != prev.shape() {
            return Err(TcvaeError::Data(format!(
                "posterior step returned shapes {:?}/{:?} for state {:?}",
                mu.shape(),
                sigma.shape(),
                prev.shape()
            )));
        }
        let zt = match xi {
            Some(xi) => {
                if xi[t].len() != mu.to_vec().len() {
                    return Err(TcvaeError::Data("noise vector has the wrong length".into()));
                }
                mu.add(sigma.mul(tape.vector(xi[t].clone()))?)?
            }
            None => mu,
        };
        z.push(zt);
        mus.push(mu);
        sigmas.push(sigma);
        prev = zt;
    }
    let log_q = diag_gaussian_logpdf(stack(&z)?, stack(&mus)?, stack(&sigmas)?)?;
    Ok(PosteriorSample {
        z,
        mu: mus,
        sigma: sigmas,
        log_q: finite(log_q, "log_q")?,
    })
}

/// Monte-Carlo ELBO `(1/L) sum_l [log p(obs, z^l) - log q(z^l)]` from the
/// summed joint and posterior log-densities of `n_samples` draws.
pub fn mc_elbo<'t>(
    log_joint: Var<'t>,
    log_q: Var<'t>,
    n_samples: usize,
) -> Result<Var<'t>, TcvaeError> {
    if n_samples == 0 {
        return Err(TcvaeError::Config("at least one sample is required".into()));
    }
    Ok(log_joint.sub(log_q)?.scale(1.0 / n_samples as f64))
}

/// Per-sample averages of the ELBO pieces.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElboTerms {
    pub elbo: f64,
    pub log_x: f64,
    pub log_p: f64,
    pub log_y: f64,
    pub log_prior: f64,
    pub log_q: f64,
}

impl ElboTerms {
    /// Single-path estimate of `KL(q || prior)`.
    pub fn kl(&self) -> f64 {
        self.log_q - self.log_prior
    }
}

impl TcvaeModel {
    /// ELBO of the window `range`, one posterior draw per entry of `noise`.
    /// Returns the tape scalar, its parts and the carry exported by the
    /// first draw at the window head.
    pub fn elbo<'t>(
        &self,
        g: &Graph<'t>,
        obs: &Observations,
        range: Range<usize>,
        carry: &Carry,
        noise: &NoiseDraws,
    ) -> Result<(Var<'t>, ElboTerms, Carry), TcvaeError> {
        self.elbo_with_order(g, obs, range, carry, noise, DEFAULT_ORDER)
    }

    pub(crate) fn elbo_with_order<'t>(
        &self,
        g: &Graph<'t>,
        obs: &Observations,
        range: Range<usize>,
        carry: &Carry,
        noise: &NoiseDraws,
        order: [Stream; 3],
    ) -> Result<(Var<'t>, ElboTerms, Carry), TcvaeError> {
        obs.check_range(&range)?;
        let n = noise.samples();
        if n == 0 {
            return Err(TcvaeError::Config("at least one sample is required".into()));
        }
        self.check_carry(carry)?;
        let context = self.context(g, obs, range.clone(), order)?;
        let h_x = self.cause_states(g, obs, range.clone(), &carry.h_x)?;
        let prior = self.prior_vars(g);
        let z0 = g.vector(carry.z.clone());
        let mut joint = None::<Var<'t>>;
        let mut logq = None::<Var<'t>>;
        let mut terms = ElboTerms::default();
        let mut out_carry = None;
        for xi in &noise.xi {
            let post = sample_posterior(z0, Some(xi), range.len(), |i, zp| {
                self.posterior_step(g, zp, context[i])
            })?;
            let gen = self.generate_with_cause(g, obs, range.clone(), &post.z, carry, &h_x)?;
            let lp = prior.logpdf(z0, &post.z)?;
            let j = gen.log_y.add(gen.log_x)?.add(gen.log_p)?.add(lp)?;
            terms.log_x += gen.log_x.item();
            terms.log_p += gen.log_p.item();
            terms.log_y += gen.log_y.item();
            terms.log_prior += lp.item();
            terms.log_q += post.log_q.item();
            if out_carry.is_none() {
                out_carry = Some(Carry {
                    h_z: gen.h_z[0].to_vec(),
                    h_x: h_x[0].to_vec(),
                    z: post.z[0].to_vec(),
                });
            }
            joint = Some(match joint {
                Some(a) => a.add(j)?,
                None => j,
            });
            logq = Some(match logq {
                Some(a) => a.add(post.log_q)?,
                None => post.log_q,
            });
        }
        let (Some(joint), Some(logq), Some(out_carry)) = (joint, logq, out_carry) else {
            unreachable!("at least one sample was drawn");
        };
        let elbo = finite(mc_elbo(joint, logq, n)?, "elbo")?;
        let k = n as f64;
        terms.log_x /= k;
        terms.log_p /= k;
        terms.log_y /= k;
        terms.log_prior /= k;
        terms.log_q /= k;
        terms.elbo = elbo.item();
        Ok((elbo, terms, out_carry))
    }

    fn check_carry(&self, c: &Carry) -> Result<(), TcvaeError> {
        let h = self.config.gru_hidden;
        if c.h_z.len() != h || c.h_x.len() != h || c.z.len() != self.config.d_z {
            return Err(TcvaeError::Data("carry state has the wrong dimensions".into()));
        }
        Ok(())
    }
}
