use rand::Rng;

use super::{uniform_matrix, NeuralError};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, TensorError, Var};

/// Lower bound added to every predicted standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply<'t>(self, v: Var<'t>) -> Var<'t> {
        match self {
            Activation::Identity => v,
            Activation::Tanh => v.tanh(),
        }
    }
}

/// Affine map `W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_size: usize,
    pub out_size: usize,
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_size: usize,
        out_size: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.insert(format!("{prefix}/W"), uniform_matrix(rng, out_size, in_size));
        let b = store.insert(format!("{prefix}/b"), Tensor::zeros(&[out_size]));
        Self {
            in_size,
            out_size,
            w,
            b,
        }
    }

    /// Accepts a single input `(in,)` or a batch `(n, in)`.
    pub fn forward<'t>(&self, g: &Graph<'t>, x: Var<'t>) -> Result<Var<'t>, NeuralError> {
        let shape = x.shape();
        let width = *shape.last().unwrap_or(&0);
        if width != self.in_size || shape.len() > 2 {
            return Err(NeuralError::Dimension {
                what: "linear input",
                expected: self.in_size,
                got: width,
            });
        }
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = if shape.len() == 1 {
            w.matmul(x)?
        } else {
            x.matmul(w.transpose()?)?
        };
        Ok(y.add(b)?)
    }
}

/// Fully connected network with tanh hidden layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub output_activation: Activation,
}

impl Mlp {
    /// `sizes` lists every layer width including input and output.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        sizes: &[usize],
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{prefix}/layer{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            output_activation,
        }
    }

    pub fn in_size(&self) -> usize {
        self.layers[0].in_size
    }

    pub fn out_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_size)
    }

    pub fn forward<'t>(&self, g: &Graph<'t>, x: Var<'t>) -> Result<Var<'t>, NeuralError> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h)?;
            h = if i == last {
                self.output_activation.apply(h)
            } else {
                h.tanh()
            };
        }
        Ok(h)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.w, l.b]).collect()
    }
}

/// Maps an input to the mean and standard deviation of a diagonal Gaussian.
/// The trunk is a tanh network; `sigma = softplus(pre) + SIGMA_FLOOR`.
#[derive(Debug, Clone)]
pub struct GaussianHead {
    pub trunk: Option<Mlp>,
    pub mu: Linear,
    pub sigma: Linear,
}

impl GaussianHead {
    /// `hidden` lists trunk widths; empty means the heads read the input directly.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_size: usize,
        hidden: &[usize],
        out_size: usize,
        rng: &mut R,
    ) -> Self {
        let (trunk, feat) = if hidden.is_empty() {
            (None, in_size)
        } else {
            let mut sizes = vec![in_size];
            sizes.extend_from_slice(hidden);
            let trunk = Mlp::new(store, prefix, &sizes, Activation::Tanh, rng);
            (Some(trunk), *hidden.last().unwrap())
        };
        let mu = Linear::new(store, &format!("{prefix}/mu"), feat, out_size, rng);
        let sigma = Linear::new(store, &format!("{prefix}/sigma"), feat, out_size, rng);
        Self { trunk, mu, sigma }
    }

    pub fn in_size(&self) -> usize {
        self.trunk.as_ref().map_or(self.mu.in_size, Mlp::in_size)
    }

    pub fn out_size(&self) -> usize {
        self.mu.out_size
    }

    pub fn forward<'t>(
        &self,
        g: &Graph<'t>,
        x: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>), NeuralError> {
        let h = match &self.trunk {
            Some(t) => t.forward(g, x)?,
            None => x,
        };
        let mu = self.mu.forward(g, h)?;
        let sigma = self.sigma.forward(g, h)?.softplus().add_scalar(SIGMA_FLOOR);
        Ok((mu, sigma))
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.trunk.as_ref().map(Mlp::ids).unwrap_or_default();
        ids.extend([self.mu.w, self.mu.b, self.sigma.w, self.sigma.b]);
        ids
    }
}

/// Sum of independent normal log densities `log N(x; mu, sigma^2)`.
pub fn diag_gaussian_logpdf<'t>(
    x: Var<'t>,
    mu: Var<'t>,
    sigma: Var<'t>,
) -> Result<Var<'t>, TensorError> {
    let n = x.shape().iter().product::<usize>() as f64;
    let z = x.sub(mu)?.div(sigma)?;
    let quad = z.square().sum().scale(-0.5);
    let logdet = sigma.ln().sum();
    Ok(quad
        .sub(logdet)?
        .add_scalar(-0.5 * n * (2.0 * std::f64::consts::PI).ln()))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::{check_gradient, Tape};

    fn err_map(e: NeuralError) -> TensorError {
        match e {
            NeuralError::Tensor(t) => t,
            other => panic!("{other}"),
        }
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let build = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            Mlp::new(&mut store, "m", &[4, 9, 2], Activation::Identity, &mut rng);
            store
        };
        let a = build(3);
        assert_eq!(a, build(3));
        assert_ne!(a, build(4));
        let w0 = a.get(a.id("m/layer0/W").unwrap());
        assert_eq!(w0.shape(), &[9, 4]);
        assert!(w0.data().iter().all(|v| v.abs() <= 0.5));
        let w1 = a.get(a.id("m/layer1/W").unwrap());
        assert!(w1.data().iter().all(|v| v.abs() <= 1.0 / 3.0));
        assert!(a.get(a.id("m/layer1/b").unwrap()).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_matches_single_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[3, 5, 2], Activation::Tanh, &mut rng);
        let tape = Tape::new();
        let g = Graph::new(&tape, &store);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let flat: Vec<f64> = rows.concat();
        let batch = mlp
            .forward(&g, g.constant(Tensor::matrix(4, 3, flat).unwrap()))
            .unwrap()
            .to_vec();
        for (i, r) in rows.iter().enumerate() {
            let single = mlp.forward(&g, g.vector(r.clone())).unwrap().to_vec();
            for j in 0..2 {
                assert!((single[j] - batch[i * 2 + j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn head_sigma_respects_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let head = GaussianHead::new(&mut store, "h", 2, &[4], 3, &mut rng);
        store.get_mut(head.sigma.b).data_mut().fill(-800.0);
        let tape = Tape::new();
        let g = Graph::new(&tape, &store);
        let (mu, sigma) = head.forward(&g, g.vector(vec![0.3, -0.1])).unwrap();
        assert_eq!(mu.shape(), vec![3]);
        for s in sigma.to_vec() {
            assert!(s >= SIGMA_FLOOR);
            assert!((s - SIGMA_FLOOR).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trunk_exposes_output_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let head = GaussianHead::new(&mut store, "h", 2, &[4], 2, &mut rng);
        let trunk = head.trunk.as_ref().unwrap();
        for id in trunk.ids() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        store.get_mut(head.mu.b).data_mut().copy_from_slice(&[0.3, -1.2]);
        store.get_mut(head.sigma.b).data_mut().copy_from_slice(&[0.0, -50.0]);
        let tape = Tape::new();
        let g = Graph::new(&tape, &store);
        let (mu, sigma) = head.forward(&g, g.vector(vec![5.0, -2.0])).unwrap();
        assert_eq!(mu.to_vec(), vec![0.3, -1.2]);
        let s = sigma.to_vec();
        assert!((s[0] - (2f64.ln() + SIGMA_FLOOR)).abs() < 1e-15);
        assert!((s[1] - SIGMA_FLOOR).abs() < 1e-20);
        assert!(store.id("h/layer0/W").is_some() && store.id("h/mu/W").is_some());
    }

    #[test]
    fn wrong_width_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", 3, 2, &mut rng);
        let tape = Tape::new();
        let g = Graph::new(&tape, &store);
        assert!(matches!(
            lin.forward(&g, g.vector(vec![1.0, 2.0])),
            Err(NeuralError::Dimension { expected: 3, got: 2, .. })
        ));
    }

    #[test]
    fn gaussian_logpdf_matches_closed_form() {
        let tape = Tape::new();
        let x = tape.vector(vec![0.5, -1.0]);
        let mu = tape.vector(vec![0.0, 1.0]);
        let s = tape.vector(vec![1.0, 2.0]);
        let v = diag_gaussian_logpdf(x, mu, s).unwrap().item();
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let expected = -0.5 * ln2pi - 0.125 + (-0.5 * ln2pi - 2f64.ln() - 0.5);
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn head_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let head = GaussianHead::new(&mut store, "h", 3, &[5], 2, &mut rng);
        for id in [head.mu.b, head.sigma.b] {
            for v in store.get_mut(id).data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let err = check_gradient(&store, 1e-5, |g| {
            let (mu, sigma) = head.forward(g, g.vector(vec![0.2, -0.7, 1.1])).map_err(err_map)?;
            diag_gaussian_logpdf(g.vector(vec![0.4, -0.3]), mu, sigma)
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }
}
