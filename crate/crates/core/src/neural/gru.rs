use rand::Rng;

use super::{uniform_matrix, NeuralError};
use crate::tensor::{gru_cell, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Gated recurrent unit with the reset gate applied inside the candidate:
///
/// ```text
/// r  = σ(W_r x + U_r h + b_r)
/// u  = σ(W_z x + U_z h + b_z)
/// h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 - u) ⊙ h + u ⊙ h̃
/// ```
#[derive(Debug, Clone)]
pub struct Gru {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_r: ParamId,
    pub w_z: ParamId,
    pub w_h: ParamId,
    pub u_r: ParamId,
    pub u_z: ParamId,
    pub u_h: ParamId,
    pub b_r: ParamId,
    pub b_z: ParamId,
    pub b_h: ParamId,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |name: &str, fan_in: usize, rng: &mut R| {
            store.insert(
                format!("{prefix}/{name}"),
                uniform_matrix(rng, hidden_size, fan_in),
            )
        };
        let w_r = w("W_r", input_size, rng);
        let w_z = w("W_z", input_size, rng);
        let w_h = w("W_h", input_size, rng);
        let u_r = w("U_r", hidden_size, rng);
        let u_z = w("U_z", hidden_size, rng);
        let u_h = w("U_h", hidden_size, rng);
        let b_r = store.insert(format!("{prefix}/b_r"), Tensor::zeros(&[hidden_size]));
        let b_z = store.insert(format!("{prefix}/b_z"), Tensor::zeros(&[hidden_size]));
        let b_h = store.insert(format!("{prefix}/b_h"), Tensor::zeros(&[hidden_size]));
        Self {
            input_size,
            hidden_size,
            w_r,
            w_z,
            w_h,
            u_r,
            u_z,
            u_h,
            b_r,
            b_z,
            b_h,
        }
    }

    pub fn ids(&self) -> [ParamId; 9] {
        [
            self.w_r, self.w_z, self.w_h, self.u_r, self.u_z, self.u_h, self.b_r, self.b_z,
            self.b_h,
        ]
    }

    pub fn zero_state<'t>(&self, g: &Graph<'t>) -> Var<'t> {
        g.constant(Tensor::zeros(&[self.hidden_size]))
    }

    pub fn step<'t>(&self, g: &Graph<'t>, x: Var<'t>, h: Var<'t>) -> Result<Var<'t>, NeuralError> {
        let xs = x.shape();
        if xs != [self.input_size] {
            return Err(NeuralError::Dimension {
                what: "gru input",
                expected: self.input_size,
                got: xs.iter().product(),
            });
        }
        let hs = h.shape();
        if hs != [self.hidden_size] {
            return Err(NeuralError::Dimension {
                what: "gru hidden state",
                expected: self.hidden_size,
                got: hs.iter().product(),
            });
        }
        let p = |id| g.param(id);
        let w = [
            self.w_r, self.w_z, self.w_h, self.u_r, self.u_z, self.u_h, self.b_r, self.b_z, self.b_h,
        ];
        Ok(gru_cell(x, h, w.map(p))?)
    }

    /// The same update spelled out with primitive ops.
    #[cfg(test)]
    pub(crate) fn step_composed<'t>(
        &self,
        g: &Graph<'t>,
        x: Var<'t>,
        h: Var<'t>,
    ) -> Result<Var<'t>, NeuralError> {
        let p = |id| g.param(id);
        let r = p(self.w_r)
            .matmul(x)?
            .add(p(self.u_r).matmul(h)?)?
            .add(p(self.b_r))?
            .sigmoid();
        let u = p(self.w_z)
            .matmul(x)?
            .add(p(self.u_z).matmul(h)?)?
            .add(p(self.b_z))?
            .sigmoid();
        let cand = p(self.w_h)
            .matmul(x)?
            .add(p(self.u_h).matmul(r.mul(h)?)?)?
            .add(p(self.b_h))?
            .tanh();
        // h + u ⊙ (h̃ - h)
        Ok(h.add(u.mul(cand.sub(h)?)?)?)
    }

    /// Runs the cell over `inputs`. Outputs are aligned with input indices:
    /// forward `out[t]` has consumed `inputs[..=t]`, reverse `out[t]` has
    /// consumed `inputs[t..]`.
    pub fn run<'t>(
        &self,
        g: &Graph<'t>,
        inputs: &[Var<'t>],
        h0: Var<'t>,
        direction: Direction,
    ) -> Result<Vec<Var<'t>>, NeuralError> {
        if inputs.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let mut out = Vec::with_capacity(inputs.len());
        let mut h = h0;
        match direction {
            Direction::Forward => {
                for &x in inputs {
                    h = self.step(g, x, h)?;
                    out.push(h);
                }
            }
            Direction::Reverse => {
                for &x in inputs.iter().rev() {
                    h = self.step(g, x, h)?;
                    out.push(h);
                }
                out.reverse();
            }
        }
        Ok(out)
    }
}
