use nalgebra::DMatrix;

use super::tape::Node;
use super::{ParamId, Tensor, TensorError, Var};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Unary {
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Square,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

/// How the two operands of a binary op line up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Bcast {
    Same,
    ScalarLhs,
    ScalarRhs,
    /// lhs is `(n,)`, rhs is `(m, n)`.
    RowLhs,
    /// rhs is `(n,)`, lhs is `(m, n)`.
    RowRhs,
}

pub(crate) enum Op {
    Leaf {
        param: Option<ParamId>,
    },
    MatMul(usize, usize),
    Transpose(usize),
    Binary {
        kind: Binary,
        a: usize,
        b: usize,
        bcast: Bcast,
    },
    Scale(usize, f64),
    AddScalar(usize),
    Unary(Unary, usize),
    Concat(Vec<usize>),
    Stack(Vec<usize>),
    Slice {
        a: usize,
        start: usize,
    },
    Reshape(usize),
    Diag(usize),
    Sum(usize),
    Mean(usize),
    MvnLogPdf {
        resid: usize,
        cov: usize,
        cov_inv: Vec<f64>,
        resid_inv: Vec<f64>,
    },
    GruCell {
        x: usize,
        h: usize,
        weights: [usize; 9],
        cache: Box<super::fused::GruCache>,
    },
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y + (-(-y).exp_m1()).ln()
    }
}

/// `(rows, cols)` view of a rank-1 or rank-2 shape. Vectors are columns when
/// `as_column`, rows otherwise.
fn mat_dims(shape: &[usize], as_column: bool) -> Option<(usize, usize)> {
    match shape {
        [n] if as_column => Some((*n, 1)),
        [n] => Some((1, *n)),
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `G (m,n) · Bᵀ` where `B` is `(k, n)`.
fn gemm_nt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `Aᵀ · G` where `A` is `(m, k)` and `G` is `(m, n)`.
fn gemm_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

fn bcast_kind(op: &'static str, a: &[usize], b: &[usize]) -> Result<Bcast, TensorError> {
    let a_scalar = a.iter().product::<usize>() == 1 && a.len() <= 1;
    let b_scalar = b.iter().product::<usize>() == 1 && b.len() <= 1;
    if a == b {
        Ok(Bcast::Same)
    } else if a_scalar {
        Ok(Bcast::ScalarLhs)
    } else if b_scalar {
        Ok(Bcast::ScalarRhs)
    } else if a.len() == 1 && b.len() == 2 && a[0] == b[1] {
        Ok(Bcast::RowLhs)
    } else if b.len() == 1 && a.len() == 2 && b[0] == a[1] {
        Ok(Bcast::RowRhs)
    } else {
        Err(TensorError::Shape {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
    }
}

fn binary_name(kind: Binary) -> &'static str {
    match kind {
        Binary::Add => "add",
        Binary::Sub => "sub",
        Binary::Mul => "mul",
        Binary::Div => "div",
    }
}

fn apply_binary(kind: Binary, x: f64, y: f64) -> f64 {
    match kind {
        Binary::Add => x + y,
        Binary::Sub => x - y,
        Binary::Mul => x * y,
        Binary::Div => x / y,
    }
}

impl<'t> Var<'t> {
    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    fn unary(self, kind: Unary) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let n = &nodes[self.id];
            let f: fn(f64) -> f64 = match kind {
                Unary::Tanh => f64::tanh,
                Unary::Sigmoid => sigmoid,
                Unary::Softplus => softplus,
                Unary::Exp => f64::exp,
                Unary::Log => f64::ln,
                Unary::Square => |v| v * v,
                Unary::Sqrt => f64::sqrt,
            };
            (n.value.map(f), n.requires_grad)
        };
        self.tape.push(value, Op::Unary(kind, self.id), rg)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Unary::Tanh)
    }
    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Unary::Sigmoid)
    }
    pub fn softplus(self) -> Var<'t> {
        self.unary(Unary::Softplus)
    }
    pub fn exp(self) -> Var<'t> {
        self.unary(Unary::Exp)
    }
    pub fn ln(self) -> Var<'t> {
        self.unary(Unary::Log)
    }
    pub fn square(self) -> Var<'t> {
        self.unary(Unary::Square)
    }
    pub fn sqrt(self) -> Var<'t> {
        self.unary(Unary::Sqrt)
    }

    fn binary(self, kind: Binary, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&rhs);
        let (value, bcast, rg) = {
            let nodes = self.tape.nodes();
            let a = &nodes[self.id];
            let b = &nodes[rhs.id];
            let bcast = bcast_kind(binary_name(kind), a.value.shape(), b.value.shape())?;
            let (ad, bd) = (a.value.data(), b.value.data());
            let value = match bcast {
                Bcast::Same => Tensor::from_parts(
                    a.value.shape().to_vec(),
                    ad.iter().zip(bd).map(|(&x, &y)| apply_binary(kind, x, y)).collect(),
                ),
                Bcast::ScalarLhs => {
                    let x = ad[0];
                    b.value.map(|y| apply_binary(kind, x, y))
                }
                Bcast::ScalarRhs => {
                    let y = bd[0];
                    a.value.map(|x| apply_binary(kind, x, y))
                }
                Bcast::RowLhs => {
                    let n = ad.len();
                    Tensor::from_parts(
                        b.value.shape().to_vec(),
                        bd.iter()
                            .enumerate()
                            .map(|(i, &y)| apply_binary(kind, ad[i % n], y))
                            .collect(),
                    )
                }
                Bcast::RowRhs => {
                    let n = bd.len();
                    Tensor::from_parts(
                        a.value.shape().to_vec(),
                        ad.iter()
                            .enumerate()
                            .map(|(i, &x)| apply_binary(kind, x, bd[i % n]))
                            .collect(),
                    )
                }
            };
            (value, bcast, a.requires_grad || b.requires_grad)
        };
        Ok(self.tape.push(
            value,
            Op::Binary {
                kind,
                a: self.id,
                b: rhs.id,
                bcast,
            },
            rg,
        ))
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.binary(Binary::Add, rhs)
    }
    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.binary(Binary::Sub, rhs)
    }
    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.binary(Binary::Mul, rhs)
    }
    pub fn div(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.binary(Binary::Div, rhs)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let n = &nodes[self.id];
            (n.value.map(|v| v * c), n.requires_grad)
        };
        self.tape.push(value, Op::Scale(self.id, c), rg)
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let n = &nodes[self.id];
            (n.value.map(|v| v + c), n.requires_grad)
        };
        self.tape.push(value, Op::AddScalar(self.id), rg)
    }

    /// Matrix product. Accepts `(m,k)·(k,n)`, `(m,k)·(k,)` and `(k,)·(k,n)`.
    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&rhs);
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let a = &nodes[self.id];
            let b = &nodes[rhs.id];
            let err = || TensorError::Shape {
                op: "matmul",
                lhs: a.value.shape().to_vec(),
                rhs: b.value.shape().to_vec(),
            };
            let (sa, sb) = (a.value.shape(), b.value.shape());
            if sa.len() == 1 && sb.len() == 1 {
                return Err(err());
            }
            let (m, k) = mat_dims(sa, false).ok_or_else(err)?;
            let (k2, n) = mat_dims(sb, true).ok_or_else(err)?;
            if k != k2 {
                return Err(err());
            }
            let data = gemm(a.value.data(), b.value.data(), m, k, n);
            let shape = match (sa.len(), sb.len()) {
                (2, 2) => vec![m, n],
                (2, 1) => vec![m],
                _ => vec![n],
            };
            (
                Tensor::from_parts(shape, data),
                a.requires_grad || b.requires_grad,
            )
        };
        Ok(self.tape.push(value, Op::MatMul(self.id, rhs.id), rg))
    }

    pub fn transpose(self) -> Result<Var<'t>, TensorError> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let a = &nodes[self.id];
            let &[r, c] = a.value.shape() else {
                return Err(TensorError::Shape {
                    op: "transpose",
                    lhs: a.value.shape().to_vec(),
                    rhs: vec![],
                });
            };
            let d = a.value.data();
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = d[i * c + j];
                }
            }
            (Tensor::from_parts(vec![c, r], out), a.requires_grad)
        };
        Ok(self.tape.push(value, Op::Transpose(self.id), rg))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(self) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let n = &nodes[self.id];
            (Tensor::scalar(n.value.data().iter().sum()), n.requires_grad)
        };
        self.tape.push(value, Op::Sum(self.id), rg)
    }

    pub fn mean(self) -> Var<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let n = &nodes[self.id];
            let d = n.value.data();
            (
                Tensor::scalar(d.iter().sum::<f64>() / d.len() as f64),
                n.requires_grad,
            )
        };
        self.tape.push(value, Op::Mean(self.id), rg)
    }

    /// Contiguous range `[start, start + len)` of a vector.
    pub fn slice(self, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let a = &nodes[self.id];
            let shape = a.value.shape();
            if shape.len() != 1 || len == 0 || start + len > shape[0] {
                return Err(TensorError::Shape {
                    op: "slice",
                    lhs: shape.to_vec(),
                    rhs: vec![start, len],
                });
            }
            (
                Tensor::from_parts(vec![len], a.value.data()[start..start + len].to_vec()),
                a.requires_grad,
            )
        };
        Ok(self.tape.push(value, Op::Slice { a: self.id, start }, rg))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, TensorError> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let a = &nodes[self.id];
            if shape.iter().product::<usize>() != a.value.len() {
                return Err(TensorError::Shape {
                    op: "reshape",
                    lhs: a.value.shape().to_vec(),
                    rhs: shape.to_vec(),
                });
            }
            (
                Tensor::from_parts(shape.to_vec(), a.value.data().to_vec()),
                a.requires_grad,
            )
        };
        Ok(self.tape.push(value, Op::Reshape(self.id), rg))
    }

    /// `(n,)` vector to `(n, n)` diagonal matrix.
    pub fn diag(self) -> Result<Var<'t>, TensorError> {
        let (value, rg) = {
            let nodes = self.tape.nodes();
            let a = &nodes[self.id];
            let &[n] = a.value.shape() else {
                return Err(TensorError::Shape {
                    op: "diag",
                    lhs: a.value.shape().to_vec(),
                    rhs: vec![],
                });
            };
            let mut out = vec![0.0; n * n];
            for (i, v) in a.value.data().iter().enumerate() {
                out[i * n + i] = *v;
            }
            (Tensor::from_parts(vec![n, n], out), a.requires_grad)
        };
        Ok(self.tape.push(value, Op::Diag(self.id), rg))
    }

    /// Joint Gaussian log-density of the rows of `self` (`(n, d)` or `(d,)`)
    /// as zero-mean residuals under a shared covariance `cov` `(d, d)`.
    pub fn mvn_logpdf(self, cov: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&cov);
        let (value, op, rg) = {
            let nodes = self.tape.nodes();
            let r = &nodes[self.id];
            let s = &nodes[cov.id];
            let err = || TensorError::Shape {
                op: "mvn_logpdf",
                lhs: r.value.shape().to_vec(),
                rhs: s.value.shape().to_vec(),
            };
            let (n, d) = mat_dims(r.value.shape(), false).ok_or_else(err)?;
            if s.value.shape() != [d, d] {
                return Err(err());
            }
            let sm = DMatrix::from_row_slice(d, d, s.value.data());
            let chol = sm.cholesky().ok_or_else(|| TensorError::Domain {
                op: "mvn_logpdf",
                msg: "covariance is not positive definite".into(),
            })?;
            let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let inv = chol.inverse();
            let rm = DMatrix::from_row_slice(n, d, r.value.data());
            let ri = &rm * &inv;
            let quad: f64 = ri.iter().zip(rm.iter()).map(|(a, b)| a * b).sum();
            let value = -0.5 * (n as f64 * d as f64 * LN_2PI + n as f64 * logdet + quad);
            let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
                let mut v = Vec::with_capacity(m.len());
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        v.push(m[(i, j)]);
                    }
                }
                v
            };
            (
                Tensor::scalar(value),
                Op::MvnLogPdf {
                    resid: self.id,
                    cov: cov.id,
                    cov_inv: row_major(&inv),
                    resid_inv: row_major(&ri),
                },
                r.requires_grad || s.requires_grad,
            )
        };
        Ok(self.tape.push(value, op, rg))
    }
}

/// Concatenate rank-0/1 values into one vector.
pub fn concat<'t>(parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
    let first = parts.first().ok_or(TensorError::Shape {
        op: "concat",
        lhs: vec![],
        rhs: vec![],
    })?;
    let tape = first.tape;
    let (value, rg) = {
        let nodes = tape.nodes();
        let mut data = Vec::new();
        let mut rg = false;
        for p in parts {
            first.same_tape(p);
            let n = &nodes[p.id];
            if n.value.rank() > 1 {
                return Err(TensorError::Shape {
                    op: "concat",
                    lhs: n.value.shape().to_vec(),
                    rhs: vec![],
                });
            }
            data.extend_from_slice(n.value.data());
            rg |= n.requires_grad;
        }
        (Tensor::vector(data), rg)
    };
    Ok(tape.push(value, Op::Concat(parts.iter().map(|p| p.id).collect()), rg))
}

/// Stack equal-length vectors as the rows of a matrix.
pub fn stack<'t>(rows: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
    let first = rows.first().ok_or(TensorError::Shape {
        op: "stack",
        lhs: vec![],
        rhs: vec![],
    })?;
    let tape = first.tape;
    let (value, rg) = {
        let nodes = tape.nodes();
        let shape0 = nodes[first.id].value.shape().to_vec();
        if shape0.len() != 1 {
            return Err(TensorError::Shape {
                op: "stack",
                lhs: shape0,
                rhs: vec![],
            });
        }
        let mut data = Vec::with_capacity(rows.len() * shape0[0]);
        let mut rg = false;
        for r in rows {
            first.same_tape(r);
            let n = &nodes[r.id];
            if n.value.shape() != shape0.as_slice() {
                return Err(TensorError::Shape {
                    op: "stack",
                    lhs: shape0,
                    rhs: n.value.shape().to_vec(),
                });
            }
            data.extend_from_slice(n.value.data());
            rg |= n.requires_grad;
        }
        (Tensor::from_parts(vec![rows.len(), shape0[0]], data), rg)
    };
    Ok(tape.push(value, Op::Stack(rows.iter().map(|r| r.id).collect()), rg))
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Fold a broadcast gradient back to the operand's shape.
fn reduce_to(g: &Tensor, target: &Tensor, bc_row: bool, bc_scalar: bool) -> Tensor {
    if bc_scalar {
        Tensor::from_parts(target.shape().to_vec(), vec![g.data().iter().sum()])
    } else if bc_row {
        let n = target.len();
        let mut out = vec![0.0; n];
        for (i, v) in g.data().iter().enumerate() {
            out[i % n] += v;
        }
        Tensor::from_parts(target.shape().to_vec(), out)
    } else {
        g.clone()
    }
}

pub(crate) fn backprop(
    op: &Op,
    node: &Node,
    g: &Tensor,
    nodes: &[Node],
    grads: &mut [Option<Tensor>],
) {
    match op {
        Op::Leaf { .. } => {}
        Op::GruCell {
            x,
            h,
            weights,
            cache,
        } => super::fused::gru_backward(*x, *h, weights, cache, g, nodes, |id, t| {
            accumulate(grads, nodes, id, t)
        }),
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = mat_dims(av.shape(), false).expect("checked in forward");
            let (_, n) = mat_dims(bv.shape(), true).expect("checked in forward");
            if nodes[*a].requires_grad {
                let da = gemm_nt(g.data(), bv.data(), m, k, n);
                accumulate(grads, nodes, *a, Tensor::from_parts(av.shape().to_vec(), da));
            }
            if nodes[*b].requires_grad {
                let db = gemm_tn(av.data(), g.data(), m, k, n);
                accumulate(grads, nodes, *b, Tensor::from_parts(bv.shape().to_vec(), db));
            }
        }
        Op::Transpose(a) => {
            let &[r, c] = nodes[*a].value.shape() else {
                unreachable!()
            };
            let gd = g.data();
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[i * c + j] = gd[j * r + i];
                }
            }
            accumulate(grads, nodes, *a, Tensor::from_parts(vec![r, c], out));
        }
        Op::Binary { kind, a, b, bcast } => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (ad, bd, gd) = (av.data(), bv.data(), g.data());
            let out_len = gd.len();
            let ai = |i: usize| match bcast {
                Bcast::ScalarLhs => ad[0],
                Bcast::RowLhs => ad[i % ad.len()],
                _ => ad[i],
            };
            let bi = |i: usize| match bcast {
                Bcast::ScalarRhs => bd[0],
                Bcast::RowRhs => bd[i % bd.len()],
                _ => bd[i],
            };
            let shape = node.value.shape().to_vec();
            if nodes[*a].requires_grad {
                let full: Vec<f64> = match kind {
                    Binary::Add | Binary::Sub => gd.to_vec(),
                    Binary::Mul => (0..out_len).map(|i| gd[i] * bi(i)).collect(),
                    Binary::Div => (0..out_len).map(|i| gd[i] / bi(i)).collect(),
                };
                let full = Tensor::from_parts(shape.clone(), full);
                let red = reduce_to(
                    &full,
                    av,
                    *bcast == Bcast::RowLhs,
                    *bcast == Bcast::ScalarLhs,
                );
                accumulate(grads, nodes, *a, red);
            }
            if nodes[*b].requires_grad {
                let full: Vec<f64> = match kind {
                    Binary::Add => gd.to_vec(),
                    Binary::Sub => gd.iter().map(|v| -v).collect(),
                    Binary::Mul => (0..out_len).map(|i| gd[i] * ai(i)).collect(),
                    Binary::Div => (0..out_len)
                        .map(|i| {
                            let y = bi(i);
                            -gd[i] * ai(i) / (y * y)
                        })
                        .collect(),
                };
                let full = Tensor::from_parts(shape, full);
                let red = reduce_to(
                    &full,
                    bv,
                    *bcast == Bcast::RowRhs,
                    *bcast == Bcast::ScalarRhs,
                );
                accumulate(grads, nodes, *b, red);
            }
        }
        Op::Scale(a, c) => accumulate(grads, nodes, *a, g.map(|v| v * c)),
        Op::AddScalar(a) => accumulate(grads, nodes, *a, g.clone()),
        Op::Unary(kind, a) => {
            let x = nodes[*a].value.data();
            let y = node.value.data();
            let gd = g.data();
            let d: Vec<f64> = (0..gd.len())
                .map(|i| {
                    let local = match kind {
                        Unary::Tanh => 1.0 - y[i] * y[i],
                        Unary::Sigmoid => y[i] * (1.0 - y[i]),
                        Unary::Softplus => sigmoid(x[i]),
                        Unary::Exp => y[i],
                        Unary::Log => 1.0 / x[i],
                        Unary::Square => 2.0 * x[i],
                        Unary::Sqrt => 0.5 / y[i],
                    };
                    gd[i] * local
                })
                .collect();
            accumulate(grads, nodes, *a, Tensor::from_parts(g.shape().to_vec(), d));
        }
        Op::Concat(parts) => {
            let mut off = 0;
            for p in parts {
                let pv = &nodes[*p].value;
                let n = pv.len();
                if nodes[*p].requires_grad {
                    let piece = g.data()[off..off + n].to_vec();
                    accumulate(grads, nodes, *p, Tensor::from_parts(pv.shape().to_vec(), piece));
                }
                off += n;
            }
        }
        Op::Stack(rows) => {
            let mut off = 0;
            for r in rows {
                let rv = &nodes[*r].value;
                let n = rv.len();
                if nodes[*r].requires_grad {
                    let piece = g.data()[off..off + n].to_vec();
                    accumulate(grads, nodes, *r, Tensor::from_parts(rv.shape().to_vec(), piece));
                }
                off += n;
            }
        }
        Op::Slice { a, start } => {
            let av = &nodes[*a].value;
            let mut out = vec![0.0; av.len()];
            out[*start..*start + g.len()].copy_from_slice(g.data());
            accumulate(grads, nodes, *a, Tensor::from_parts(av.shape().to_vec(), out));
        }
        Op::Reshape(a) => {
            let av = &nodes[*a].value;
            accumulate(
                grads,
                nodes,
                *a,
                Tensor::from_parts(av.shape().to_vec(), g.data().to_vec()),
            );
        }
        Op::Diag(a) => {
            let n = nodes[*a].value.len();
            let d = (0..n).map(|i| g.data()[i * n + i]).collect();
            accumulate(grads, nodes, *a, Tensor::from_parts(vec![n], d));
        }
        Op::Sum(a) => {
            let s = g.item();
            accumulate(grads, nodes, *a, Tensor::filled(nodes[*a].value.shape(), s));
        }
        Op::Mean(a) => {
            let n = nodes[*a].value.len() as f64;
            let s = g.item() / n;
            accumulate(grads, nodes, *a, Tensor::filled(nodes[*a].value.shape(), s));
        }
        Op::MvnLogPdf {
            resid,
            cov,
            cov_inv,
            resid_inv,
        } => {
            let gs = g.item();
            let rv = &nodes[*resid].value;
            let d = nodes[*cov].value.shape()[0];
            let n = rv.len() / d;
            if nodes[*resid].requires_grad {
                let dr = resid_inv.iter().map(|v| -gs * v).collect();
                accumulate(grads, nodes, *resid, Tensor::from_parts(rv.shape().to_vec(), dr));
            }
            if nodes[*cov].requires_grad {
                // -0.5 (n S⁻¹ - (R S⁻¹)ᵀ (R S⁻¹))
                let gram = gemm_tn(resid_inv, resid_inv, n, d, d);
                let ds = cov_inv
                    .iter()
                    .zip(&gram)
                    .map(|(si, q)| -0.5 * gs * (n as f64 * si - q))
                    .collect();
                accumulate(grads, nodes, *cov, Tensor::from_parts(vec![d, d], ds));
            }
        }
    }
}
