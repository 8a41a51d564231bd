use super::ops::Op;
use super::tape::Node;
use super::{Tensor, TensorError, Var};

/// Activations kept from the forward pass of a fused GRU step.
#[derive(Debug, Clone)]
pub(crate) struct GruCache {
    r: Vec<f64>,
    u: Vec<f64>,
    c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += W v` for row-major `W` of shape `(rows, v.len())`.
fn gemv(w: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T d`.
fn gemv_t(w: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (di, row) in d.iter().zip(w.chunks_exact(cols)) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += di * a;
        }
    }
}

fn outer(d: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(d.len() * v.len());
    for a in d {
        out.extend(v.iter().map(|b| a * b));
    }
    out
}

/// One GRU update as a single tape node.
///
/// `weights` is `[W_r, W_z, W_h, U_r, U_z, U_h, b_r, b_z, b_h]` with input
/// matrices `(hidden, input)`, recurrent matrices `(hidden, hidden)` and
/// biases `(hidden,)`. Computes `h + u * (tanh(W_h x + U_h (r * h) + b_h) - h)`.
pub fn gru_cell<'t>(x: Var<'t>, h: Var<'t>, weights: [Var<'t>; 9]) -> Result<Var<'t>, TensorError> {
    let tape = x.tape;
    for v in weights.iter().chain([&h]) {
        assert!(std::ptr::eq(tape, v.tape), "operands recorded on different tapes");
    }
    let (value, cache, rg) = {
        let nodes = tape.nodes();
        let xv = &nodes[x.id].value;
        let hv = &nodes[h.id].value;
        let shape_err = |what: &[usize]| TensorError::Shape {
            op: "gru_cell",
            lhs: what.to_vec(),
            rhs: hv.shape().to_vec(),
        };
        let (&[m], &[n]) = (xv.shape(), hv.shape()) else {
            return Err(shape_err(xv.shape()));
        };
        let expect = [[n, m], [n, m], [n, m], [n, n], [n, n], [n, n]];
        for (w, e) in weights[..6].iter().zip(expect) {
            let s = nodes[w.id].value.shape();
            if s != e {
                return Err(shape_err(s));
            }
        }
        for b in &weights[6..] {
            let s = nodes[b.id].value.shape();
            if s != [n] {
                return Err(shape_err(s));
            }
        }
        let w = |i: usize| nodes[weights[i].id].value.data();
        let (xd, hd) = (xv.data(), hv.data());
        let mut ar = w(6).to_vec();
        gemv(w(0), xd, &mut ar);
        gemv(w(3), hd, &mut ar);
        let r: Vec<f64> = ar.iter().map(|&v| sigmoid(v)).collect();
        let mut au = w(7).to_vec();
        gemv(w(1), xd, &mut au);
        gemv(w(4), hd, &mut au);
        let u: Vec<f64> = au.iter().map(|&v| sigmoid(v)).collect();
        let rh: Vec<f64> = r.iter().zip(hd).map(|(a, b)| a * b).collect();
        let mut ac = w(8).to_vec();
        gemv(w(2), xd, &mut ac);
        gemv(w(5), &rh, &mut ac);
        let c: Vec<f64> = ac.iter().map(|v| v.tanh()).collect();
        let out: Vec<f64> = (0..n).map(|i| hd[i] + u[i] * (c[i] - hd[i])).collect();
        let rg = nodes[x.id].requires_grad
            || nodes[h.id].requires_grad
            || weights.iter().any(|v| nodes[v.id].requires_grad);
        (Tensor::from_parts(vec![n], out), GruCache { r, u, c }, rg)
    };
    let op = Op::GruCell {
        x: x.id,
        h: h.id,
        weights: weights.map(|v| v.id),
        cache: Box::new(cache),
    };
    Ok(tape.push(value, op, rg))
}

pub(crate) fn gru_backward(
    x: usize,
    h: usize,
    weights: &[usize; 9],
    cache: &GruCache,
    g: &Tensor,
    nodes: &[Node],
    mut acc: impl FnMut(usize, Tensor),
) {
    let xd = nodes[x].value.data();
    let hd = nodes[h].value.data();
    let w = |i: usize| nodes[weights[i]].value.data();
    let gd = g.data();
    let n = hd.len();
    let m = xd.len();
    let GruCache { r, u, c } = cache;
    let rh: Vec<f64> = r.iter().zip(hd).map(|(a, b)| a * b).collect();
    let mut dh: Vec<f64> = (0..n).map(|i| gd[i] * (1.0 - u[i])).collect();
    let dau: Vec<f64> = (0..n)
        .map(|i| gd[i] * (c[i] - hd[i]) * u[i] * (1.0 - u[i]))
        .collect();
    let dac: Vec<f64> = (0..n).map(|i| gd[i] * u[i] * (1.0 - c[i] * c[i])).collect();
    let mut drh = vec![0.0; n];
    gemv_t(w(5), &dac, &mut drh);
    let mut dar = vec![0.0; n];
    for i in 0..n {
        dh[i] += drh[i] * r[i];
        dar[i] = drh[i] * hd[i] * r[i] * (1.0 - r[i]);
    }
    gemv_t(w(3), &dar, &mut dh);
    gemv_t(w(4), &dau, &mut dh);
    let wants = |id: usize| nodes[id].requires_grad;
    if wants(x) {
        let mut dx = vec![0.0; m];
        gemv_t(w(0), &dar, &mut dx);
        gemv_t(w(1), &dau, &mut dx);
        gemv_t(w(2), &dac, &mut dx);
        acc(x, Tensor::from_parts(vec![m], dx));
    }
    if wants(h) {
        acc(h, Tensor::from_parts(vec![n], dh));
    }
    let pieces: [(&[f64], &[f64], usize); 6] = [
        (&dar, xd, m),
        (&dau, xd, m),
        (&dac, xd, m),
        (&dar, hd, n),
        (&dau, hd, n),
        (&dac, &rh, n),
    ];
    for (i, (d, v, cols)) in pieces.into_iter().enumerate() {
        if wants(weights[i]) {
            acc(weights[i], Tensor::from_parts(vec![n, cols], outer(d, v)));
        }
    }
    for (i, d) in [&dar, &dau, &dac].into_iter().enumerate() {
        if wants(weights[6 + i]) {
            acc(weights[6 + i], Tensor::from_parts(vec![n], d.clone()));
        }
    }
}
