use super::{Graph, ParamStore, Tape, TensorError, Var};

/// Central finite-difference gradient of a scalar loss, one entry per
/// parameter element, in store order.
pub fn numeric_gradient<F>(store: &ParamStore, step: f64, loss: &F) -> Result<Vec<Vec<f64>>, TensorError>
where
    F: for<'t> Fn(&Graph<'t>) -> Result<Var<'t>, TensorError>,
{
    let eval = |s: &ParamStore| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let g = Graph::new(&tape, s);
        let v = loss(&g)?.item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite(v))
        }
    };
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let n = store.get(id).len();
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let orig = store.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + step;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig - step;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            g.push((plus - minus) / (2.0 * step));
        }
        out.push(g);
    }
    Ok(out)
}

/// Maximum relative discrepancy between the tape gradient and central
/// differences: `|a - n| / max(1e-8, |a| + |n|)` over every element.
pub fn check_gradient<F>(store: &ParamStore, step: f64, loss: F) -> Result<f64, TensorError>
where
    F: for<'t> Fn(&Graph<'t>) -> Result<Var<'t>, TensorError>,
{
    let tape = Tape::new();
    let g = Graph::new(&tape, store);
    let out = loss(&g)?;
    let v = out.item();
    if !v.is_finite() {
        return Err(TensorError::NonFinite(v));
    }
    let grads = tape.backward(out)?;
    let numeric = numeric_gradient(store, step, &loss)?;
    let mut worst = 0.0f64;
    for id in store.ids() {
        let n = store.get(id).len();
        let analytic = grads.param(id);
        for i in 0..n {
            let a = analytic.map_or(0.0, |t| t.data()[i]);
            let num = numeric[id.index()][i];
            let err = (a - num).abs() / (a.abs() + num.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
