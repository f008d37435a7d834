//! Central-difference gradient checking.

use super::{Tape, Tensor, TensorError, Var};
use std::collections::BTreeMap;

/// Max relative error between analytic and central-difference gradients of
/// a scalar-valued function of a single tensor.
///
/// The builder is re-invoked for every perturbed evaluation, so any noise or
/// auxiliary inputs it closes over must stay fixed across calls.
pub fn grad_check<F>(mut build: F, point: &Tensor, epsilon: f64) -> Result<f64, TensorError>
where
    F: FnMut(&mut Tape, Var) -> Result<Var, TensorError>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(TensorError::BadEpsilon(epsilon));
    }

    let mut tape = Tape::new();
    let x = tape.param("x", point.clone());
    let root = build(&mut tape, x)?;
    let grads = tape.backward(root)?;
    let analytic = grads
        .get("x")
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(point.shape().to_vec()));

    let eval = |data: &[f64], build: &mut F| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(point.shape().to_vec(), data.to_vec())?);
        let root = build(&mut tape, x)?;
        Ok(tape.value(root).item())
    };

    let mut max_err: f64 = 0.0;
    let mut data = point.data().to_vec();
    for i in 0..data.len() {
        let orig = data[i];
        data[i] = orig + epsilon;
        let plus = eval(&data, &mut build)?;
        data[i] = orig - epsilon;
        let minus = eval(&data, &mut build)?;
        data[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}

/// Same check over a whole family of named parameters. Every coordinate of
/// every tensor is perturbed, so keep the model small.
pub fn grad_check_named<F>(
    mut build: F,
    params: &BTreeMap<String, Tensor>,
    epsilon: f64,
) -> Result<f64, TensorError>
where
    F: FnMut(&mut Tape, &BTreeMap<String, Tensor>) -> Result<Var, TensorError>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(TensorError::BadEpsilon(epsilon));
    }

    let mut tape = Tape::new();
    let root = build(&mut tape, params)?;
    let analytic = tape.backward(root)?;

    let mut max_err: f64 = 0.0;
    let mut working = params.clone();
    for name in params.keys() {
        let numel = params[name].numel();
        for i in 0..numel {
            let orig = params[name].data()[i];
            working.get_mut(name).unwrap().data_mut()[i] = orig + epsilon;
            let mut tp = Tape::new();
            let plus = {
                let r = build(&mut tp, &working)?;
                tp.value(r).item()
            };
            working.get_mut(name).unwrap().data_mut()[i] = orig - epsilon;
            let mut tm = Tape::new();
            let minus = {
                let r = build(&mut tm, &working)?;
                tm.value(r).item()
            };
            working.get_mut(name).unwrap().data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.get(name).map(|t| t.data()[i]).unwrap_or(0.0);
            let err = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            max_err = max_err.max(err);
        }
    }
    Ok(max_err)
}
