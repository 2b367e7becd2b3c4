//! Central-difference gradient verification.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative discrepancy used by every gradient check:
/// `|ad - fd| / max(1, |ad|, |fd|)`.
pub fn relative_error(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs())
}

fn scalar_output(v: Var<'_>) -> Result<f64> {
    if v.shape() != [1, 1] {
        return Err(Error::Shape {
            op: "grad_check",
            lhs: v.shape(),
            rhs: [1, 1],
        });
    }
    let y = v.value().item();
    if !y.is_finite() {
        return Err(Error::NonFinite("grad_check function value".into()));
    }
    Ok(y)
}

/// Compares the tape gradient of scalar `f` at `point` with central
/// differences of width `step`. Returns the maximum relative error over all
/// coordinates.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let errors = grad_check_many(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(point),
        step,
    )?;
    Ok(errors[0])
}

/// Multi-input variant: returns one maximum relative error per input tensor.
pub fn grad_check_many<F>(f: F, points: &[Tensor], step: f64) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        scalar_output(f(&tape, &vars)?)
    };

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = points.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    scalar_output(out)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get_or_zeros(v)).collect();

    let mut work: Vec<Tensor> = points.to_vec();
    let mut errors = Vec::with_capacity(points.len());
    for (t, ad) in analytic.iter().enumerate() {
        if !ad.is_finite() {
            return Err(Error::NonFinite(format!("analytic gradient of input {t}")));
        }
        let mut worst: f64 = 0.0;
        for i in 0..points[t].len() {
            let x0 = points[t].data()[i];
            work[t].data_mut()[i] = x0 + step;
            let plus = eval(&work)?;
            work[t].data_mut()[i] = x0 - step;
            let minus = eval(&work)?;
            work[t].data_mut()[i] = x0;
            let fd = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(ad.data()[i], fd));
        }
        errors.push(worst);
    }
    Ok(errors)
}
