//! Dense tensors, a reverse-mode tape, gradient checking and Adam.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod tape;
mod tensor;

use rand::Rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_many, relative_error, DEFAULT_STEP};
pub use tape::{Gradients, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))` for a `fan_in x fan_out` matrix.
pub fn xavier_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = if fan_in + fan_out == 0 {
        0.0
    } else {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    };
    let data = (0..fan_in * fan_out)
        .map(|_| if bound > 0.0 { rng.gen_range(-bound..bound) } else { 0.0 })
        .collect();
    Tensor::new(fan_in, fan_out, data).expect("shape matches")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grad_of<'t>(tape: &'t Tape, x: Var<'t>, y: Var<'t>) -> Tensor {
        tape.backward(y).unwrap().get_or_zeros(x)
    }

    #[test]
    fn softmax_of_uniform_logits() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![0.0, 0.0, 0.0]));
        let y = x.softmax().value();
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_handles_large_logits() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1000.0, 1000.0]));
        assert_eq!(x.softmax().value().data(), &[0.5, 0.5]);
    }

    #[test]
    fn layer_norm_of_constant_vector_is_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![4.0, 4.0, 4.0, 4.0]));
        assert!(x.layer_norm().value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_sum_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![-1.0, 2.0]));
        let y = x.relu().sum();
        assert_eq!(grad_of(&tape, x, y).data(), &[0.0, 1.0]);
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 3));
        let err = a.matmul(b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = tape.leaf(Tensor::zeros(3, 2));
        assert!(a.add(c).unwrap_err().to_string().contains("add"));
        assert!(tape.concat_cols(&[a, c]).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::scalar(2.0));
        let b = tape.leaf(Tensor::scalar(3.0));
        let y = a.mul(b).unwrap();
        let g = tape.backward(y).unwrap();
        assert!(g.get(a).is_none());
        assert_eq!(g.get(b).unwrap().item(), 2.0);
    }

    #[test]
    fn gradient_accumulates_over_reuse() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = x.mul(x).unwrap().add(x).unwrap();
        assert_eq!(grad_of(&tape, x, y).item(), 7.0);
    }

    #[test]
    fn grad_check_quadratic() {
        let err = grad_check(|_, x| x.mul(x).map(|v| v.sum()), &Tensor::scalar(3.0), DEFAULT_STEP).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn grad_check_constant_function() {
        let err = grad_check(
            |tape, _| Ok(tape.constant(Tensor::scalar(5.0))),
            &Tensor::row(vec![1.0, 2.0]),
            DEFAULT_STEP,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn grad_check_rejects_non_finite() {
        let r = grad_check(|_, x| Ok(x.log().sum()), &Tensor::scalar(-1.0), DEFAULT_STEP);
        assert!(r.is_err());
    }

    #[test]
    fn xavier_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = xavier_uniform(&mut rng, 10, 14);
        let bound = (6.0f64 / 24.0).sqrt();
        assert_eq!(t.shape(), [10, 14]);
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }
}
