use super::network::{LossSpec, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffReport {
    pub passed: bool,
    pub max_relative_error: f64,
    /// Index of the worst coordinate: parameters first, then input features.
    pub worst_index: usize,
}

/// Relative error with a floor of `1e-3` on the denominator so vanishing
/// gradients are compared absolutely.
fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Compares reverse-mode gradients of `loss` against central differences
/// over every parameter and every input coordinate.
pub fn finite_diff_check(net: &Network, x: &[f64], loss: &LossSpec, step: f64, tol: f64) -> Result<FiniteDiffReport> {
    let g = net.gradient(x, loss)?;
    let mut analytic = g.flat();
    analytic.extend_from_slice(&g.input);
    compare_with_finite_differences(net, x, loss, &analytic, step, tol)
}

/// Checks a supplied gradient (`params ++ input`) against central differences.
pub fn compare_with_finite_differences(
    net: &Network,
    x: &[f64],
    loss: &LossSpec,
    analytic: &[f64],
    step: f64,
    tol: f64,
) -> Result<FiniteDiffReport> {
    if !(step > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let n_params = net.param_count();
    if analytic.len() != n_params + x.len() {
        return Err(Error::DimensionMismatch {
            context: "analytic gradient",
            expected: n_params + x.len(),
            got: analytic.len(),
        });
    }
    let base = net.params();
    let mut probe = net.clone();
    let mut worst = (0.0f64, 0usize);
    let mut params = base.clone();
    for i in 0..n_params {
        params[i] = base[i] + step;
        probe.set_params(&params)?;
        let up = probe.loss_value(x, loss)?;
        params[i] = base[i] - step;
        probe.set_params(&params)?;
        let down = probe.loss_value(x, loss)?;
        params[i] = base[i];
        let err = relative_error(analytic[i], (up - down) / (2.0 * step));
        if err > worst.0 {
            worst = (err, i);
        }
    }
    let mut xs = x.to_vec();
    for j in 0..x.len() {
        xs[j] = x[j] + step;
        let up = net.loss_value(&xs, loss)?;
        xs[j] = x[j] - step;
        let down = net.loss_value(&xs, loss)?;
        xs[j] = x[j];
        let err = relative_error(analytic[n_params + j], (up - down) / (2.0 * step));
        if err > worst.0 {
            worst = (err, n_params + j);
        }
    }
    Ok(FiniteDiffReport {
        passed: worst.0 <= tol,
        max_relative_error: worst.0,
        worst_index: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Tensor2};

    #[test]
    fn random_mlp_passes() {
        let net = Network::random(&[4, 6, 3], &[Activation::Relu, Activation::Softmax], 21).unwrap();
        let x = [0.3, -1.2, 0.8, 2.0];
        let r = finite_diff_check(&net, &x, &LossSpec::CategoricalCrossEntropy { label: 2 }, 1e-5, 1e-4).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let net = Network::random(&[4, 6, 3], &[Activation::Relu, Activation::Softmax], 21).unwrap();
        let x = [0.3, -1.2, 0.8, 2.0];
        let loss = LossSpec::CategoricalCrossEntropy { label: 0 };
        let g = net.gradient(&x, &loss).unwrap();
        let mut analytic = g.flat();
        analytic.extend_from_slice(&g.input);
        analytic[3] += 0.1;
        let r = compare_with_finite_differences(&net, &x, &loss, &analytic, 1e-5, 1e-4).unwrap();
        assert!(!r.passed);
        assert_eq!(r.worst_index, 3);
    }

    #[test]
    fn zero_network_has_no_error() {
        let layer = DenseLayer::new(Tensor2::zeros(3, 2), vec![0.0; 2], Activation::Identity).unwrap();
        let net = Network::new(vec![layer]).unwrap();
        let r = finite_diff_check(&net, &[1.0, 2.0, 3.0], &LossSpec::Output { index: 1 }, 1e-3, 1e-4).unwrap();
        assert!(r.passed);
        assert!(r.max_relative_error < 1e-10);
    }

    #[test]
    fn step_must_be_positive() {
        let net = Network::random(&[2, 2], &[Activation::Softmax], 0).unwrap();
        assert!(finite_diff_check(&net, &[0.0, 0.0], &LossSpec::Logit { index: 0 }, 0.0, 1e-4).is_err());
    }
}
