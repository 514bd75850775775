use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Array;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, Default)]
pub struct AdamMoments<T> {
    pub m: Vec<Array<T>>,
    pub v: Vec<Array<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamMoments<T> {
    pub fn new(shapes: &[&[usize]]) -> Self {
        AdamMoments {
            m: shapes.iter().map(|s| Array::zeros(s)).collect(),
            v: shapes.iter().map(|s| Array::zeros(s)).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Array<T>],
    grads: &[Array<T>],
    moments: &mut AdamMoments<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != moments.m.len() {
        return Err(Error::dim(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            moments.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&moments.m) {
        g.expect_shape(p.shape())?;
        m.expect_shape(p.shape())?;
    }
    moments.step += 1;
    let t = moments.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let bc1 = T::one() - T::lit(cfg.beta1.powi(t));
    let bc2 = T::one() - T::lit(cfg.beta2.powi(t));
    let (lr, eps) = (T::lit(lr), T::lit(cfg.eps));
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = moments.m[i].data_mut();
        let v = moments.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (T::one() - b1) * g[j];
            v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Array<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| {
            let v = v.as_f64();
            v * v
        })
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = T::lit(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Array::new(&[3], vec![0.5f64, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut m = AdamMoments::new(&[&[3]]);
        adam_step(&mut [&mut p], &[Array::zeros(&[3])], &mut m, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_sign() {
        let mut p = Array::new(&[3], vec![0.0f64, 0.0, 0.0]).unwrap();
        let g = Array::new(&[3], vec![3.0, -0.02, 1e-3]).unwrap();
        let mut m = AdamMoments::new(&[&[3]]);
        adam_step(&mut [&mut p], &[g.clone()], &mut m, 0.01, &AdamConfig::default()).unwrap();
        for (w, g) in p.data().iter().zip(g.data()) {
            // m_hat = g, v_hat = g^2 exactly after bias correction
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
        }
    }

    #[test]
    fn clipping_rescales_to_max_norm() {
        let mut g = vec![Array::new(&[2], vec![3.0f64, 4.0]).unwrap()];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        let mut small = vec![Array::new(&[1], vec![0.5f64]).unwrap()];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.5]);
    }
}
