use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::Decomposition;
use crate::scalar::Scalar;
use crate::tensor::{Array, Function, Tape, Var};

/// Weights of the training objective
/// `offset - SI-SNR + w_mse * MSE + lambda2 * L1(bn) + lambda3 * L1(ro)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossConfig {
    pub offset: f64,
    pub w_mse: f64,
    /// L1 weight on the suppressed bottleneck activations.
    pub lambda2: f64,
    /// L1 weight on the suppressed readout activations.
    pub lambda3: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            offset: 100.0,
            w_mse: 0.001,
            lambda2: 0.001,
            lambda3: 0.001,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("offset", self.offset),
            ("w_mse", self.w_mse),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be finite")));
            }
            if name != "offset" && v < 0.0 {
                return Err(Error::Config(format!("loss weight {name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Weighted terms of one loss evaluation. `total` is the left-to-right sum
/// `offset + neg_si_snr + mse + l1_bn + l1_ro` of the fields below.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub offset: f64,
    /// Batch mean of `-SI-SNR` in dB.
    pub neg_si_snr: f64,
    pub mse: f64,
    pub l1_bn: f64,
    pub l1_ro: f64,
}

impl LossBreakdown {
    fn from_terms(offset: f64, terms: [f64; 4]) -> Self {
        let [neg_si_snr, mse, l1_bn, l1_ro] = terms;
        LossBreakdown {
            total: offset + neg_si_snr + mse + l1_bn + l1_ro,
            offset,
            neg_si_snr,
            mse,
            l1_bn,
            l1_ro,
        }
    }
}

fn rows<T: Scalar>(a: &Array<T>) -> Result<(usize, usize)> {
    let (b, c, t) = a.dims3()?;
    if c != 1 {
        return Err(Error::Dimension(format!("expected mono [B,1,T] audio, got {:?}", a.shape())));
    }
    Ok((b, t))
}

/// Batch mean of `-SI-SNR(est_b, ref_b)` with the clean signals held fixed.
struct NegSiSnrFn<T> {
    reference: Array<T>,
}

impl<T: Scalar> Function<T> for NegSiSnrFn<T> {
    fn name(&self) -> &'static str {
        "neg_si_snr"
    }

    fn backward(&self, inputs: &[&Array<T>], _output: &Array<T>, grad_output: &Array<T>) -> Vec<Option<Array<T>>> {
        let est = inputs[0];
        let (b, t) = rows(est).expect("validated in forward");
        let scale = -grad_output.data()[0].as_f64() / b as f64;
        let mut grad = Vec::with_capacity(est.len());
        for (e, r) in est.data().chunks(t).zip(self.reference.data().chunks(t)) {
            let d = Decomposition::compute(e, r).expect("validated in forward");
            grad.extend(d.gradient(e, r).into_iter().map(|g| T::lit(g * scale)));
        }
        vec![Some(Array::new(est.shape(), grad).unwrap())]
    }
}

pub fn neg_si_snr<T: Scalar>(tape: &mut Tape<T>, est: Var, reference: &Array<T>) -> Result<Var> {
    let ev = tape.value(est);
    let (b, t) = rows(ev)?;
    ev.expect_shape(reference.shape())?;
    let mut acc = 0.0;
    for (e, r) in ev.data().chunks(t).zip(reference.data().chunks(t)) {
        acc -= Decomposition::compute(e, r)?.result().value_db;
    }
    let value = Array::scalar(T::lit(acc / b as f64));
    Ok(tape.push(
        value,
        vec![est],
        Box::new(NegSiSnrFn {
            reference: reference.clone(),
        }),
    ))
}

struct MseFn<T> {
    reference: Array<T>,
}

impl<T: Scalar> Function<T> for MseFn<T> {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn backward(&self, inputs: &[&Array<T>], _output: &Array<T>, grad_output: &Array<T>) -> Vec<Option<Array<T>>> {
        let x = inputs[0];
        let k = grad_output.data()[0] * T::lit(2.0) / T::from_usize(x.len()).unwrap();
        vec![Some(x.zip_map(&self.reference, |a, r| k * (a - r)).unwrap())]
    }
}

/// Mean squared error against a fixed target.
pub fn mse<T: Scalar>(tape: &mut Tape<T>, x: Var, reference: &Array<T>) -> Result<Var> {
    let xv = tape.value(x);
    xv.expect_shape(reference.shape())?;
    if xv.is_empty() {
        return Err(Error::TooShort("mse of an empty signal".into()));
    }
    let sq: T = xv.data().iter().zip(reference.data()).map(|(&a, &r)| (a - r) * (a - r)).sum();
    let value = Array::scalar(sq / T::from_usize(xv.len()).unwrap());
    Ok(tape.push(
        value,
        vec![x],
        Box::new(MseFn {
            reference: reference.clone(),
        }),
    ))
}

struct MeanAbsFn;

impl<T: Scalar> Function<T> for MeanAbsFn {
    fn name(&self) -> &'static str {
        "mean_abs"
    }

    fn backward(&self, inputs: &[&Array<T>], _output: &Array<T>, grad_output: &Array<T>) -> Vec<Option<Array<T>>> {
        let x = inputs[0];
        let k = grad_output.data()[0] / T::from_usize(x.len()).unwrap();
        vec![Some(x.map(|v| {
            if v > T::zero() {
                k
            } else if v < T::zero() {
                -k
            } else {
                T::zero()
            }
        }))]
    }
}

/// Mean absolute value (the L1 activity penalty).
pub fn mean_abs<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let xv = tape.value(x);
    if xv.is_empty() {
        return Err(Error::TooShort("mean_abs of an empty tensor".into()));
    }
    let s: T = xv.data().iter().map(|v| v.abs()).sum();
    let value = Array::scalar(s / T::from_usize(xv.len()).unwrap());
    Ok(tape.push(value, vec![x], Box::new(MeanAbsFn)))
}

/// `offset + sum_i w_i * x_i`, accumulated left to right.
struct WeightedSumFn<T> {
    weights: Vec<T>,
}

impl<T: Scalar> Function<T> for WeightedSumFn<T> {
    fn name(&self) -> &'static str {
        "weighted_sum"
    }

    fn backward(&self, _inputs: &[&Array<T>], _output: &Array<T>, grad_output: &Array<T>) -> Vec<Option<Array<T>>> {
        let g = grad_output.data()[0];
        self.weights.iter().map(|&w| Some(Array::scalar(g * w))).collect()
    }
}

/// Records the full objective. `bn` and `ro` are the suppressed bottleneck
/// and readout maps of the same forward pass.
pub fn loss<T: Scalar>(
    tape: &mut Tape<T>,
    enhanced: Var,
    clean: &Array<T>,
    bn: Var,
    ro: Var,
    cfg: &LossConfig,
) -> Result<(Var, LossBreakdown)> {
    cfg.validate()?;
    let terms = [
        neg_si_snr(tape, enhanced, clean)?,
        mse(tape, enhanced, clean)?,
        mean_abs(tape, bn)?,
        mean_abs(tape, ro)?,
    ];
    let weights = [1.0, cfg.w_mse, cfg.lambda2, cfg.lambda3];
    let mut weighted = [0.0; 4];
    for i in 0..4 {
        weighted[i] = weights[i] * tape.value(terms[i]).data()[0].as_f64();
    }
    let breakdown = LossBreakdown::from_terms(cfg.offset, weighted);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let value = Array::scalar(T::lit(breakdown.total));
    let var = tape.push(
        value,
        terms.to_vec(),
        Box::new(WeightedSumFn {
            weights: weights.iter().map(|&w| T::lit(w)).collect(),
        }),
    );
    Ok((var, breakdown))
}

/// Loss of already computed tensors, without gradients.
pub fn loss_value<T: Scalar>(enhanced: &Array<T>, clean: &Array<T>, bn: &Array<T>, ro: &Array<T>, cfg: &LossConfig) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let e = tape.constant(enhanced.clone());
    let b = tape.constant(bn.clone());
    let r = tape.constant(ro.clone());
    Ok(loss(&mut tape, e, clean, b, r, cfg)?.1)
}
