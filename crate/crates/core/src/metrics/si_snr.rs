use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Upper limit reported for (near-)perfect estimates, in dB.
pub const SI_SNR_CAP_DB: f64 = 60.0;
/// Lower limit, reached when the estimate is (near-)orthogonal to the reference.
pub const SI_SNR_FLOOR_DB: f64 = -60.0;
/// Relative guard added to the error energy.
pub const SI_SNR_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiSnrResult {
    pub value_db: f64,
    /// Set when the value hit [`SI_SNR_CAP_DB`].
    pub capped: bool,
}

/// Energies of the decomposition `est = s_target + e_noise` after mean removal.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Decomposition {
    /// `<est, ref>`
    pub cross: f64,
    /// `||ref||^2`
    pub ref_energy: f64,
    /// `||est||^2`
    pub est_energy: f64,
    /// `||e_noise||^2`
    pub noise_energy: f64,
    pub mean_est: f64,
    pub mean_ref: f64,
}

impl Decomposition {
    pub fn compute<T: Scalar>(est: &[T], reference: &[T]) -> Result<Self> {
        if est.len() != reference.len() {
            return Err(Error::Dimension(format!(
                "si_snr: estimate has {} samples, reference {}",
                est.len(),
                reference.len()
            )));
        }
        if est.is_empty() {
            return Err(Error::TooShort("si_snr needs at least one sample".into()));
        }
        let n = est.len() as f64;
        let mean_est = est.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let mean_ref = reference.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let (mut cross, mut ref_energy, mut est_energy) = (0.0, 0.0, 0.0);
        for (e, r) in est.iter().zip(reference) {
            let (e, r) = (e.as_f64() - mean_est, r.as_f64() - mean_ref);
            cross += e * r;
            ref_energy += r * r;
            est_energy += e * e;
        }
        if !(cross.is_finite() && ref_energy.is_finite() && est_energy.is_finite()) {
            return Err(Error::NonFinite("si_snr input"));
        }
        if ref_energy == 0.0 {
            return Err(Error::ZeroEnergy);
        }
        let alpha = cross / ref_energy;
        let noise_energy = est
            .iter()
            .zip(reference)
            .map(|(e, r)| {
                let d = (e.as_f64() - mean_est) - alpha * (r.as_f64() - mean_ref);
                d * d
            })
            .sum();
        Ok(Decomposition {
            cross,
            ref_energy,
            est_energy,
            noise_energy,
            mean_est,
            mean_ref,
        })
    }

    /// `||s_target||^2`
    pub fn target_energy(&self) -> f64 {
        self.cross * self.cross / self.ref_energy
    }

    /// Guarded denominator. The guard scales with the estimate energy so it
    /// does not disturb scale invariance.
    pub fn denominator(&self) -> f64 {
        self.noise_energy + SI_SNR_EPS * self.est_energy
    }

    /// Uncapped value in dB; `None` when the estimate carries no energy.
    pub fn raw_db(&self) -> Option<f64> {
        let den = self.denominator();
        if self.est_energy == 0.0 || den == 0.0 {
            return None;
        }
        Some(10.0 * (self.target_energy() / den).log10())
    }

    pub fn result(&self) -> SiSnrResult {
        match self.raw_db() {
            Some(v) if v >= SI_SNR_CAP_DB => SiSnrResult {
                value_db: SI_SNR_CAP_DB,
                capped: true,
            },
            Some(v) if v > SI_SNR_FLOOR_DB => SiSnrResult { value_db: v, capped: false },
            _ => SiSnrResult {
                value_db: SI_SNR_FLOOR_DB,
                capped: false,
            },
        }
    }

    /// d value_db / d est for each sample, zero wherever the value is
    /// clamped.
    pub fn gradient<T: Scalar>(&self, est: &[T], reference: &[T]) -> Vec<f64> {
        let raw = self.raw_db();
        let active = matches!(raw, Some(v) if v < SI_SNR_CAP_DB && v > SI_SNR_FLOOR_DB);
        if !active {
            return vec![0.0; est.len()];
        }
        let alpha = self.cross / self.ref_energy;
        let pt = self.target_energy();
        let den = self.denominator();
        let k = 10.0 / std::f64::consts::LN_10;
        let mut g: Vec<f64> = est
            .iter()
            .zip(reference)
            .map(|(e, r)| {
                let e = e.as_f64() - self.mean_est;
                let st = alpha * (r.as_f64() - self.mean_ref);
                let noise = e - st;
                k * (2.0 * st / pt - 2.0 * (noise + SI_SNR_EPS * e) / den)
            })
            .collect();
        // mean removal is a projection; its adjoint subtracts the mean
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        g.iter_mut().for_each(|v| *v -= mean);
        g
    }
}

/// Scale-invariant SNR of `est` against `reference` in dB, both signals
/// mean-subtracted first.
pub fn si_snr<T: Scalar>(est: &[T], reference: &[T]) -> Result<SiSnrResult> {
    Ok(Decomposition::compute(est, reference)?.result())
}

/// Improvement of `est` over the unprocessed `noisy` input.
pub fn si_snri<T: Scalar>(est: &[T], noisy: &[T], reference: &[T]) -> Result<f64> {
    Ok(si_snr(est, reference)?.value_db - si_snr(noisy, reference)?.value_db)
}
