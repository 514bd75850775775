//! Loss, optimizer, synthetic data and the BPTT training loop.

mod adam;
mod loss;
mod synth;
mod train;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamMoments};
pub use loss::{loss, loss_value, mean_abs, mse, neg_si_snr, LossBreakdown, LossConfig};
pub use synth::{synth_batch, Mixture, NoiseKind, SynthSpec};
pub use train::{
    batch_gradients, evaluate, project_constraints, train, validation_seed, EpochRecord, Evaluation, TrainConfig, TAU_MIN,
};
