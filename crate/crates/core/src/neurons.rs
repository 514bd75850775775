//! Spiking neuron dynamics and their surrogate-gradient BPTT rules.
//!
//! All time constants are in separator steps (one encoder hop per step).
//! LIF and PLIF neurons reset hard to the resting potential; ALIF neurons
//! reset by subtracting the current threshold on the step after a spike.

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::{Array, Function, Tape, Var};

/// Height of the negative side lobes of the multi-Gaussian surrogate.
pub const MULTI_GAUSSIAN_HEIGHT: f64 = 0.15;
/// Width of the central lobe; the side lobe is four times wider.
pub const MULTI_GAUSSIAN_SIGMA: f64 = 0.5;
const MULTI_GAUSSIAN_WIDE: f64 = 4.0;

/// Smooth stand-in for the derivative of the Heaviside step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurrogateKind {
    /// `1 / (1 + (pi x)^2)`, the derivative of `atan(pi x)/pi + 1/2`.
    Arctan,
    /// `(1+h) N(x; 0, s) - h N(x; 0, 4s)` with `h = 0.15`, `s = 0.5`.
    MultiGaussian,
}

fn gaussian_pdf(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn gaussian_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / (sigma * std::f64::consts::SQRT_2)))
}

impl SurrogateKind {
    /// Surrogate derivative at `x = u - theta`.
    #[inline]
    pub fn grad<T: Scalar>(self, x: T) -> T {
        match self {
            SurrogateKind::Arctan => {
                let px = T::PI() * x;
                T::one() / (T::one() + px * px)
            }
            SurrogateKind::MultiGaussian => {
                let (h, s) = (MULTI_GAUSSIAN_HEIGHT, MULTI_GAUSSIAN_SIGMA);
                let x = x.as_f64();
                T::lit((1.0 + h) * gaussian_pdf(x, s) - h * gaussian_pdf(x, MULTI_GAUSSIAN_WIDE * s))
            }
        }
    }

    /// Smooth step whose derivative is exactly [`SurrogateKind::grad`].
    #[inline]
    pub fn relaxed_step<T: Scalar>(self, x: T) -> T {
        match self {
            SurrogateKind::Arctan => (T::PI() * x).atan() / T::PI() + T::lit(0.5),
            SurrogateKind::MultiGaussian => {
                let (h, s) = (MULTI_GAUSSIAN_HEIGHT, MULTI_GAUSSIAN_SIGMA);
                let x = x.as_f64();
                T::lit((1.0 + h) * gaussian_cdf(x, s) - h * gaussian_cdf(x, MULTI_GAUSSIAN_WIDE * s))
            }
        }
    }
}

/// Elementwise surrogate derivative.
pub fn surrogate_grad<T: Scalar>(kind: SurrogateKind, x: &Array<T>) -> Array<T> {
    x.map(|v| kind.grad(v))
}

/// How the forward pass turns `x = u - theta` into a spike.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SpikeMode {
    /// Binary Heaviside spikes; backward uses the surrogate.
    #[default]
    Heaviside,
    /// Spikes replaced by the surrogate's primitive, making the forward pass
    /// smooth and the surrogate backward exact. Used for gradient checks.
    Relaxed,
}

/// Spike nonlinearity plus its backward rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpikeFn {
    pub mode: SpikeMode,
    pub surrogate: SurrogateKind,
}

impl SpikeFn {
    pub fn new(mode: SpikeMode, surrogate: SurrogateKind) -> Self {
        SpikeFn { mode, surrogate }
    }

    #[inline]
    pub fn fire<T: Scalar>(&self, x: T) -> T {
        match self.mode {
            SpikeMode::Heaviside => {
                if x >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            SpikeMode::Relaxed => self.surrogate.relaxed_step(x),
        }
    }

    #[inline]
    pub fn grad<T: Scalar>(&self, x: T) -> T {
        self.surrogate.grad(x)
    }
}

/// Settings shared by the BPTT rules of every spiking layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dynamics {
    pub mode: SpikeMode,
    /// Treat the spike inside the reset term as a constant during backward.
    pub detach_reset: bool,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics {
            mode: SpikeMode::Heaviside,
            detach_reset: true,
        }
    }
}

impl Dynamics {
    /// Smooth forward and full reset gradient: the configuration under which
    /// tape gradients equal finite differences.
    pub fn relaxed() -> Self {
        Dynamics {
            mode: SpikeMode::Relaxed,
            detach_reset: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifConfig<T> {
    pub u_rest: T,
    pub resistance: T,
    pub theta: T,
    /// Membrane time constant in steps; must exceed 1.
    pub tau_m: T,
}

impl<T: Scalar> LifConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > T::one()) {
            return Err(Error::Config(format!("LIF tau_m must exceed 1, got {}", self.tau_m)));
        }
        if !(self.theta > self.u_rest) {
            return Err(Error::Config("LIF threshold must exceed the resting potential".into()));
        }
        Ok(())
    }
}

/// Learnable layer-shared PLIF time constant `tau_m = 1 / sigmoid(a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlifParams<T> {
    pub a: T,
    pub theta: T,
}

impl<T: Scalar> PlifParams<T> {
    /// `1 / tau_m`, the weight of the new input in the membrane update.
    #[inline]
    pub fn inv_tau(&self) -> T {
        sigmoid(self.a)
    }

    pub fn tau_m(&self) -> T {
        T::one() / self.inv_tau()
    }
}

/// Per-neuron ALIF constants.
#[derive(Clone, Debug, PartialEq)]
pub struct AlifParams<T> {
    pub tau_m: Vec<T>,
    pub tau_adp: Vec<T>,
    pub b0: T,
    pub beta: T,
}

impl<T: Scalar> AlifParams<T> {
    #[inline]
    pub fn alpha(&self, j: usize) -> T {
        (-T::one() / self.tau_m[j]).exp()
    }

    #[inline]
    pub fn rho(&self, j: usize) -> T {
        (-T::one() / self.tau_adp[j]).exp()
    }
}

/// Membrane potentials, adaptation traces and last-step spikes of a layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronState<T> {
    pub u: Vec<T>,
    pub eta: Vec<T>,
    pub s_prev: Vec<T>,
}

impl<T: Scalar> NeuronState<T> {
    pub fn new(n: usize) -> Self {
        NeuronState {
            u: vec![T::zero(); n],
            eta: vec![T::zero(); n],
            s_prev: vec![T::zero(); n],
        }
    }

    pub fn at_rest(n: usize, u_rest: T) -> Self {
        let mut s = Self::new(n);
        s.u.fill(u_rest);
        s
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn reset(&mut self) {
        self.u.fill(T::zero());
        self.eta.fill(T::zero());
        self.s_prev.fill(T::zero());
    }
}

fn check_step_input<T: Scalar>(state: &NeuronState<T>, current: &[T]) -> Result<()> {
    if current.len() != state.len() {
        return Err(Error::dim(format!(
            "input current has {} entries for {} neurons",
            current.len(),
            state.len()
        )));
    }
    if current.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("input current"));
    }
    Ok(())
}

/// Leaky integration `(1 - c) u + c x`.
#[inline]
pub(crate) fn leaky_charge<T: Scalar>(u: T, x: T, c: T) -> T {
    (T::one() - c) * u + c * x
}

/// One LIF update of a single neuron: returns `(pre-reset potential, spike, potential)`.
#[inline]
pub(crate) fn lif_update<T: Scalar>(u: T, current: T, inv_tau: T, u_rest: T, resistance: T, theta: T, spike: &SpikeFn) -> (T, T, T) {
    let h = leaky_charge(u, u_rest + resistance * current, inv_tau);
    let s = spike.fire(h - theta);
    (h, s, h * (T::one() - s) + u_rest * s)
}

/// Discrete LIF step with hard reset to `u_rest`. Returns the binary spikes.
pub fn lif_step<T: Scalar>(state: &mut NeuronState<T>, current: &[T], cfg: &LifConfig<T>) -> Result<Vec<T>> {
    check_step_input(state, current)?;
    let spike = SpikeFn::new(SpikeMode::Heaviside, SurrogateKind::Arctan);
    let inv_tau = T::one() / cfg.tau_m;
    let mut spikes = vec![T::zero(); current.len()];
    for j in 0..current.len() {
        let (_, s, u) = lif_update(state.u[j], current[j], inv_tau, cfg.u_rest, cfg.resistance, cfg.theta, &spike);
        state.u[j] = u;
        state.s_prev[j] = s;
        spikes[j] = s;
    }
    Ok(spikes)
}

/// PLIF step: LIF with `u_rest = 0`, `R = 1` and `1/tau_m = sigmoid(a)`.
pub fn plif_step<T: Scalar>(state: &mut NeuronState<T>, current: &[T], params: &PlifParams<T>) -> Result<Vec<T>> {
    check_step_input(state, current)?;
    let spike = SpikeFn::new(SpikeMode::Heaviside, SurrogateKind::Arctan);
    let mut spikes = vec![T::zero(); current.len()];
    plif_column(state, current, params.inv_tau(), params.theta, &spike, &mut spikes, None);
    Ok(spikes)
}

/// PLIF update of one time step for every neuron. `pre_reset`, when given,
/// receives the potential compared against the threshold.
#[inline]
pub(crate) fn plif_column<T: Scalar>(
    state: &mut NeuronState<T>,
    current: &[T],
    inv_tau: T,
    theta: T,
    spike: &SpikeFn,
    spikes: &mut [T],
    mut pre_reset: Option<&mut [T]>,
) {
    for j in 0..current.len() {
        let (h, s, u) = lif_update(state.u[j], current[j], inv_tau, T::zero(), T::one(), theta, spike);
        state.u[j] = u;
        state.s_prev[j] = s;
        spikes[j] = s;
        if let Some(pre) = pre_reset.as_deref_mut() {
            pre[j] = h;
        }
    }
}

/// One ALIF update; `current` already includes any recurrent input.
#[inline]
pub(crate) fn alif_update<T: Scalar>(
    state: &mut NeuronState<T>,
    j: usize,
    current: T,
    alpha: T,
    rho: T,
    b0: T,
    beta: T,
    spike: &SpikeFn,
) -> T {
    let s_prev = state.s_prev[j];
    let eta = rho * state.eta[j] + (T::one() - rho) * s_prev;
    let theta = b0 + beta * eta;
    let u = alpha * state.u[j] + (T::one() - alpha) * current - s_prev * theta;
    let s = spike.fire(u - theta);
    state.eta[j] = eta;
    state.u[j] = u;
    state.s_prev[j] = s;
    s
}

/// Discrete ALIF step (`R = 1`). Returns the binary spikes.
pub fn alif_step<T: Scalar>(state: &mut NeuronState<T>, current: &[T], params: &AlifParams<T>) -> Result<Vec<T>> {
    check_step_input(state, current)?;
    if params.tau_m.len() != state.len() || params.tau_adp.len() != state.len() {
        return Err(Error::dim("ALIF time constants do not match the neuron count"));
    }
    let spike = SpikeFn::new(SpikeMode::Heaviside, SurrogateKind::MultiGaussian);
    Ok((0..current.len())
        .map(|j| alif_update(state, j, current[j], params.alpha(j), params.rho(j), params.b0, params.beta, &spike))
        .collect())
}

/// Adds `W_rec s_prev` to the feed-forward current of one step.
#[inline]
pub(crate) fn recurrent_current<T: Scalar>(feed_forward: &[T], w_rec: &[T], s_prev: &[T], out: &mut [T]) {
    let n = s_prev.len();
    for j in 0..feed_forward.len() {
        let mut rec = T::zero();
        for i in 0..n {
            rec += w_rec[j * n + i] * s_prev[i];
        }
        out[j] = feed_forward[j] + rec;
    }
}

fn column<T: Scalar>(x: &[T], b: usize, c: usize, t_len: usize, t: usize, out: &mut [T]) {
    for (ch, o) in out.iter_mut().enumerate().take(c) {
        *o = x[(b * c + ch) * t_len + t];
    }
}

fn scatter<T: Scalar>(src: &[T], b: usize, c: usize, t_len: usize, t: usize, out: &mut [T]) {
    for ch in 0..c {
        out[(b * c + ch) * t_len + t] = src[ch];
    }
}

struct PlifLayerFn<T> {
    theta: T,
    spike: SpikeFn,
    detach_reset: bool,
    pre_reset: Vec<T>,
    post_reset: Vec<T>,
}

impl<T: Scalar> Function<T> for PlifLayerFn<T> {
    fn name(&self) -> &'static str {
        "plif_layer"
    }

    fn backward(&self, inputs: &[&Array<T>], output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let (current, a) = (inputs[0], inputs[1].data()[0]);
        let (batch, n, t_len) = current.dims3().unwrap();
        let k = sigmoid(a);
        let (id, sd, gd) = (current.data(), output.data(), grad.data());
        let mut d_current = vec![T::zero(); id.len()];
        let mut dk = T::zero();
        for b in 0..batch {
            for j in 0..n {
                let row = (b * n + j) * t_len;
                let mut carry = T::zero();
                for t in (0..t_len).rev() {
                    let (h, s) = (self.pre_reset[row + t], sd[row + t]);
                    let sg = self.spike.grad(h - self.theta);
                    let mut dh = carry * (T::one() - s) + gd[row + t] * sg;
                    if !self.detach_reset {
                        dh -= carry * h * sg;
                    }
                    let u_prev = if t > 0 { self.post_reset[row + t - 1] } else { T::zero() };
                    dk += dh * (id[row + t] - u_prev);
                    d_current[row + t] = dh * k;
                    carry = dh * (T::one() - k);
                }
            }
        }
        vec![
            Some(Array::new(current.shape(), d_current).unwrap()),
            Some(Array::scalar(dk * k * (T::one() - k))),
        ]
    }
}

/// PLIF layer over a whole sequence: `current[B,n,T]`, `a[1]` -> spikes `[B,n,T]`.
pub fn plif_layer<T: Scalar>(tape: &mut Tape<T>, current: Var, a: Var, theta: T, dynamics: Dynamics) -> Result<Var> {
    let x = tape.value(current);
    let (batch, n, t_len) = x.dims3()?;
    tape.value(a).expect_shape(&[1])?;
    x.ensure_finite("PLIF input current")?;
    let inv_tau = sigmoid(tape.value(a).data()[0]);
    let spike = SpikeFn::new(dynamics.mode, SurrogateKind::Arctan);
    let mut spikes = vec![T::zero(); x.len()];
    let mut pre = vec![T::zero(); x.len()];
    let mut post = vec![T::zero(); x.len()];
    let (mut col, mut s_col, mut h_col) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    for b in 0..batch {
        let mut state = NeuronState::new(n);
        for t in 0..t_len {
            column(x.data(), b, n, t_len, t, &mut col);
            plif_column(&mut state, &col, inv_tau, theta, &spike, &mut s_col, Some(&mut h_col));
            scatter(&s_col, b, n, t_len, t, &mut spikes);
            scatter(&h_col, b, n, t_len, t, &mut pre);
            scatter(&state.u, b, n, t_len, t, &mut post);
        }
    }
    let out = Array::new(&[batch, n, t_len], spikes)?;
    Ok(tape.push(
        out,
        vec![current, a],
        Box::new(PlifLayerFn {
            theta,
            spike,
            detach_reset: dynamics.detach_reset,
            pre_reset: pre,
            post_reset: post,
        }),
    ))
}

struct AlifLayerFn<T> {
    b0: T,
    beta: T,
    spike: SpikeFn,
    detach_reset: bool,
    potential: Vec<T>,
    eta: Vec<T>,
    current: Vec<T>,
}

impl<T: Scalar> Function<T> for AlifLayerFn<T> {
    fn name(&self) -> &'static str {
        "alif_recurrent_layer"
    }

    fn backward(&self, inputs: &[&Array<T>], output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let (ff, w_rec, tau_m, tau_adp) = (inputs[0], inputs[1], inputs[2], inputs[3]);
        let (batch, n, t_len) = ff.dims3().unwrap();
        let (sd, gd, wd) = (output.data(), grad.data(), w_rec.data());
        let alpha: Vec<T> = tau_m.data().iter().map(|&tau| (-T::one() / tau).exp()).collect();
        let rho: Vec<T> = tau_adp.data().iter().map(|&tau| (-T::one() / tau).exp()).collect();

        let mut d_ff = vec![T::zero(); ff.len()];
        let mut d_w = vec![T::zero(); wd.len()];
        let mut d_alpha = vec![T::zero(); n];
        let mut d_rho = vec![T::zero(); n];
        let mut carry_u = vec![T::zero(); n];
        let mut carry_eta = vec![T::zero(); n];
        let mut gs_future = vec![T::zero(); n];
        let mut gs_next = vec![T::zero(); n];
        let mut d_i = vec![T::zero(); n];
        let mut s_prev = vec![T::zero(); n];

        let at = |b: usize, j: usize, t: usize| (b * n + j) * t_len + t;
        for b in 0..batch {
            carry_u.fill(T::zero());
            carry_eta.fill(T::zero());
            gs_future.fill(T::zero());
            for t in (0..t_len).rev() {
                gs_next.fill(T::zero());
                for j in 0..n {
                    s_prev[j] = if t > 0 { sd[at(b, j, t - 1)] } else { T::zero() };
                }
                for j in 0..n {
                    let idx = at(b, j, t);
                    let (u, eta) = (self.potential[idx], self.eta[idx]);
                    let theta = self.b0 + self.beta * eta;
                    let (u_prev, eta_prev) = if t > 0 {
                        (self.potential[idx - 1], self.eta[idx - 1])
                    } else {
                        (T::zero(), T::zero())
                    };
                    let gs = gd[idx] + gs_future[j];
                    let dv = gs * self.spike.grad(u - theta);
                    let du = dv + carry_u[j];
                    let dtheta = -dv - s_prev[j] * du;
                    let deta = self.beta * dtheta + carry_eta[j];
                    d_alpha[j] += du * (u_prev - self.current[idx]);
                    d_rho[j] += deta * (eta_prev - s_prev[j]);
                    d_i[j] = du * (T::one() - alpha[j]);
                    d_ff[idx] = d_i[j];
                    carry_u[j] = alpha[j] * du;
                    carry_eta[j] = rho[j] * deta;
                    gs_next[j] += (T::one() - rho[j]) * deta;
                    if !self.detach_reset {
                        gs_next[j] -= theta * du;
                    }
                }
                if t > 0 {
                    for j in 0..n {
                        if d_i[j].is_zero() {
                            continue;
                        }
                        for i in 0..n {
                            d_w[j * n + i] += d_i[j] * s_prev[i];
                            gs_next[i] += wd[j * n + i] * d_i[j];
                        }
                    }
                }
                std::mem::swap(&mut gs_future, &mut gs_next);
            }
        }
        let d_tau_m: Vec<T> = (0..n)
            .map(|j| d_alpha[j] * alpha[j] / (tau_m.data()[j] * tau_m.data()[j]))
            .collect();
        let d_tau_adp: Vec<T> = (0..n)
            .map(|j| d_rho[j] * rho[j] / (tau_adp.data()[j] * tau_adp.data()[j]))
            .collect();
        vec![
            Some(Array::new(ff.shape(), d_ff).unwrap()),
            Some(Array::new(w_rec.shape(), d_w).unwrap()),
            Some(Array::new(&[n], d_tau_m).unwrap()),
            Some(Array::new(&[n], d_tau_adp).unwrap()),
        ]
    }
}

/// Recurrent ALIF layer over a sequence.
///
/// `feed_forward[B,n,T]` is the input current without recurrence; each step
/// adds `w_rec[n,n] * s_{t-1}` and advances the neurons with per-neuron
/// `tau_m[n]`, `tau_adp[n]`.
pub fn alif_recurrent_layer<T: Scalar>(
    tape: &mut Tape<T>,
    feed_forward: Var,
    w_rec: Var,
    tau_m: Var,
    tau_adp: Var,
    b0: T,
    beta: T,
    dynamics: Dynamics,
) -> Result<Var> {
    let x = tape.value(feed_forward);
    let (batch, n, t_len) = x.dims3()?;
    tape.value(w_rec).expect_shape(&[n, n])?;
    tape.value(tau_m).expect_shape(&[n])?;
    tape.value(tau_adp).expect_shape(&[n])?;
    x.ensure_finite("ALIF input current")?;
    let params = AlifParams {
        tau_m: tape.value(tau_m).data().to_vec(),
        tau_adp: tape.value(tau_adp).data().to_vec(),
        b0,
        beta,
    };
    let alpha: Vec<T> = (0..n).map(|j| params.alpha(j)).collect();
    let rho: Vec<T> = (0..n).map(|j| params.rho(j)).collect();
    let spike = SpikeFn::new(dynamics.mode, SurrogateKind::MultiGaussian);
    let w = tape.value(w_rec).data();

    let mut spikes = vec![T::zero(); x.len()];
    let mut potential = vec![T::zero(); x.len()];
    let mut eta = vec![T::zero(); x.len()];
    let mut current = vec![T::zero(); x.len()];
    let (mut col, mut i_col) = (vec![T::zero(); n], vec![T::zero(); n]);
    for b in 0..batch {
        let mut state = NeuronState::new(n);
        for t in 0..t_len {
            column(x.data(), b, n, t_len, t, &mut col);
            recurrent_current(&col, w, &state.s_prev, &mut i_col);
            for j in 0..n {
                alif_update(&mut state, j, i_col[j], alpha[j], rho[j], b0, beta, &spike);
            }
            scatter(&state.s_prev, b, n, t_len, t, &mut spikes);
            scatter(&state.u, b, n, t_len, t, &mut potential);
            scatter(&state.eta, b, n, t_len, t, &mut eta);
            scatter(&i_col, b, n, t_len, t, &mut current);
        }
    }
    let out = Array::new(&[batch, n, t_len], spikes)?;
    Ok(tape.push(
        out,
        vec![feed_forward, w_rec, tau_m, tau_adp],
        Box::new(AlifLayerFn {
            b0,
            beta,
            spike,
            detach_reset: dynamics.detach_reset,
            potential,
            eta,
            current,
        }),
    ))
}

struct LeakyIntegratorFn;

impl<T: Scalar> Function<T> for LeakyIntegratorFn {
    fn name(&self) -> &'static str {
        "leaky_integrator"
    }

    fn backward(&self, inputs: &[&Array<T>], output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let (x, tau) = (inputs[0], inputs[1].data()[0]);
        let (batch, n, t_len) = x.dims3().unwrap();
        let c = T::one() / tau;
        let (xd, ud, gd) = (x.data(), output.data(), grad.data());
        let mut dx = vec![T::zero(); xd.len()];
        let mut dc = T::zero();
        for row in 0..batch * n {
            let base = row * t_len;
            let mut carry = T::zero();
            for t in (0..t_len).rev() {
                let du = gd[base + t] + carry;
                let u_prev = if t > 0 { ud[base + t - 1] } else { T::zero() };
                dx[base + t] = c * du;
                dc += du * (xd[base + t] - u_prev);
                carry = (T::one() - c) * du;
            }
        }
        vec![
            Some(Array::new(x.shape(), dx).unwrap()),
            Some(Array::scalar(-dc / (tau * tau))),
        ]
    }
}

/// Non-spiking leaky integrator `u_t = (1 - 1/tau) u_{t-1} + (1/tau) x_t`;
/// outputs the membrane potential every step, never fires or resets.
pub fn leaky_integrator<T: Scalar>(tape: &mut Tape<T>, x: Var, tau: Var) -> Result<Var> {
    let xv = tape.value(x);
    let (_, _, t_len) = xv.dims3()?;
    tape.value(tau).expect_shape(&[1])?;
    let c = T::one() / tape.value(tau).data()[0];
    let mut out = vec![T::zero(); xv.len()];
    for (row, chunk) in xv.data().chunks(t_len.max(1)).enumerate() {
        let mut u = T::zero();
        for (t, &v) in chunk.iter().enumerate() {
            u = leaky_charge(u, v, c);
            out[row * t_len + t] = u;
        }
    }
    let out = Array::new(xv.shape(), out)?;
    Ok(tape.push(out, vec![x, tau], Box::new(LeakyIntegratorFn)))
}
