//! Adaptive leaky integrate-and-fire dynamics.
//!
//! Time advances in fixed steps. Presynaptic traces decay exactly and jump by
//! `alpha` when a delayed spike arrives; membranes use a forward-Euler step.
//! A neuron that fires at step `n` ignores its input and stays at `v_reset`
//! until step `n + refractory_steps`.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    pub v_rest: f64,
    pub v_reset: f64,
    pub v_th: f64,
    pub lambda_v_ms: f64,
    pub refr_ms: f64,
    pub lambda_x_ms: f64,
    pub alpha: f64,
    pub spike_input: SpikeInput,
}

/// How an arriving spike enters the membrane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeInput {
    /// `W s` is part of the forcing and is scaled by `dt / lambda_v` with it.
    #[default]
    Current,
    /// Each arriving spike moves `v` by `W` at once; only the homeostasis
    /// term is integrated. Keeps the per-spike balance of excitation and
    /// trace penalty at `W : alpha * lambda_x / lambda_v`, independent of `dt`.
    Impulse,
}

impl SpikeInput {
    pub fn name(self) -> &'static str {
        match self {
            SpikeInput::Current => "current",
            SpikeInput::Impulse => "impulse",
        }
    }
}

impl std::str::FromStr for SpikeInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "current" => Ok(SpikeInput::Current),
            "impulse" => Ok(SpikeInput::Impulse),
            _ => Err(Error::InvalidInput(format!(
                "unknown spike input `{s}` (current or impulse)"
            ))),
        }
    }
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            v_rest: 0.0,
            v_reset: 0.0,
            v_th: 0.5,
            lambda_v_ms: 5.0,
            refr_ms: 3.0,
            lambda_x_ms: 5.0,
            alpha: 0.4,
            spike_input: SpikeInput::Current,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        match self.invalid_field() {
            Some((field, msg)) => Err(Error::InvalidInput(format!("{field}: {msg}"))),
            None => Ok(()),
        }
    }

    /// First out-of-range field with a description of the problem.
    pub fn invalid_field(&self) -> Option<(&'static str, String)> {
        if !(self.lambda_v_ms > 0.0) {
            return Some((
                "lambda_v_ms",
                format!("must be positive, got {}", self.lambda_v_ms),
            ));
        }
        if !(self.lambda_x_ms > 0.0) {
            return Some((
                "lambda_x_ms",
                format!("must be positive, got {}", self.lambda_x_ms),
            ));
        }
        if !(self.refr_ms >= 0.0) {
            return Some((
                "refr_ms",
                format!("must be non-negative, got {}", self.refr_ms),
            ));
        }
        if !(self.v_th > self.v_rest) {
            return Some(("v_th", format!("must exceed v_rest = {}", self.v_rest)));
        }
        if !(self.alpha >= 0.0) {
            return Some(("alpha", format!("must be non-negative, got {}", self.alpha)));
        }
        None
    }

    pub fn refractory_steps(&self, dt_ms: f64) -> u64 {
        (self.refr_ms / dt_ms).round() as u64
    }

    /// Multiplicative trace decay over one step.
    pub fn trace_decay(&self, dt_ms: f64) -> f64 {
        (-dt_ms / self.lambda_x_ms).exp()
    }
}

/// Weights and traces per (postsynaptic i, presynaptic j, delay slot d).
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseTensor {
    n_post: usize,
    n_pre: usize,
    delays_ms: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
}

impl SynapseTensor {
    pub fn new(n_post: usize, n_pre: usize, delays_ms: Vec<f64>, w_init: f64) -> Result<Self> {
        if delays_ms.is_empty() {
            return Err(Error::InvalidInput(
                "at least one delay slot is required".into(),
            ));
        }
        if delays_ms.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput(format!(
                "delays must be strictly increasing, got {delays_ms:?}"
            )));
        }
        let len = n_post * n_pre * delays_ms.len();
        Ok(SynapseTensor {
            n_post,
            n_pre,
            delays_ms,
            w: vec![w_init; len],
            x: vec![0.0; len],
        })
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    pub fn n_pre(&self) -> usize {
        self.n_pre
    }

    pub fn n_delays(&self) -> usize {
        self.delays_ms.len()
    }

    pub fn delays_ms(&self) -> &[f64] {
        &self.delays_ms
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, d: usize) -> usize {
        (i * self.n_pre + j) * self.delays_ms.len() + d
    }

    /// Exact decay over `dt_ms`, then `+alpha` for every (j, d) whose delayed
    /// presynaptic spike arrives now. `arriving` is indexed `j * m + d`.
    pub fn update_traces(&mut self, arriving: &[bool], params: &NeuronParams, dt_ms: f64) {
        let m = self.delays_ms.len();
        assert_eq!(
            arriving.len(),
            self.n_pre * m,
            "one flag per (presynaptic, delay) pair"
        );
        let decay = params.trace_decay(dt_ms);
        for post in self.x.chunks_exact_mut(self.n_pre * m) {
            decay_and_bump(post, arriving, decay, params.alpha);
        }
    }

    /// Forcing of postsynaptic `i` with its own traces as homeostasis:
    /// the sum of `W s - X` over all synapses.
    pub fn dense_forcing(&self, i: usize, arriving: &[bool]) -> f64 {
        let m = self.delays_ms.len();
        let base = i * self.n_pre * m;
        (0..self.n_pre * m)
            .map(|k| {
                let s = if arriving[k] { 1.0 } else { 0.0 };
                self.w[base + k] * s - self.x[base + k]
            })
            .sum()
    }
}

/// `x <- x * decay + alpha * s` elementwise.
#[inline]
pub fn decay_and_bump(x: &mut [f64], arriving: &[bool], decay: f64, alpha: f64) {
    for (xi, &s) in x.iter_mut().zip(arriving) {
        *xi *= decay;
        if s {
            *xi += alpha;
        }
    }
}

/// Membrane state of a grid of neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronGridState {
    pub v: Vec<f64>,
    /// First step at which each neuron integrates again.
    pub refr_until: Vec<u64>,
    pub spikes: Vec<bool>,
}

impl NeuronGridState {
    pub fn new(n: usize, params: &NeuronParams) -> Self {
        NeuronGridState {
            v: vec![params.v_rest; n],
            refr_until: vec![0; n],
            spikes: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn reset(&mut self, params: &NeuronParams) {
        self.v.fill(params.v_rest);
        self.refr_until.fill(0);
        self.spikes.fill(false);
    }

    #[inline]
    pub fn is_refractory(&self, i: usize, now: u64) -> bool {
        now < self.refr_until[i]
    }

    pub fn integrate_membrane(
        &mut self,
        forcing: &[f64],
        params: &NeuronParams,
        dt_ms: f64,
        now: u64,
    ) {
        integrate_slice(&mut self.v, &self.refr_until, forcing, params, dt_ms, now);
    }

    /// Threshold check (inclusive). Returns indices of neurons that fired.
    pub fn fire_and_reset(&mut self, params: &NeuronParams, dt_ms: f64, now: u64) -> Vec<usize> {
        let refr = params.refractory_steps(dt_ms);
        let mut fired = Vec::new();
        for i in 0..self.v.len() {
            let f = !self.is_refractory(i, now) && self.v[i] >= params.v_th;
            self.spikes[i] = f;
            if f {
                self.silence(i, params, now, refr);
                fired.push(i);
            }
        }
        fired
    }

    /// Reset to `v_reset` and start a refractory period, without spiking.
    #[inline]
    pub fn silence(&mut self, i: usize, params: &NeuronParams, now: u64, refr_steps: u64) {
        self.v[i] = params.v_reset;
        self.refr_until[i] = now + refr_steps;
    }
}

/// Forward-Euler membrane step over a slice; refractory neurons are skipped.
#[inline]
pub fn integrate_slice(
    v: &mut [f64],
    refr_until: &[u64],
    forcing: &[f64],
    params: &NeuronParams,
    dt_ms: f64,
    now: u64,
) {
    let k = dt_ms / params.lambda_v_ms;
    for ((vi, &until), &i) in v.iter_mut().zip(refr_until).zip(forcing) {
        if now >= until {
            *vi += k * (-(*vi - params.v_rest) + i);
        }
    }
}

/// Euler step of the homeostasis term plus an immediate jump of `spikes`
/// (the summed weights of arriving spikes) for non-refractory neurons.
pub fn integrate_impulse_slice(
    v: &mut [f64],
    refr_until: &[u64],
    spikes: &[f64],
    homeostasis: &[f64],
    params: &NeuronParams,
    dt_ms: f64,
    now: u64,
) {
    let k = dt_ms / params.lambda_v_ms;
    for (((vi, &until), &s), &h) in v.iter_mut().zip(refr_until).zip(spikes).zip(homeostasis) {
        if now >= until {
            *vi += k * (-(*vi - params.v_rest) - h) + s;
        }
    }
}

/// Ring of past presynaptic frames; `get(d)` is the frame pushed `d` steps ago.
#[derive(Debug, Clone)]
pub struct DelayBuffer<T> {
    frames: VecDeque<T>,
    depth: usize,
}

impl<T: Clone + Default> DelayBuffer<T> {
    pub fn new(max_delay_steps: usize) -> Self {
        let depth = max_delay_steps + 1;
        DelayBuffer {
            frames: std::iter::repeat_with(T::default).take(depth).collect(),
            depth,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Makes `frame` the delay-0 entry, discarding the oldest frame.
    pub fn push(&mut self, frame: T) {
        self.frames.pop_back();
        self.frames.push_front(frame);
    }

    pub fn get(&self, delay_steps: usize) -> &T {
        &self.frames[delay_steps]
    }

    pub fn clear(&mut self) {
        for f in self.frames.iter_mut() {
            *f = T::default();
        }
    }
}

/// Delay in whole steps, rounded to the nearest step.
pub fn delay_steps(delay_ms: f64, dt_ms: f64) -> usize {
    (delay_ms / dt_ms).round() as usize
}
