//! Trace-based stable STDP, its closed-form equilibrium, the convergence
//! metric, and two reference rules used for comparison studies.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdpParams {
    pub eta: f64,
    pub a: f64,
    pub w_init: f64,
    pub l_th: f64,
    /// Number of postsynaptic updates averaged by the stop rule.
    pub window: usize,
}

impl Default for StdpParams {
    fn default() -> Self {
        StdpParams {
            eta: 1e-4,
            a: 0.0,
            w_init: 0.5,
            l_th: 5e-2,
            window: 200,
        }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        match self.invalid_field() {
            Some((field, msg)) => Err(Error::Validation(format!("{field}: {msg}"))),
            None => Ok(()),
        }
    }

    /// First out-of-range field with a description of the problem.
    pub fn invalid_field(&self) -> Option<(&'static str, String)> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Some(("eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.a < 1.0) {
            return Some(("a", format!("must be below 1, got {}", self.a)));
        }
        if !self.w_init.is_finite() {
            return Some(("w_init", "must be finite".into()));
        }
        if !(self.l_th > 0.0) {
            return Some(("l_th", format!("must be positive, got {}", self.l_th)));
        }
        if self.window == 0 {
            return Some(("window", "must be non-zero".into()));
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RuleKind {
    #[default]
    Ours,
    Kheradpisheh,
    Shrestha,
}

impl RuleKind {
    pub const ALL: [RuleKind; 3] = [RuleKind::Ours, RuleKind::Kheradpisheh, RuleKind::Shrestha];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Ours => "ours",
            RuleKind::Kheradpisheh => "kheradpisheh",
            RuleKind::Shrestha => "shrestha",
        }
    }

    /// Weight change of one synapse under this rule.
    pub fn delta(self, w: f64, xhat: f64, params: &StdpParams, w_init: f64) -> f64 {
        match self {
            RuleKind::Ours => stdp_delta(w, xhat, params.eta, params.a, w_init),
            RuleKind::Kheradpisheh | RuleKind::Shrestha => {
                comparison_delta(self, w, Eligibility::from_trace(xhat), params.eta, w_init)
            }
        }
    }

    /// Range the rule keeps weights in, applied after every update.
    pub fn clamp(self, w: f64) -> f64 {
        match self {
            RuleKind::Kheradpisheh => w.clamp(0.0, 1.0),
            _ => w,
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown rule `{s}` (expected ours, kheradpisheh or shrestha)"
                ))
            })
    }
}

/// `X / max(X)`, or all zeros when the maximum is not positive.
pub fn normalize_traces(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    normalize_into(x, &mut out);
    out
}

pub fn normalize_into(x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), out.len());
    let max = x.iter().copied().fold(0.0_f64, f64::max);
    if max > 0.0 {
        out.iter_mut().zip(x).for_each(|(o, &v)| *o = v / max);
    } else {
        out.fill(0.0);
    }
}

#[inline]
pub fn stdp_delta(w: f64, xhat: f64, eta: f64, a: f64, w_init: f64) -> f64 {
    let dw = w - w_init;
    eta * ((-dw).exp() * (xhat.exp() - a) - dw.exp() * ((1.0 - xhat).exp() - a))
}

/// Elementwise update for one postsynaptic neuron, using `params.w_init`.
pub fn stdp_update(w: &[f64], xhat: &[f64], params: &StdpParams) -> Result<Vec<f64>> {
    check_len(w.len(), xhat.len())?;
    Ok(w.iter()
        .zip(xhat)
        .map(|(&w, &x)| stdp_delta(w, x, params.eta, params.a, params.w_init))
        .collect())
}

/// Weight at which potentiation and depression balance for a fixed `xhat`.
pub fn equilibrium_weight(xhat: f64, a: f64, w_init: f64) -> f64 {
    0.5 * ((xhat.exp() - a) / ((1.0 - xhat).exp() - a)).ln() + w_init
}

/// Mean squared difference between normalized traces and normalized weights.
pub fn convergence_metric(xhat: &[f64], w_hat: &[f64]) -> Result<f64> {
    check_len(xhat.len(), w_hat.len())?;
    if xhat.is_empty() {
        return Err(Error::InvalidInput(
            "convergence metric of an empty synapse set".into(),
        ));
    }
    let sum: f64 = xhat.iter().zip(w_hat).map(|(x, w)| (x - w) * (x - w)).sum();
    Ok(sum / xhat.len() as f64)
}

/// `W / max(W)`, or all zeros when no weight is positive.
pub fn normalize_weights(w: &[f64]) -> Vec<f64> {
    normalize_traces(w)
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: {a} vs {b} synapses"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eligibility {
    Potentiate,
    Depress,
}

impl Eligibility {
    /// Recent presynaptic activity (normalized trace at least one half) potentiates.
    pub fn from_trace(xhat: f64) -> Self {
        if xhat >= 0.5 {
            Eligibility::Potentiate
        } else {
            Eligibility::Depress
        }
    }

    fn sign(self) -> f64 {
        match self {
            Eligibility::Potentiate => 1.0,
            Eligibility::Depress => -1.0,
        }
    }
}

fn comparison_delta(rule: RuleKind, w: f64, e: Eligibility, eta: f64, w_init: f64) -> f64 {
    match (rule, e) {
        (RuleKind::Kheradpisheh, _) => e.sign() * eta * w * (1.0 - w),
        (RuleKind::Shrestha, Eligibility::Potentiate) => eta * (-(w - w_init)).exp(),
        (RuleKind::Shrestha, Eligibility::Depress) => -eta * (w - w_init).exp(),
        (RuleKind::Ours, _) => unreachable!("handled by the caller"),
    }
}

/// Elementwise update of a reference rule driven by binary eligibility.
pub fn comparison_update(
    rule: RuleKind,
    w: &[f64],
    eligibility: &[Eligibility],
    params: &StdpParams,
) -> Result<Vec<f64>> {
    if rule == RuleKind::Ours {
        return Err(Error::InvalidInput(
            "rule `ours` is trace-driven and has no eligibility form".into(),
        ));
    }
    check_len(w.len(), eligibility.len())?;
    Ok(w.iter()
        .zip(eligibility)
        .map(|(&w, &e)| comparison_delta(rule, w, e, params.eta, params.w_init))
        .collect())
}

/// Mean over the most recent `window` samples.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: usize,
    samples: VecDeque<f64>,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "moving-average window must be non-zero");
        MovingAverage {
            window,
            samples: VecDeque::with_capacity(window),
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back(value);
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.window
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Summed in insertion order so the value is reproducible.
    pub fn mean(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        Some(self.samples.iter().sum::<f64>() / self.samples.len() as f64)
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}
