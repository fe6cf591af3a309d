//! Layer types, their configuration and the clocked layer engine.
//!
//! Every layer is a (possibly degenerate) convolution: a dense layer is a
//! convolution whose kernel covers the whole input and whose output grid is
//! a single location with one map per neuron.

mod engine;
mod forcing;
mod kernel;
mod wta;

pub use engine::{Layer, Learning, StepMode};
pub use forcing::{
    forcing_dense, forcing_merge, forcing_msconv, forcing_pooling, forcing_ssconv, neighborhood_max,
};
pub use kernel::{export_kernels, ExportFormat, Kernel};
pub use wta::{shared_kernel_update, wta_resolve, Candidate, WtaOutcome, WtaPolicy};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::neuron::NeuronParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    SSConv,
    Merge,
    MSConv,
    Pooling,
    Dense,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Input,
        LayerKind::SSConv,
        LayerKind::Merge,
        LayerKind::MSConv,
        LayerKind::Pooling,
        LayerKind::Dense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::SSConv => "ssconv",
            LayerKind::Merge => "merge",
            LayerKind::MSConv => "msconv",
            LayerKind::Pooling => "pooling",
            LayerKind::Dense => "dense",
        }
    }

    /// Tag used in weight files.
    pub fn tag(self) -> u8 {
        match self {
            LayerKind::Input => 0,
            LayerKind::SSConv => 1,
            LayerKind::Merge => 2,
            LayerKind::MSConv => 3,
            LayerKind::Pooling => 4,
            LayerKind::Dense => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        LayerKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Kinds with learnable kernels. These also run WTA competition.
    pub fn is_learnable(self) -> bool {
        matches!(
            self,
            LayerKind::SSConv | LayerKind::MSConv | LayerKind::Dense
        )
    }

    /// Kinds whose forcing includes the trace homeostasis term.
    pub fn has_homeostasis(self) -> bool {
        self.is_learnable()
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown layer kind `{s}`")))
    }
}

/// Channel-major grid dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Shape { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.h + y) * self.w + x
    }

    #[inline]
    pub fn decode(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.w;
        let y = (i / self.w) % self.h;
        (i / (self.w * self.h), y, x)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.w, self.h, self.c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerConfig {
    pub name: String,
    pub kind: LayerKind,
    /// Receptive-field side; ignored for dense layers, which see the whole input.
    pub r: usize,
    pub s: usize,
    pub f: usize,
    pub m: usize,
    pub tau_min_ms: f64,
    pub tau_max_ms: f64,
    pub beta: f64,
    pub neuron: NeuronParams,
    pub plastic: bool,
}

impl LayerConfig {
    /// Defaults for a kind: unit delays, plastic exactly when learnable, and
    /// near pass-through neurons without traces for merge and pooling.
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        let relay = !kind.is_learnable();
        LayerConfig {
            name: name.into(),
            kind,
            r: 1,
            s: 1,
            f: 1,
            m: 1,
            tau_min_ms: 1.0,
            tau_max_ms: 1.0,
            beta: if kind == LayerKind::MSConv { 0.5 } else { 0.0 },
            neuron: if relay {
                NeuronParams {
                    v_th: 0.001,
                    alpha: 0.0,
                    ..NeuronParams::default()
                }
            } else {
                NeuronParams::default()
            },
            plastic: kind.is_learnable(),
        }
    }

    fn section(&self) -> String {
        format!("layer.{}", self.name)
    }

    fn err(&self, field: &str, msg: impl Into<String>) -> Error {
        Error::config(self.section(), field, msg)
    }

    /// `m` delays spread evenly over `[tau_min, tau_max]`.
    pub fn delays_ms(&self) -> Vec<f64> {
        if self.m <= 1 {
            return vec![self.tau_min_ms];
        }
        let step = (self.tau_max_ms - self.tau_min_ms) / (self.m - 1) as f64;
        (0..self.m)
            .map(|d| self.tau_min_ms + step * d as f64)
            .collect()
    }

    /// Kernel extent `(kh, kw)` for a given input.
    pub fn kernel_extent(&self, input: Shape) -> (usize, usize) {
        match self.kind {
            LayerKind::Dense => (input.h, input.w),
            _ => (self.r, self.r),
        }
    }

    pub fn stride(&self) -> usize {
        match self.kind {
            LayerKind::Dense => 1,
            _ => self.s,
        }
    }

    /// Chebyshev radius of cross-map inhibition while the layer learns.
    pub fn learning_radius(&self, input: Shape) -> usize {
        let (kh, kw) = self.kernel_extent(input);
        kh.max(kw) / 2
    }

    /// Checks parameter ranges against the incoming shape and returns the
    /// output shape. Errors name the offending field.
    pub fn validate(&self, input: Shape) -> Result<Shape> {
        let kind = self.kind;
        if kind == LayerKind::Input {
            return Err(self.err(
                "kind",
                "the input layer is implicit and cannot be configured",
            ));
        }
        if let Some((field, msg)) = self.neuron.invalid_field() {
            return Err(self.err(field, msg));
        }
        if self.f == 0 {
            return Err(self.err("f", "map count must be positive"));
        }
        if self.m == 0 {
            return Err(self.err("m", "synapses per connection must be positive"));
        }
        match kind {
            LayerKind::MSConv if self.m < 2 => {
                return Err(self.err("m", "multisynaptic layers need m > 1"));
            }
            LayerKind::SSConv | LayerKind::Merge | LayerKind::Pooling | LayerKind::Dense
                if self.m != 1 =>
            {
                return Err(self.err("m", format!("{kind} layers are single-synaptic (m = 1)")));
            }
            _ => {}
        }
        if !(self.tau_min_ms > 0.0 && self.tau_min_ms.is_finite()) {
            return Err(self.err("tau_min_ms", "delay must be positive"));
        }
        if self.m > 1 && !(self.tau_max_ms > self.tau_min_ms) {
            return Err(self.err("tau_max_ms", "must exceed tau_min_ms when m > 1"));
        }
        if self.m == 1 && self.tau_max_ms != self.tau_min_ms {
            return Err(self.err("tau_max_ms", "must equal tau_min_ms when m = 1"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(self.err("beta", format!("must lie in [0, 1], got {}", self.beta)));
        }
        if kind != LayerKind::MSConv && self.beta != 0.0 {
            return Err(self.err("beta", "only multisynaptic layers carry inhibitory weights"));
        }
        if self.plastic && !kind.is_learnable() {
            return Err(self.err("plastic", format!("{kind} connections are fixed")));
        }
        match kind {
            LayerKind::Merge => {
                if self.r != 1 || self.s != 1 {
                    return Err(self.err("r", "merge layers use a 1x1 kernel with stride 1"));
                }
                if self.f != 1 {
                    return Err(self.err("f", "merge layers produce a single map"));
                }
            }
            LayerKind::Pooling => {
                if self.s != self.r {
                    return Err(self.err("s", "pooling fields must not overlap (s = r)"));
                }
                if self.f != input.c {
                    return Err(self.err(
                        "f",
                        format!(
                            "pooling keeps the {} incoming maps, got {}",
                            input.c, self.f
                        ),
                    ));
                }
            }
            _ => {}
        }
        if kind != LayerKind::Dense {
            if self.r == 0 {
                return Err(self.err("r", "receptive field must be positive"));
            }
            if self.s == 0 {
                return Err(self.err("s", "stride must be positive"));
            }
            if self.r > input.h || self.r > input.w {
                return Err(self.err(
                    "r",
                    format!(
                        "receptive field {} exceeds the {}x{} input",
                        self.r, input.w, input.h
                    ),
                ));
            }
        }
        let (kh, kw) = self.kernel_extent(input);
        let s = self.stride();
        Ok(Shape::new(
            self.f,
            (input.h - kh) / s + 1,
            (input.w - kw) / s + 1,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_are_linearly_spaced() {
        let mut c = LayerConfig::new("ms", LayerKind::MSConv);
        c.m = 10;
        c.tau_max_ms = 50.0;
        let d = c.delays_ms();
        assert_eq!(d.len(), 10);
        assert_eq!(d[0], 1.0);
        assert_eq!(d[9], 50.0);
        let steps: Vec<usize> = d
            .iter()
            .map(|&t| crate::neuron::delay_steps(t, 1.0))
            .collect();
        assert_eq!(steps, vec![1, 6, 12, 17, 23, 28, 34, 39, 45, 50]);
    }

    #[test]
    fn valid_placement_output_size() {
        let mut c = LayerConfig::new("ss", LayerKind::SSConv);
        c.r = 7;
        c.f = 4;
        assert_eq!(
            c.validate(Shape::new(2, 64, 64)).unwrap(),
            Shape::new(4, 58, 58)
        );
        c.s = 2;
        assert_eq!(
            c.validate(Shape::new(1, 58, 58)).unwrap(),
            Shape::new(4, 26, 26)
        );
    }

    #[test]
    fn pooling_overlap_is_rejected() {
        let mut c = LayerConfig::new("pool", LayerKind::Pooling);
        c.r = 8;
        c.s = 4;
        c.f = 16;
        match c.validate(Shape::new(16, 26, 26)).unwrap_err() {
            Error::Config { section, field, .. } => {
                assert_eq!(section, "layer.pool");
                assert_eq!(field, "s");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn neuron_errors_name_the_field() {
        let mut c = LayerConfig::new("ss", LayerKind::SSConv);
        c.neuron.lambda_v_ms = 0.0;
        match c.validate(Shape::new(2, 8, 8)).unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "lambda_v_ms"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dense_covers_whole_input() {
        let mut c = LayerConfig::new("dense", LayerKind::Dense);
        c.f = 16;
        let input = Shape::new(16, 3, 3);
        assert_eq!(c.validate(input).unwrap(), Shape::new(16, 1, 1));
        assert_eq!(c.kernel_extent(input), (3, 3));
    }

    #[test]
    fn kind_names_and_tags_round_trip() {
        for k in LayerKind::ALL {
            assert_eq!(k.name().parse::<LayerKind>().unwrap(), k);
            assert_eq!(LayerKind::from_tag(k.tag()), Some(k));
        }
        assert_eq!("SS-Conv".parse::<LayerKind>().unwrap(), LayerKind::SSConv);
    }

    #[test]
    fn shape_index_round_trip() {
        let s = Shape::new(3, 4, 5);
        for i in 0..s.len() {
            let (c, y, x) = s.decode(i);
            assert_eq!(s.index(c, y, x), i);
        }
    }
}
