//! Network description and its TOML form.
//!
//! ```toml
//! [global]
//! dt_ms = 1.0
//! width = 64
//! height = 64
//!
//! [layer.ssconv]
//! kind = "ssconv"
//! r = 7
//! f = 4
//! ```
//!
//! Layers run in section order. Omitted keys take the kind's defaults.

use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::layers::{LayerConfig, LayerKind, Shape};
use crate::neuron::SpikeInput;
use crate::plasticity::StdpParams;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub dt_ms: f64,
    pub seed: u64,
    /// Network input resolution, after optional downsampling.
    pub width: usize,
    pub height: usize,
    pub stdp: StdpParams,
    /// Length of one training presentation.
    pub presentation_ms: u64,
    /// Halve incoming streams before presenting them.
    pub downsample: bool,
    /// Time constant of the postsynaptic readout trace.
    pub lambda_y_ms: f64,
    /// Rayon worker count; 0 uses the global pool.
    pub workers: usize,
    pub layers: Vec<LayerConfig>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            dt_ms: 1.0,
            seed: 0,
            width: 64,
            height: 64,
            stdp: StdpParams::default(),
            presentation_ms: 500,
            downsample: false,
            lambda_y_ms: 5.0,
            workers: 0,
            layers: Vec::new(),
        }
    }
}

const GLOBAL_KEYS: &[&str] = &[
    "dt_ms",
    "seed",
    "width",
    "height",
    "eta",
    "a",
    "w_init",
    "l_th",
    "window",
    "presentation_ms",
    "downsample",
    "lambda_y_ms",
    "workers",
];

const LAYER_KEYS: &[&str] = &[
    "kind",
    "r",
    "s",
    "f",
    "m",
    "tau_min_ms",
    "tau_max_ms",
    "beta",
    "v_th",
    "v_rest",
    "v_reset",
    "lambda_v_ms",
    "lambda_x_ms",
    "alpha",
    "refr_ms",
    "spike_input",
    "plastic",
];

impl NetworkConfig {
    /// Five-layer checkerboard architecture on a 64x64 input.
    pub fn checkerboard() -> Self {
        let mut ss = LayerConfig::new("ssconv", LayerKind::SSConv);
        ss.r = 7;
        ss.f = 4;
        ss.neuron.alpha = 0.4;

        let merge = LayerConfig::new("merge", LayerKind::Merge);

        let mut ms = LayerConfig::new("msconv", LayerKind::MSConv);
        ms.r = 7;
        ms.s = 2;
        ms.f = 16;
        ms.m = 10;
        ms.tau_max_ms = 50.0;
        ms.beta = 0.5;
        ms.neuron.alpha = 0.25;

        let mut pool = LayerConfig::new("pooling", LayerKind::Pooling);
        pool.r = 8;
        pool.s = 8;
        pool.f = 16;

        let mut dense = LayerConfig::new("dense", LayerKind::Dense);
        dense.f = 16;
        dense.neuron.alpha = 0.25;

        let mut layers = vec![ss, merge, ms, pool, dense];
        for l in &mut layers {
            l.neuron.spike_input = SpikeInput::Impulse;
        }
        NetworkConfig {
            layers,
            ..Default::default()
        }
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(2, self.height, self.width)
    }

    /// Checks every parameter and the layer shape chain. Returns the output
    /// shape of each layer.
    pub fn validate(&self) -> Result<Vec<Shape>> {
        let g = |field: &str, msg: String| Err(Error::config("global", field, msg));
        if !(self.dt_ms > 0.0 && self.dt_ms.is_finite()) {
            return g("dt_ms", format!("must be positive, got {}", self.dt_ms));
        }
        if self.width == 0 || self.height == 0 {
            return g(
                "width",
                format!(
                    "resolution must be non-zero, got {}x{}",
                    self.width, self.height
                ),
            );
        }
        if let Some((field, msg)) = self.stdp.invalid_field() {
            return g(field, msg);
        }
        if self.presentation_ms == 0 {
            return g("presentation_ms", "must be positive".into());
        }
        if !(self.lambda_y_ms > 0.0) {
            return g(
                "lambda_y_ms",
                format!("must be positive, got {}", self.lambda_y_ms),
            );
        }
        if self.layers.is_empty() {
            return Err(Error::config(
                "layer",
                "-",
                "at least one layer is required",
            ));
        }
        let mut shape = self.input_shape();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.validate(shape)?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses the TOML form; `origin` only labels syntax errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                msg: e.message().to_string(),
            }
        })?;
        let mut cfg = NetworkConfig::default();
        for (key, value) in &table {
            match key.as_str() {
                "global" => cfg.read_global(as_table(value, "global", "-")?)?,
                "layer" => {
                    for (name, body) in as_table(value, "layer", "-")? {
                        let section = format!("layer.{name}");
                        cfg.layers
                            .push(read_layer(name, as_table(body, &section, "-")?)?);
                    }
                }
                other => {
                    return Err(Error::config(
                        other,
                        "-",
                        "unknown section (expected [global] or [layer.<name>])",
                    ))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn read_global(&mut self, t: &Table) -> Result<()> {
        let r = Reader {
            section: "global",
            table: t,
        };
        r.reject_unknown(GLOBAL_KEYS)?;
        r.f64("dt_ms", &mut self.dt_ms)?;
        r.u64("seed", &mut self.seed)?;
        r.usize("width", &mut self.width)?;
        r.usize("height", &mut self.height)?;
        r.f64("eta", &mut self.stdp.eta)?;
        r.f64("a", &mut self.stdp.a)?;
        r.f64("w_init", &mut self.stdp.w_init)?;
        r.f64("l_th", &mut self.stdp.l_th)?;
        r.usize("window", &mut self.stdp.window)?;
        r.u64("presentation_ms", &mut self.presentation_ms)?;
        r.bool("downsample", &mut self.downsample)?;
        r.f64("lambda_y_ms", &mut self.lambda_y_ms)?;
        r.usize("workers", &mut self.workers)?;
        Ok(())
    }
}

fn read_layer(name: &str, t: &Table) -> Result<LayerConfig> {
    let section = format!("layer.{name}");
    let r = Reader {
        section: &section,
        table: t,
    };
    r.reject_unknown(LAYER_KEYS)?;
    let kind_str = match t.get("kind") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(Error::config(&section, "kind", "must be a string")),
        None => return Err(Error::config(&section, "kind", "missing")),
    };
    let kind: LayerKind = kind_str
        .parse()
        .map_err(|_| Error::config(&section, "kind", format!("unknown layer kind `{kind_str}`")))?;
    let mut c = LayerConfig::new(name, kind);
    r.usize("r", &mut c.r)?;
    r.usize("s", &mut c.s)?;
    r.usize("f", &mut c.f)?;
    r.usize("m", &mut c.m)?;
    r.f64("tau_min_ms", &mut c.tau_min_ms)?;
    c.tau_max_ms = c.tau_min_ms;
    r.f64("tau_max_ms", &mut c.tau_max_ms)?;
    r.f64("beta", &mut c.beta)?;
    r.f64("v_th", &mut c.neuron.v_th)?;
    r.f64("v_rest", &mut c.neuron.v_rest)?;
    r.f64("v_reset", &mut c.neuron.v_reset)?;
    r.f64("lambda_v_ms", &mut c.neuron.lambda_v_ms)?;
    r.f64("lambda_x_ms", &mut c.neuron.lambda_x_ms)?;
    r.f64("alpha", &mut c.neuron.alpha)?;
    r.f64("refr_ms", &mut c.neuron.refr_ms)?;
    if let Some(v) = t.get("spike_input") {
        let name = v
            .as_str()
            .ok_or_else(|| r.err("spike_input", "must be a string"))?;
        c.neuron.spike_input = name
            .parse()
            .map_err(|_| r.err("spike_input", "must be `current` or `impulse`"))?;
    }
    r.bool("plastic", &mut c.plastic)?;
    Ok(c)
}

fn as_table<'a>(v: &'a Value, section: &str, field: &str) -> Result<&'a Table> {
    v.as_table()
        .ok_or_else(|| Error::config(section, field, "expected a table"))
}

struct Reader<'a> {
    section: &'a str,
    table: &'a Table,
}

impl Reader<'_> {
    fn err(&self, field: &str, msg: impl Into<String>) -> Error {
        Error::config(self.section, field, msg)
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.table.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(self.err(k, "unknown key")),
            None => Ok(()),
        }
    }

    fn f64(&self, key: &str, out: &mut f64) -> Result<()> {
        match self.table.get(key) {
            None => Ok(()),
            Some(Value::Float(v)) => {
                *out = *v;
                Ok(())
            }
            Some(Value::Integer(v)) => {
                *out = *v as f64;
                Ok(())
            }
            Some(_) => Err(self.err(key, "must be a number")),
        }
    }

    fn u64(&self, key: &str, out: &mut u64) -> Result<()> {
        match self.table.get(key) {
            None => Ok(()),
            Some(Value::Integer(v)) if *v >= 0 => {
                *out = *v as u64;
                Ok(())
            }
            Some(_) => Err(self.err(key, "must be a non-negative integer")),
        }
    }

    fn usize(&self, key: &str, out: &mut usize) -> Result<()> {
        let mut v = *out as u64;
        self.u64(key, &mut v)?;
        *out = v as usize;
        Ok(())
    }

    fn bool(&self, key: &str, out: &mut bool) -> Result<()> {
        match self.table.get(key) {
            None => Ok(()),
            Some(Value::Boolean(v)) => {
                *out = *v;
                Ok(())
            }
            Some(_) => Err(self.err(key, "must be true or false")),
        }
    }
}
