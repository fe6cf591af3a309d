//! Architecture assembly, layer-wise training and inference replay.

mod config;
mod weights;

pub use config::NetworkConfig;
pub use weights::{LayerWeights, WeightsFile, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::{downsample_half, EventStream, Flips};
use crate::layers::{Layer, LayerKind, Learning, Shape, StepMode};
use crate::plasticity::RuleKind;

#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

/// Training data and stopping rule for one layer.
#[derive(Debug, Clone)]
pub struct TrainSchedule {
    pub data: Vec<EventStream>,
    pub max_presentations: usize,
    pub seed: u64,
    pub rule: RuleKind,
    /// When false, the full presentation budget is used regardless of the
    /// convergence metric.
    pub stop_at_convergence: bool,
}

impl TrainSchedule {
    pub fn new(data: Vec<EventStream>, max_presentations: usize, seed: u64) -> Self {
        TrainSchedule {
            data,
            max_presentations,
            seed,
            rule: RuleKind::Ours,
            stop_at_convergence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub presentations: usize,
    pub steps: u64,
    pub converged: bool,
    /// Convergence metric of every postsynaptic update, in order.
    pub log: Vec<f64>,
    /// Moving average of the metric when training stopped.
    pub final_average: Option<f64>,
}

/// Activity of one layer over a replayed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub kind: LayerKind,
    pub shape: Shape,
    /// Spiking `(map, y, x)` indices per step.
    pub spikes: Vec<Vec<u32>>,
    /// Postsynaptic trace of every neuron averaged over the replay.
    pub mean_trace: Vec<f64>,
    pub final_trace: Vec<f64>,
}

impl LayerRecord {
    pub fn spike_count(&self) -> usize {
        self.spikes.iter().map(Vec::len).sum()
    }

    /// Spikes per map over the whole replay.
    pub fn map_counts(&self) -> Vec<usize> {
        let n_loc = self.shape.h * self.shape.w;
        let mut counts = vec![0; self.shape.c];
        for &i in self.spikes.iter().flatten() {
            counts[i as usize / n_loc] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRecord {
    pub dt_ms: f64,
    pub steps: usize,
    pub layers: Vec<LayerRecord>,
    /// Postsynaptic trace of the last layer at every step.
    pub output_traces: Vec<Vec<f64>>,
}

impl Network {
    pub fn build(config: NetworkConfig) -> Result<Self> {
        let shapes = config.validate()?;
        let mut input = config.input_shape();
        let mut layers = Vec::with_capacity(config.layers.len());
        for (lc, out) in config.layers.iter().zip(shapes) {
            layers.push(Layer::new(
                lc.clone(),
                input,
                config.dt_ms,
                config.stdp.w_init,
            )?);
            input = out;
        }
        let pool = if config.workers > 0 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| {
                    Error::InvalidInput(format!("cannot start {} workers: {e}", config.workers))
                })?;
            Some(Arc::new(pool))
        } else {
            None
        };
        Ok(Network {
            config,
            layers,
            pool,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut Layer {
        &mut self.layers[i]
    }

    /// Resolves a layer by index, name or kind (first match).
    pub fn find_layer(&self, selector: &str) -> Result<usize> {
        if let Ok(i) = selector.parse::<usize>() {
            if i < self.layers.len() {
                return Ok(i);
            }
            return Err(Error::InvalidInput(format!(
                "layer index {i} out of range ({} layers)",
                self.layers.len()
            )));
        }
        if let Some(i) = self.layers.iter().position(|l| l.name() == selector) {
            return Ok(i);
        }
        let kind: LayerKind = selector
            .parse()
            .map_err(|_| Error::InvalidInput(format!("no layer named `{selector}`")))?;
        self.layers
            .iter()
            .position(|l| l.kind() == kind)
            .ok_or_else(|| Error::InvalidInput(format!("no {kind} layer in the network")))
    }

    pub fn weights(&self) -> WeightsFile {
        WeightsFile {
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    kind: l.kind(),
                    delays_ms: l.config().delays_ms(),
                    kernel: l.kernel().clone(),
                })
                .collect(),
        }
    }

    /// Installs kernels from a weights file with the same architecture.
    pub fn set_weights(&mut self, w: &WeightsFile) -> Result<()> {
        if w.layers.len() != self.layers.len() {
            return Err(Error::Validation(format!(
                "weights hold {} layers, network has {}",
                w.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, lw)) in self.layers.iter_mut().zip(&w.layers).enumerate() {
            if lw.kind != layer.kind() {
                return Err(Error::Validation(format!(
                    "layer {i}: weights are {}, network has {}",
                    lw.kind,
                    layer.kind()
                )));
            }
            if lw.delays_ms != layer.config().delays_ms() {
                return Err(Error::Validation(format!(
                    "layer {i}: delays differ from the config"
                )));
            }
            layer.set_kernel(lw.kernel.clone())?;
        }
        Ok(())
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        self.weights().save(path)
    }

    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        self.set_weights(&WeightsFile::load(path)?)
    }

    /// Applies the configured downsampling and checks the resolution.
    pub fn prepare(&self, stream: &EventStream) -> Result<EventStream> {
        let s = if self.config.downsample {
            downsample_half(stream)
        } else {
            stream.clone()
        };
        if (s.width() as usize, s.height() as usize) != (self.config.width, self.config.height) {
            return Err(Error::Validation(format!(
                "stream resolution {}x{}{} does not match the network input {}x{}",
                s.width(),
                s.height(),
                if self.config.downsample {
                    " after downsampling"
                } else {
                    ""
                },
                self.config.width,
                self.config.height
            )));
        }
        Ok(s)
    }

    fn reset(&mut self) {
        self.layers.iter_mut().for_each(Layer::reset);
    }

    /// Trains layer `index` with all earlier layers frozen. Later layers do
    /// not run. Stops at convergence or after `max_presentations`.
    pub fn train_layer(&mut self, index: usize, schedule: &TrainSchedule) -> Result<TrainReport> {
        self.train_layer_observed(index, schedule, |_, _| {})
    }

    /// As [`Network::train_layer`], calling `observe(presentations, layer)`
    /// after every completed presentation.
    pub fn train_layer_observed(
        &mut self,
        index: usize,
        schedule: &TrainSchedule,
        mut observe: impl FnMut(usize, &Layer) + Send,
    ) -> Result<TrainReport> {
        let layer = self
            .layers
            .get(index)
            .ok_or_else(|| Error::InvalidInput(format!("no layer {index}")))?;
        if !layer.config().plastic {
            return Err(Error::InvalidInput(format!(
                "layer `{}` ({}) is not plastic",
                layer.name(),
                layer.kind()
            )));
        }
        if schedule.max_presentations > 0 && schedule.data.is_empty() {
            return Err(Error::InvalidInput(
                "training needs at least one event sequence".into(),
            ));
        }
        let data = schedule
            .data
            .iter()
            .map(|s| self.prepare(s))
            .collect::<Result<Vec<_>>>()?;
        let mut learning = Learning::new(schedule.rule, self.config.stdp);
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
        let window_us = self.config.presentation_ms * 1000;
        let dt_us = self.config.dt_ms * 1000.0;

        let (presentations, steps) = {
            let this = &mut *self;
            let pool = this.pool.clone();
            let run = move || {
                let mut presentations = 0;
                let mut steps = 0u64;
                let stop = schedule.stop_at_convergence;
                while presentations < schedule.max_presentations && !(stop && learning.converged())
                {
                    presentations += 1;
                    let pick = &data[rng.gen_range(0..data.len())];
                    let flips = Flips::draw(&mut rng);
                    let start = if pick.duration_us() > window_us {
                        rng.gen_range(0..=pick.duration_us() - window_us)
                    } else {
                        0
                    };
                    let clip = flips.apply(&pick.window(start, start + window_us));
                    let frames = encode_frames(&clip, dt_us, this.config.input_shape());
                    this.reset();
                    for frame in frames {
                        let mut frame = frame;
                        for (i, layer) in this.layers[..=index].iter_mut().enumerate() {
                            let mode = if i == index {
                                StepMode::Learn(&mut learning)
                            } else {
                                StepMode::Frozen
                            };
                            frame = layer.step(frame, mode).to_vec();
                        }
                        steps += 1;
                        if stop && learning.converged() {
                            break;
                        }
                    }
                    observe(presentations, &this.layers[index]);
                }
                this.reset();
                (presentations, steps, learning)
            };
            let (p, s, l) = install(pool.as_deref(), run);
            learning = l;
            (p, s)
        };
        Ok(TrainReport {
            presentations,
            steps,
            converged: learning.converged(),
            final_average: learning.moving_average(),
            log: learning.log,
        })
    }

    /// Replays `stream` through every layer with fixed weights.
    pub fn infer(&mut self, stream: &EventStream) -> Result<InferenceRecord> {
        let stream = self.prepare(stream)?;
        let dt_us = self.config.dt_ms * 1000.0;
        let frames = encode_frames(&stream, dt_us, self.config.input_shape());
        let steps = frames.len();
        let y_decay = (-self.config.dt_ms / self.config.lambda_y_ms).exp();
        let y_jump = self.config.dt_ms / self.config.lambda_y_ms;
        self.reset();
        let pool = self.pool.clone();
        let dt_ms = self.config.dt_ms;
        let layers = &mut self.layers;
        let run = move || {
            let mut records: Vec<LayerRecord> = layers
                .iter()
                .map(|l| LayerRecord {
                    name: l.name().to_string(),
                    kind: l.kind(),
                    shape: l.output_shape(),
                    spikes: Vec::with_capacity(steps),
                    mean_trace: vec![0.0; l.output_shape().len()],
                    final_trace: vec![0.0; l.output_shape().len()],
                })
                .collect();
            let mut output_traces = Vec::with_capacity(steps);
            for frame in frames {
                let mut frame = frame;
                for (layer, rec) in layers.iter_mut().zip(records.iter_mut()) {
                    frame = layer.step(frame, StepMode::Frozen).to_vec();
                    rec.final_trace.iter_mut().for_each(|y| *y *= y_decay);
                    for &i in &frame {
                        rec.final_trace[i as usize] += y_jump;
                    }
                    for (m, y) in rec.mean_trace.iter_mut().zip(&rec.final_trace) {
                        *m += y;
                    }
                    rec.spikes.push(frame.clone());
                }
                if let Some(last) = records.last() {
                    output_traces.push(last.final_trace.clone());
                }
            }
            if steps > 0 {
                for rec in records.iter_mut() {
                    rec.mean_trace.iter_mut().for_each(|m| *m /= steps as f64);
                }
            }
            InferenceRecord {
                dt_ms,
                steps,
                layers: records,
                output_traces,
            }
        };
        let record = install(pool.as_deref(), run);
        self.reset();
        Ok(record)
    }
}

fn install<T: Send>(pool: Option<&rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

/// Bins events into binary input frames, one per time step. Channel 0
/// carries ON events and channel 1 OFF events.
pub fn encode_frames(stream: &EventStream, dt_us: f64, shape: Shape) -> Vec<Vec<u32>> {
    let bin = |t: u64| (t as f64 / dt_us).floor() as usize;
    let n = (stream.duration_us() as f64 / dt_us).ceil() as usize;
    let n = stream.events().last().map_or(n, |e| n.max(bin(e.t) + 1));
    let mut frames = vec![Vec::new(); n];
    for e in stream.events() {
        frames[bin(e.t)].push(shape.index(e.p.channel(), e.y as usize, e.x as usize) as u32);
    }
    for f in frames.iter_mut() {
        f.sort_unstable();
        f.dedup();
    }
    frames
}
