//! Clocked simulation of one layer.
//!
//! Each step: forcing and membranes are updated map-parallel from the
//! traces left by earlier steps, traces then decay and take the arriving
//! spikes, threshold crossings compete, winners spike and, when learning,
//! update their map's shared kernel.

use rayon::prelude::*;

use super::wta::{wta_resolve, Candidate, WtaOutcome, WtaPolicy};
use super::{Kernel, LayerConfig, LayerKind, Shape};
use crate::error::{Error, Result};
use crate::neuron::{
    delay_steps, integrate_impulse_slice, integrate_slice, DelayBuffer, NeuronGridState, SpikeInput,
};
use crate::plasticity::{convergence_metric, normalize_into, MovingAverage, RuleKind, StdpParams};

/// One map's forcing, membrane and refractory slices, tagged with its index.
type MapSlices<'a> = (usize, ((&'a mut [f64], &'a mut [f64]), &'a [u64]));

/// Layers with at least this many neurons integrate their maps in parallel.
const PARALLEL_MIN_NEURONS: usize = 4096;

/// Learning state of the layer being trained.
#[derive(Debug, Clone)]
pub struct Learning {
    pub rule: RuleKind,
    pub params: StdpParams,
    average: MovingAverage,
    /// Convergence metric of every postsynaptic update, in order.
    pub log: Vec<f64>,
}

impl Learning {
    pub fn new(rule: RuleKind, params: StdpParams) -> Self {
        Learning {
            rule,
            params,
            average: MovingAverage::new(params.window),
            log: Vec::new(),
        }
    }

    pub fn moving_average(&self) -> Option<f64> {
        self.average.mean()
    }

    /// The window is full and its mean is below the threshold.
    pub fn converged(&self) -> bool {
        self.average.is_full() && self.average.mean().is_some_and(|l| l < self.params.l_th)
    }

    fn record(&mut self, l: f64) {
        self.average.push(l);
        self.log.push(l);
    }
}

pub enum StepMode<'a> {
    /// Fixed weights with neuron-specific competition only.
    Frozen,
    Learn(&'a mut Learning),
}

#[derive(Debug, Clone)]
pub struct Layer {
    config: LayerConfig,
    input: Shape,
    output: Shape,
    stride: usize,
    w_init: f64,
    kernel: Kernel,
    /// `exc + beta * inh`, the weights seen by the forcing.
    w_eff: Vec<f64>,
    delay_steps: Vec<usize>,
    dt_ms: f64,
    refr_steps: u64,
    trace_decay: f64,
    tracks_traces: bool,
    buffer: DelayBuffer<Vec<u32>>,
    /// Presynaptic traces laid out `(channel, y, x, delay)`.
    traces: Vec<f64>,
    totals: Vec<f64>,
    row_sums: Vec<f64>,
    field_sums: Vec<f64>,
    homeostasis: Vec<f64>,
    state: NeuronGridState,
    forcing: Vec<f64>,
    now: u64,
    outcome: WtaOutcome,
    update_sources: Vec<usize>,
    output_frame: Vec<u32>,
}

impl Layer {
    /// A layer with initial kernels: `w_init` for plastic excitatory weights,
    /// zero for inhibitory ones and unit relay connections otherwise.
    pub fn new(config: LayerConfig, input: Shape, dt_ms: f64, w_init: f64) -> Result<Self> {
        config.validate(input)?;
        let (kh, kw) = config.kernel_extent(input);
        let m = config.m;
        let kernel = match config.kind {
            LayerKind::MSConv => Kernel::filled(config.f, input.c, kh, kw, m, w_init, Some(0.0)),
            LayerKind::SSConv | LayerKind::Dense => {
                Kernel::filled(config.f, input.c, kh, kw, m, w_init, None)
            }
            LayerKind::Merge => Kernel::filled(config.f, input.c, kh, kw, m, 1.0, None),
            LayerKind::Pooling => {
                let mut k = Kernel::filled(config.f, input.c, kh, kw, m, 0.0, None);
                for map in 0..config.f {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let i = k.index(map, map, dy, dx, 0);
                            k.exc[i] = 1.0;
                        }
                    }
                }
                k
            }
            LayerKind::Input => unreachable!("rejected by validation"),
        };
        Self::with_kernel(config, input, dt_ms, w_init, kernel)
    }

    pub fn with_kernel(
        config: LayerConfig,
        input: Shape,
        dt_ms: f64,
        w_init: f64,
        kernel: Kernel,
    ) -> Result<Self> {
        let output = config.validate(input)?;
        if !(dt_ms > 0.0) {
            return Err(Error::InvalidInput(format!(
                "time step must be positive, got {dt_ms}"
            )));
        }
        let (kh, kw) = config.kernel_extent(input);
        let expect = (
            config.f,
            input.c,
            kh,
            kw,
            config.m,
            config.kind == LayerKind::MSConv,
        );
        let got = (
            kernel.f,
            kernel.channels,
            kernel.kh,
            kernel.kw,
            kernel.m,
            kernel.inh.is_some(),
        );
        if expect != got {
            return Err(Error::Validation(format!(
                "layer `{}` expects kernel (f, channels, kh, kw, m, inhibitory) = {expect:?}, got {got:?}",
                config.name
            )));
        }
        let delay_steps: Vec<usize> = config
            .delays_ms()
            .iter()
            .map(|&t| delay_steps(t, dt_ms))
            .collect();
        let depth = delay_steps.iter().copied().max().unwrap_or(0);
        let tracks_traces = config.kind.has_homeostasis() || config.plastic;
        let n_loc = output.h * output.w;
        let mut layer = Layer {
            stride: config.stride(),
            refr_steps: config.neuron.refractory_steps(dt_ms),
            trace_decay: config.neuron.trace_decay(dt_ms),
            state: NeuronGridState::new(output.len(), &config.neuron),
            traces: if tracks_traces {
                vec![0.0; input.len() * config.m]
            } else {
                Vec::new()
            },
            totals: vec![0.0; input.h * input.w],
            row_sums: vec![0.0; input.h * output.w],
            field_sums: vec![0.0; n_loc],
            homeostasis: vec![0.0; n_loc],
            forcing: vec![0.0; output.len()],
            buffer: DelayBuffer::new(depth),
            w_eff: Vec::new(),
            config,
            input,
            output,
            w_init,
            kernel,
            delay_steps,
            dt_ms,
            tracks_traces,
            now: 0,
            outcome: WtaOutcome::default(),
            update_sources: Vec::new(),
            output_frame: Vec::new(),
        };
        layer.refresh_effective_weights();
        Ok(layer)
    }

    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    pub fn kind(&self) -> LayerKind {
        self.config.kind
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.output
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn delay_steps(&self) -> &[usize] {
        &self.delay_steps
    }

    /// Replaces the kernel, keeping the layout.
    pub fn set_kernel(&mut self, kernel: Kernel) -> Result<()> {
        if !kernel.same_layout(&self.kernel) {
            return Err(Error::Validation(format!(
                "kernel layout does not match layer `{}`",
                self.config.name
            )));
        }
        self.kernel = kernel;
        self.refresh_effective_weights();
        Ok(())
    }

    pub fn state(&self) -> &NeuronGridState {
        &self.state
    }

    /// Forcing of every neuron in the last step, laid out `(map, y, x)`.
    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    /// Competition result of the last step.
    pub fn last_outcome(&self) -> &WtaOutcome {
        &self.outcome
    }

    /// Neurons whose traces entered the last kernel update.
    pub fn last_update_sources(&self) -> &[usize] {
        &self.update_sources
    }

    /// Steps simulated since the last reset.
    pub fn now(&self) -> u64 {
        self.now
    }

    /// Receptive-field traces of location `(oy, ox)`, in kernel layout.
    pub fn receptive_traces(&self, oy: usize, ox: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.kernel.per_map()];
        if self.tracks_traces {
            self.gather_traces(oy, ox, &mut out);
        }
        out
    }

    /// Which synapses of location `(oy, ox)` received a spike in the last step.
    pub fn receptive_arrivals(&self, oy: usize, ox: usize) -> Vec<bool> {
        let k = &self.kernel;
        let mut out = vec![false; k.per_map()];
        for (d, &steps) in self.delay_steps.iter().enumerate() {
            for &idx in self.buffer.get(steps) {
                let (ch, y, x) = self.input.decode(idx as usize);
                let (y0, x0) = (oy * self.stride, ox * self.stride);
                if (y0..y0 + k.kh).contains(&y) && (x0..x0 + k.kw).contains(&x) {
                    out[k.index(0, ch, y - y0, x - x0, d)] = true;
                }
            }
        }
        out
    }

    /// Clears membranes, refractory timers, traces and in-flight spikes.
    pub fn reset(&mut self) {
        self.state.reset(&self.config.neuron);
        self.traces.fill(0.0);
        self.buffer.clear();
        self.now = 0;
        self.outcome = WtaOutcome::default();
        self.update_sources.clear();
        self.output_frame.clear();
    }

    fn refresh_effective_weights(&mut self) {
        self.w_eff = match &self.kernel.inh {
            Some(inh) => {
                let beta = self.config.beta;
                self.kernel
                    .exc
                    .iter()
                    .zip(inh)
                    .map(|(e, i)| e + beta * i)
                    .collect()
            }
            None => self.kernel.exc.clone(),
        };
    }

    fn gather_traces(&self, oy: usize, ox: usize, out: &mut [f64]) {
        let k = &self.kernel;
        let m = k.m;
        let run = k.kw * m;
        let (y0, x0) = (oy * self.stride, ox * self.stride);
        for ch in 0..k.channels {
            for dy in 0..k.kh {
                let src = (self.input.index(ch, y0 + dy, x0)) * m;
                let dst = (ch * k.kh + dy) * run;
                out[dst..dst + run].copy_from_slice(&self.traces[src..src + run]);
            }
        }
    }

    /// Advances one step. `input` lists the flat `(channel, y, x)` indices of
    /// presynaptic neurons spiking this step; the returned slice lists the
    /// `(map, y, x)` indices of neurons spiking now, ascending.
    pub fn step(&mut self, input: Vec<u32>, mode: StepMode<'_>) -> &[u32] {
        debug_assert!(input.iter().all(|&i| (i as usize) < self.input.len()));
        self.buffer.push(input);
        let now = self.now;

        // Explicit Euler: the forcing sees the traces from before this
        // step's arrivals; learning sees them after.
        if self.config.kind.has_homeostasis() {
            self.update_homeostasis();
        } else {
            self.homeostasis.fill(0.0);
        }
        self.integrate(now);
        if self.tracks_traces {
            self.update_traces();
        }

        let learning = matches!(mode, StepMode::Learn(_)) && self.config.plastic;
        self.compete(now, learning);

        self.update_sources.clear();
        if let StepMode::Learn(learn) = mode {
            if self.config.plastic && !self.outcome.winners.is_empty() {
                self.learn(learn);
            }
        }
        self.now += 1;
        &self.output_frame
    }

    fn update_traces(&mut self) {
        let m = self.config.m;
        let decay = self.trace_decay;
        let alpha = self.config.neuron.alpha;
        self.traces.iter_mut().for_each(|x| *x *= decay);
        for (d, &steps) in self.delay_steps.iter().enumerate() {
            for &idx in self.buffer.get(steps) {
                self.traces[idx as usize * m + d] += alpha;
            }
        }
    }

    /// Largest receptive-field trace total over the 3x3 neighborhood of each
    /// output location. Traces do not depend on the map, so neither does this.
    fn update_homeostasis(&mut self) {
        let m = self.config.m;
        let (ih, iw) = (self.input.h, self.input.w);
        let (oh, ow) = (self.output.h, self.output.w);
        let (kh, kw, s) = (self.kernel.kh, self.kernel.kw, self.stride);

        self.totals.fill(0.0);
        for ch in 0..self.input.c {
            let plane = &self.traces[ch * ih * iw * m..(ch + 1) * ih * iw * m];
            for (t, px) in self.totals.iter_mut().zip(plane.chunks_exact(m)) {
                *t += px.iter().sum::<f64>();
            }
        }
        for y in 0..ih {
            let row = &self.totals[y * iw..(y + 1) * iw];
            for ox in 0..ow {
                self.row_sums[y * ow + ox] = row[ox * s..ox * s + kw].iter().sum();
            }
        }
        for oy in 0..oh {
            for ox in 0..ow {
                self.field_sums[oy * ow + ox] = (0..kh)
                    .map(|dy| self.row_sums[(oy * s + dy) * ow + ox])
                    .sum();
            }
        }
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for ny in oy.saturating_sub(1)..=(oy + 1).min(oh - 1) {
                    for nx in ox.saturating_sub(1)..=(ox + 1).min(ow - 1) {
                        best = best.max(self.field_sums[ny * ow + nx]);
                    }
                }
                self.homeostasis[oy * ow + ox] = best;
            }
        }
    }

    fn integrate(&mut self, now: u64) {
        let n_loc = self.output.h * self.output.w;
        let arrivals: Vec<&[u32]> = self
            .delay_steps
            .iter()
            .map(|&s| self.buffer.get(s).as_slice())
            .collect();
        let ctx = ForcingCtx {
            input: self.input,
            output: self.output,
            stride: self.stride,
            kernel: &self.kernel,
            w_eff: &self.w_eff,
            arrivals: &arrivals,
        };
        let params = &self.config.neuron;
        let dt = self.dt_ms;
        let hom = &self.homeostasis;
        let run = |(k, ((f, v), refr)): MapSlices| {
            ctx.map_spike_input(k, f);
            if params.spike_input == SpikeInput::Impulse {
                integrate_impulse_slice(v, refr, f, hom, params, dt, now);
            }
            for (fi, h) in f.iter_mut().zip(hom) {
                *fi -= h;
            }
            if params.spike_input == SpikeInput::Current {
                integrate_slice(v, refr, f, params, dt, now);
            }
        };
        if self.output.len() >= PARALLEL_MIN_NEURONS && self.output.c > 1 {
            self.forcing
                .par_chunks_mut(n_loc)
                .zip(self.state.v.par_chunks_mut(n_loc))
                .zip(self.state.refr_until.par_chunks(n_loc))
                .enumerate()
                .for_each(run);
        } else {
            self.forcing
                .chunks_mut(n_loc)
                .zip(self.state.v.chunks_mut(n_loc))
                .zip(self.state.refr_until.chunks(n_loc))
                .enumerate()
                .for_each(run);
        }
    }

    fn compete(&mut self, now: u64, learning: bool) {
        let params = self.config.neuron;
        let out = self.output;
        let mut candidates = Vec::new();
        for (i, (&v, &until)) in self.state.v.iter().zip(&self.state.refr_until).enumerate() {
            if now >= until && v >= params.v_th {
                let (map, y, x) = out.decode(i);
                candidates.push(Candidate { map, y, x, v });
            }
        }
        self.outcome = if candidates.is_empty() {
            WtaOutcome::default()
        } else if self.config.kind.is_learnable() {
            let policy = if learning {
                WtaPolicy::learning(self.config.learning_radius(self.input))
            } else {
                WtaPolicy::frozen()
            };
            wta_resolve(&candidates, out, policy)
        } else {
            WtaOutcome {
                winners: candidates
                    .iter()
                    .map(|c| out.index(c.map, c.y, c.x))
                    .collect(),
                suppressed: Vec::new(),
            }
        };

        let refr_until = now + self.refr_steps;
        for &i in &self.outcome.winners {
            self.state.v[i] = params.v_reset;
            self.state.refr_until[i] = refr_until;
        }
        for &i in &self.outcome.suppressed {
            self.state.v[i] = params.v_reset;
            self.state.refr_until[i] = self.state.refr_until[i].max(refr_until);
        }
        self.state.spikes.fill(false);
        for &i in &self.outcome.winners {
            self.state.spikes[i] = true;
        }
        self.output_frame.clear();
        self.output_frame
            .extend(self.outcome.winners.iter().map(|&i| i as u32));
        self.output_frame.sort_unstable();
    }

    /// Averages the winners' local updates per map and applies each once.
    fn learn(&mut self, learn: &mut Learning) {
        let per = self.kernel.per_map();
        let n_loc = self.output.h * self.output.w;
        let rule = learn.rule;
        let params = learn.params;
        let (w_exc0, w_inh0) = (self.w_init, -self.w_init);

        let mut winners = self.outcome.winners.clone();
        winners.sort_unstable();
        let mut x = vec![0.0; per];
        let mut start = 0;
        while start < winners.len() {
            let k = winners[start] / n_loc;
            let end = start
                + winners[start..]
                    .iter()
                    .take_while(|&&i| i / n_loc == k)
                    .count();
            let group = &winners[start..end];
            start = end;

            let mut sum_exc = vec![0.0; per];
            let mut sum_inh = vec![0.0; per];
            let mut xhats = Vec::with_capacity(group.len());
            for &i in group {
                let loc = i % n_loc;
                self.gather_traces(loc / self.output.w, loc % self.output.w, &mut x);
                let mut xhat = vec![0.0; per];
                normalize_into(&x, &mut xhat);
                let exc = self.kernel.exc_map(k);
                for ((s, &w), &xh) in sum_exc.iter_mut().zip(exc).zip(&xhat) {
                    *s += rule.delta(w, xh, &params, w_exc0);
                }
                if rule == RuleKind::Ours {
                    if let Some(inh) = self.kernel.inh_map(k) {
                        for ((s, &w), &xh) in sum_inh.iter_mut().zip(inh).zip(&xhat) {
                            *s += rule.delta(w, xh, &params, w_inh0);
                        }
                    }
                }
                xhats.push(xhat);
                self.update_sources.push(i);
            }

            let n = group.len() as f64;
            let range = k * per..(k + 1) * per;
            for (w, s) in self.kernel.exc[range.clone()].iter_mut().zip(&sum_exc) {
                *w = rule.clamp(*w + s / n);
            }
            if rule == RuleKind::Ours {
                if let Some(inh) = self.kernel.inh.as_mut() {
                    for (w, s) in inh[range.clone()].iter_mut().zip(&sum_inh) {
                        *w += s / n;
                    }
                }
            }
            let beta = self.config.beta;
            for j in range.clone() {
                self.w_eff[j] =
                    self.kernel.exc[j] + self.kernel.inh.as_ref().map_or(0.0, |h| beta * h[j]);
            }

            let mut w_hat = vec![0.0; per];
            normalize_into(self.kernel.exc_map(k), &mut w_hat);
            for xhat in &xhats {
                let l = convergence_metric(xhat, &w_hat).expect("kernel and traces share a layout");
                learn.record(l);
            }
        }
    }
}

/// Read-only view used to compute the forcing of one map.
struct ForcingCtx<'a> {
    input: Shape,
    output: Shape,
    stride: usize,
    kernel: &'a Kernel,
    w_eff: &'a [f64],
    arrivals: &'a [&'a [u32]],
}

impl ForcingCtx<'_> {
    /// Writes `sum W s` for every location of map `k`.
    fn map_spike_input(&self, k: usize, out: &mut [f64]) {
        out.fill(0.0);
        let kern = self.kernel;
        let s = self.stride;
        let (oh, ow) = (self.output.h, self.output.w);
        let w = &self.w_eff[k * kern.per_map()..(k + 1) * kern.per_map()];
        for (d, frame) in self.arrivals.iter().enumerate() {
            for &idx in frame.iter() {
                let (ch, y, x) = self.input.decode(idx as usize);
                for dy in 0..kern.kh.min(y + 1) {
                    let ty = y - dy;
                    if ty % s != 0 || ty / s >= oh {
                        continue;
                    }
                    let oy = ty / s;
                    for dx in 0..kern.kw.min(x + 1) {
                        let tx = x - dx;
                        if tx % s != 0 || tx / s >= ow {
                            continue;
                        }
                        let wi = w[kern.index(0, ch, dy, dx, d)];
                        if wi != 0.0 {
                            out[oy * ow + tx / s] += wi;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{forcing_dense, forcing_msconv, forcing_ssconv};
    use crate::neuron::NeuronParams;
    use crate::plasticity::stdp_delta;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ssconv(r: usize, f: usize) -> LayerConfig {
        let mut c = LayerConfig::new("ss", LayerKind::SSConv);
        c.r = r;
        c.f = f;
        c
    }

    fn random_frame(rng: &mut ChaCha8Rng, shape: Shape, p: f64) -> Vec<u32> {
        (0..shape.len() as u32)
            .filter(|_| rng.gen_bool(p))
            .collect()
    }

    fn random_kernel(layer: &Layer, rng: &mut ChaCha8Rng) -> Kernel {
        let mut k = layer.kernel().clone();
        k.exc.iter_mut().for_each(|w| *w = rng.gen_range(0.0..1.0));
        if let Some(inh) = k.inh.as_mut() {
            inh.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..0.0));
        }
        k
    }

    /// Engine forcing against the direct per-neuron form.
    fn check_forcing_against_oracle(mut layer: Layer, steps: usize, p: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kernel = random_kernel(&layer, &mut rng);
        layer.set_kernel(kernel.clone()).unwrap();
        let out = layer.output_shape();
        for _ in 0..steps {
            let frame = random_frame(&mut rng, layer.input_shape(), p);
            // The forcing sees the traces from before the step.
            let before: Vec<Vec<f64>> = (0..out.h * out.w)
                .map(|l| layer.receptive_traces(l / out.w, l % out.w))
                .collect();
            layer.step(frame, StepMode::Frozen);
            for k in 0..out.c {
                for oy in 0..out.h {
                    for ox in 0..out.w {
                        let s = layer.receptive_arrivals(oy, ox);
                        let mut nb = Vec::new();
                        for ny in oy.saturating_sub(1)..=(oy + 1).min(out.h - 1) {
                            for nx in ox.saturating_sub(1)..=(ox + 1).min(out.w - 1) {
                                nb.push(before[ny * out.w + nx].clone());
                            }
                        }
                        let nb: Vec<&[f64]> = nb.iter().map(Vec::as_slice).collect();
                        let expect = match layer.kind() {
                            LayerKind::SSConv => forcing_ssconv(kernel.exc_map(k), &s, &nb),
                            LayerKind::MSConv => forcing_msconv(
                                kernel.exc_map(k),
                                kernel.inh_map(k).unwrap(),
                                layer.config().beta,
                                &s,
                                &nb,
                            ),
                            LayerKind::Dense => {
                                forcing_dense(kernel.exc_map(k), &s, &before[oy * out.w + ox])
                            }
                            other => panic!("no oracle for {other}"),
                        };
                        let got = layer.forcing()[out.index(k, oy, ox)];
                        assert!(
                            (got - expect).abs() < 1e-9,
                            "map {k} ({oy},{ox}): {got} vs {expect}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ssconv_forcing_matches_direct_form() {
        let mut c = ssconv(3, 2);
        c.s = 2;
        let layer = Layer::new(c, Shape::new(2, 9, 8), 1.0, 0.5).unwrap();
        check_forcing_against_oracle(layer, 30, 0.2);
    }

    #[test]
    fn msconv_forcing_matches_direct_form() {
        let mut c = LayerConfig::new("ms", LayerKind::MSConv);
        c.r = 3;
        c.f = 3;
        c.m = 3;
        c.tau_max_ms = 5.0;
        let layer = Layer::new(c, Shape::new(1, 7, 6), 1.0, 0.5).unwrap();
        check_forcing_against_oracle(layer, 30, 0.25);
    }

    #[test]
    fn dense_forcing_matches_direct_form() {
        let mut c = LayerConfig::new("dense", LayerKind::Dense);
        c.f = 5;
        let layer = Layer::new(c, Shape::new(3, 2, 2), 1.0, 0.5).unwrap();
        check_forcing_against_oracle(layer, 30, 0.3);
    }

    #[test]
    fn relay_layers_pass_single_spikes_on() {
        let mut c = LayerConfig::new("pool", LayerKind::Pooling);
        c.r = 2;
        c.s = 2;
        c.f = 2;
        let mut layer = Layer::new(c, Shape::new(2, 4, 4), 1.0, 0.5).unwrap();
        let input = Shape::new(2, 4, 4);
        assert!(layer
            .step(vec![input.index(1, 3, 2) as u32], StepMode::Frozen)
            .is_empty());
        // Arrives one step later, crosses the tiny threshold at once.
        let out = layer.step(Vec::new(), StepMode::Frozen).to_vec();
        assert_eq!(out, vec![layer.output_shape().index(1, 1, 1) as u32]);
        assert!(layer.step(Vec::new(), StepMode::Frozen).is_empty());

        // Two spikes in one block give one output spike.
        layer.reset();
        layer.step(
            vec![input.index(0, 0, 0) as u32, input.index(0, 1, 1) as u32],
            StepMode::Frozen,
        );
        assert_eq!(layer.step(Vec::new(), StepMode::Frozen), &[0]);
    }

    #[test]
    fn pooling_partitions_the_input() {
        let mut c = LayerConfig::new("pool", LayerKind::Pooling);
        c.r = 2;
        c.s = 2;
        c.f = 3;
        let input = Shape::new(3, 5, 4);
        let layer = Layer::new(c, input, 1.0, 0.5).unwrap();
        let out = layer.output_shape();
        let k = layer.kernel();
        for ch in 0..input.c {
            for y in 0..out.h * 2 {
                for x in 0..out.w * 2 {
                    let mut feeds = 0;
                    for map in 0..out.c {
                        for oy in 0..out.h {
                            for ox in 0..out.w {
                                let (dy, dx) = (y.wrapping_sub(oy * 2), x.wrapping_sub(ox * 2));
                                if dy < 2 && dx < 2 && k.exc[k.index(map, ch, dy, dx, 0)] != 0.0 {
                                    feeds += 1;
                                    assert_eq!(map, ch);
                                }
                            }
                        }
                    }
                    assert_eq!(feeds, 1, "({ch},{y},{x})");
                }
            }
        }
    }

    #[test]
    fn merge_never_outputs_more_spikes_than_it_receives() {
        let c = LayerConfig::new("merge", LayerKind::Merge);
        let input = Shape::new(4, 6, 6);
        let mut layer = Layer::new(c, input, 1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut prev = 0;
        for _ in 0..200 {
            let frame = random_frame(&mut rng, input, 0.05);
            let n_in = frame.len();
            let out = layer.step(frame, StepMode::Frozen).len();
            assert!(out <= prev, "{out} outputs from {prev} arrivals");
            prev = n_in;
        }
    }

    #[test]
    fn single_winner_update_matches_rule() {
        let mut c = ssconv(2, 1);
        c.neuron.v_th = 0.03;
        let input = Shape::new(1, 2, 2);
        let mut layer = Layer::new(c, input, 1.0, 0.5).unwrap();
        let params = StdpParams {
            eta: 1e-2,
            ..Default::default()
        };
        let mut learn = Learning::new(RuleKind::Ours, params);
        layer.step(vec![0, 3], StepMode::Learn(&mut learn));
        let out = layer.step(Vec::new(), StepMode::Learn(&mut learn)).to_vec();
        assert_eq!(out, vec![0]);
        let xhat = [1.0, 0.0, 0.0, 1.0];
        for (j, &w) in layer.kernel().exc.iter().enumerate() {
            assert_eq!(w, 0.5 + stdp_delta(0.5, xhat[j], 1e-2, 0.0, 0.5));
        }
        assert_eq!(learn.log.len(), 1);
    }

    #[test]
    fn learning_updates_come_only_from_winners() {
        let mut c = ssconv(3, 3);
        c.neuron = NeuronParams {
            v_th: 0.2,
            alpha: 0.02,
            ..NeuronParams::default()
        };
        let input = Shape::new(2, 12, 12);
        let mut layer = Layer::new(c, input, 1.0, 0.5).unwrap();
        let mut learn = Learning::new(RuleKind::Ours, StdpParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut total = 0;
        for _ in 0..300 {
            let frame = random_frame(&mut rng, input, 0.15);
            layer.step(frame, StepMode::Learn(&mut learn));
            let mut winners = layer.last_outcome().winners.clone();
            winners.sort_unstable();
            assert_eq!(layer.last_update_sources(), winners.as_slice());
            for s in layer.last_update_sources() {
                assert!(!layer.last_outcome().suppressed.contains(s));
            }
            total += winners.len();
        }
        assert!(total > 0);
        assert_eq!(learn.log.len(), total);
    }

    #[test]
    fn kernel_layout_is_checked() {
        let mut layer = Layer::new(ssconv(3, 2), Shape::new(2, 5, 5), 1.0, 0.5).unwrap();
        assert!(layer
            .set_kernel(Kernel::filled(2, 2, 3, 3, 2, 0.5, None))
            .is_err());
    }
}
