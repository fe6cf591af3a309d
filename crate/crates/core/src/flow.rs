//! Optical flow from learned spatiotemporal kernels, colour coding and
//! velocity-tuning curves.
//!
//! A kernel's flow is read from how its weight mass moves between two delay
//! slots: the per-axis weight histograms of the earliest and latest strong
//! slots are subtracted and a line is fitted to the difference.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::events::{generate_events, CameraModel, PlanarMotion, Texture};
use crate::layers::{Kernel, LayerKind, Shape};
use crate::network::{LayerRecord, Network};

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const FLOW_CSV_HEADER: &str = "kernel,u,v,theta_u,theta_v,tau_min_ms,tau_max_ms";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelFlow {
    /// Fitted slope over the slot interval, per ms.
    pub u: f64,
    pub v: f64,
    pub theta_u: f64,
    pub theta_v: f64,
    pub tau_min_ms: f64,
    pub tau_max_ms: f64,
    /// Displacement of the weight mass in kernel pixels per ms. Equals the
    /// true shift rate whenever the later slot is a translated copy of the
    /// earlier one that stays inside the kernel.
    pub rate_u: f64,
    pub rate_v: f64,
}

impl KernelFlow {
    pub fn speed(&self) -> f64 {
        self.u.hypot(self.v)
    }
}

/// Excitatory weight of map `k` summed per delay slot.
pub fn slot_totals(kernel: &Kernel, k: usize) -> Vec<f64> {
    let mut totals = vec![0.0; kernel.m];
    for (i, w) in kernel.exc_map(k).iter().enumerate() {
        totals[i % kernel.m] += w;
    }
    totals
}

/// Earliest and latest delay slot whose total weight reaches
/// `gamma * max_total`. Slot indices are returned, in increasing order.
pub fn select_slots(totals: &[f64], gamma: f64) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    if totals.len() < 2 {
        return Err(Error::Extraction(format!(
            "need at least two delay slots, kernel has {}",
            totals.len()
        )));
    }
    let max = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::Extraction(
            "kernel carries no positive weight".into(),
        ));
    }
    let threshold = gamma * max;
    let first = totals.iter().position(|&t| t >= threshold);
    let last = totals.iter().rposition(|&t| t >= threshold);
    match (first, last) {
        (Some(a), Some(b)) if a < b => Ok((a, b)),
        _ => Err(Error::Extraction(format!(
            "only one delay slot reaches {gamma} of the strongest slot"
        ))),
    }
}

/// Unweighted least-squares slope of `y` against abscissae `0..y.len()`.
pub fn ls_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let sxx = sum_sq_dev(y.len());
    if sxx == 0.0 {
        return 0.0;
    }
    // Pair symmetric bins so that mirrored inputs give exactly negated slopes.
    let mut sxy = 0.0;
    for i in 0..y.len() / 2 {
        let j = y.len() - 1 - i;
        sxy += (j as f64 - mean_x) * (y[j] - y[i]);
    }
    sxy / sxx
}

/// `sum (x - mean)^2` over `0..n`, i.e. `n (n^2 - 1) / 12`.
fn sum_sq_dev(n: usize) -> f64 {
    let n = n as f64;
    n * (n * n - 1.0) / 12.0
}

/// Per-axis histograms of one delay slot, summed over input channels.
/// Returns `(along x, along y)`. Each bin sums mirror-symmetric pairs first,
/// so reversing either axis permutes the bins without changing their values.
pub fn slot_histograms(kernel: &Kernel, k: usize, slot: usize) -> (Vec<f64>, Vec<f64>) {
    let (kh, kw) = (kernel.kh, kernel.kw);
    let mut hx = vec![0.0; kw];
    let mut hy = vec![0.0; kh];
    for ch in 0..kernel.channels {
        let w = |dy: usize, dx: usize| kernel.exc[kernel.index(k, ch, dy, dx, slot)];
        for (dx, h) in hx.iter_mut().enumerate() {
            *h += symmetric_sum(kh, |dy| w(dy, dx));
        }
        for (dy, h) in hy.iter_mut().enumerate() {
            *h += symmetric_sum(kw, |dx| w(dy, dx));
        }
    }
    (hx, hy)
}

fn symmetric_sum(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut s = 0.0;
    for i in 0..n / 2 {
        s += f(i) + f(n - 1 - i);
    }
    if n % 2 == 1 {
        s += f(n / 2);
    }
    s
}

/// Flow of map `k`. `delays_ms` gives the delay of every slot.
pub fn kernel_flow(kernel: &Kernel, k: usize, delays_ms: &[f64], gamma: f64) -> Result<KernelFlow> {
    if k >= kernel.f {
        return Err(Error::InvalidInput(format!(
            "kernel {k} out of range ({} maps)",
            kernel.f
        )));
    }
    if delays_ms.len() != kernel.m {
        return Err(Error::InvalidInput(format!(
            "{} delays given for {} slots",
            delays_ms.len(),
            kernel.m
        )));
    }
    let totals = slot_totals(kernel, k);
    let (lo, hi) = select_slots(&totals, gamma)?;
    let (tau_min_ms, tau_max_ms) = (delays_ms[lo], delays_ms[hi]);
    let span = tau_max_ms - tau_min_ms;
    if !(span > 0.0) {
        return Err(Error::Extraction(format!(
            "selected slots {lo} and {hi} do not span a positive interval"
        )));
    }
    let (hx_lo, hy_lo) = slot_histograms(kernel, k, lo);
    let (hx_hi, hy_hi) = slot_histograms(kernel, k, hi);
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a - b).collect::<Vec<_>>();
    let theta_u = ls_slope(&diff(&hx_hi, &hx_lo));
    let theta_v = ls_slope(&diff(&hy_hi, &hy_lo));
    // Mirror-invariant sums keep the rate exactly equivariant.
    let mass =
        (symmetric_sum(hx_lo.len(), |i| hx_lo[i]) + symmetric_sum(hx_hi.len(), |i| hx_hi[i])) / 2.0;
    let (u, v) = (theta_u / span, theta_v / span);
    Ok(KernelFlow {
        u,
        v,
        theta_u,
        theta_v,
        tau_min_ms,
        tau_max_ms,
        rate_u: u * sum_sq_dev(kernel.kw) / mass,
        rate_v: v * sum_sq_dev(kernel.kh) / mass,
    })
}

/// Flow of every map; failed extractions are reported per map.
pub fn layer_flows(kernel: &Kernel, delays_ms: &[f64], gamma: f64) -> Vec<Result<KernelFlow>> {
    (0..kernel.f)
        .map(|k| kernel_flow(kernel, k, delays_ms, gamma))
        .collect()
}

/// CSV table of successfully extracted flows. `note` becomes a leading
/// `#` comment line when non-empty.
pub fn flow_csv(flows: &[Result<KernelFlow>], note: &str) -> String {
    let mut s = String::new();
    for line in note.lines() {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "{FLOW_CSV_HEADER}");
    for (k, f) in flows.iter().enumerate() {
        if let Ok(f) = f {
            let _ = writeln!(
                s,
                "{k},{},{},{},{},{},{}",
                f.u, f.v, f.theta_u, f.theta_v, f.tau_min_ms, f.tau_max_ms
            );
        }
    }
    s
}

/// Colour of a flow vector: hue from direction, value from `speed / max_speed`.
/// Zero flow, or a zero maximum, is black.
pub fn flow_color(u: f64, v: f64, max_speed: f64) -> [u8; 3] {
    let speed = u.hypot(v);
    if !(max_speed > 0.0) || speed == 0.0 {
        return [0, 0, 0];
    }
    let hue = v.atan2(u).to_degrees().rem_euclid(360.0);
    hsv_to_rgb(hue, 1.0, (speed / max_speed).min(1.0))
}

/// Brightness of every flow relative to the largest speed.
pub fn brightness(flows: &[(f64, f64)]) -> Vec<f64> {
    let max = max_speed(flows);
    flows
        .iter()
        .map(|&(u, v)| if max > 0.0 { u.hypot(v) / max } else { 0.0 })
        .collect()
}

fn max_speed(flows: &[(f64, f64)]) -> f64 {
    flows.iter().map(|&(u, v)| u.hypot(v)).fold(0.0, f64::max)
}

/// Hue in degrees, saturation and value in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Raster {
    pub fn black(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            pixels: vec![[0; 3]; width * height],
        }
    }

    /// Binary P6 encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// One pixel per kernel on a near-square grid, row-major; unused cells are black.
pub fn colorize(flows: &[(f64, f64)]) -> Raster {
    let n = flows.len().max(1);
    let width = (n as f64).sqrt().ceil() as usize;
    let height = n.div_ceil(width);
    let max = max_speed(flows);
    let mut raster = Raster::black(width, height);
    for (i, &(u, v)) in flows.iter().enumerate() {
        raster.pixels[i] = flow_color(u, v, max);
    }
    raster
}

/// Flow vectors for colouring; failed extractions count as zero flow.
pub fn flow_vectors(flows: &[Result<KernelFlow>]) -> Vec<(f64, f64)> {
    flows
        .iter()
        .map(|f| f.as_ref().map_or((0.0, 0.0), |f| (f.u, f.v)))
        .collect()
}

/// Full-resolution frames of a convolutional layer: every `bin_steps` steps,
/// each location takes the colour of the map that spiked there last in the
/// bin, or stays black.
pub fn winner_frames(
    record: &LayerRecord,
    flows: &[(f64, f64)],
    bin_steps: usize,
) -> Result<Vec<Raster>> {
    let Shape { c, h, w } = record.shape;
    if flows.len() != c {
        return Err(Error::InvalidInput(format!(
            "{} flows given for {c} maps",
            flows.len()
        )));
    }
    if bin_steps == 0 {
        return Err(Error::InvalidInput(
            "frame bin must span at least one step".into(),
        ));
    }
    let max = max_speed(flows);
    let colors: Vec<[u8; 3]> = flows.iter().map(|&(u, v)| flow_color(u, v, max)).collect();
    Ok(record
        .spikes
        .chunks(bin_steps)
        .map(|bin| {
            let mut r = Raster::black(w, h);
            for &i in bin.iter().flatten() {
                let (k, y, x) = record.shape.decode(i as usize);
                r.pixels[y * w + x] = colors[k];
            }
            r
        })
        .collect())
}

/// Stimulus used to probe velocity tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub texture: Texture,
    pub camera: CameraModel,
    pub duration_us: u64,
}

impl Default for Probe {
    fn default() -> Self {
        Probe {
            texture: Texture::Checkerboard { period: 16.0 },
            camera: CameraModel::default(),
            duration_us: 300_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRow {
    pub wx: f64,
    pub wy: f64,
    /// Mean firing rate per MS-Conv map, in spikes per neuron per second.
    pub msconv: Vec<f64>,
    /// Firing rate per Dense neuron, in spikes per second.
    pub dense: Vec<f64>,
    /// Time-averaged postsynaptic trace per Dense neuron.
    pub dense_trace: Vec<f64>,
}

/// Replays the probe at every ventral-flow grid point through the network
/// and records the firing rates of the first MS-Conv and last Dense layer.
pub fn response_curve(
    net: &mut Network,
    grid: &[(f64, f64)],
    probe: &Probe,
) -> Result<Vec<ResponseRow>> {
    let cfg = net.config();
    let scale = if cfg.downsample { 2 } else { 1 };
    let (width, height) = ((cfg.width * scale) as u32, (cfg.height * scale) as u32);
    let ms_idx = net
        .layers()
        .iter()
        .position(|l| l.kind() == LayerKind::MSConv);
    let dense_idx = net
        .layers()
        .iter()
        .rposition(|l| l.kind() == LayerKind::Dense);
    let seconds = probe.duration_us as f64 * 1e-6;
    grid.iter()
        .map(|&(wx, wy)| {
            let motion = PlanarMotion::from_ventral_flow(wx, wy);
            let stream = generate_events(
                &probe.texture,
                &motion,
                &probe.camera,
                probe.duration_us,
                width,
                height,
            )?;
            let rec = net.infer(&stream)?;
            let msconv = ms_idx.map_or_else(Vec::new, |i| {
                let l = &rec.layers[i];
                let per_map = (l.shape.h * l.shape.w) as f64;
                l.map_counts()
                    .iter()
                    .map(|&n| n as f64 / per_map / seconds)
                    .collect()
            });
            let (dense, dense_trace) = dense_idx.map_or_else(
                || (Vec::new(), Vec::new()),
                |i| {
                    let l = &rec.layers[i];
                    let rates = l.map_counts().iter().map(|&n| n as f64 / seconds).collect();
                    (rates, l.mean_trace.clone())
                },
            );
            Ok(ResponseRow {
                wx,
                wy,
                msconv,
                dense,
                dense_trace,
            })
        })
        .collect()
}

pub fn response_csv(rows: &[ResponseRow]) -> String {
    let mut s = String::from("wx,wy");
    if let Some(r) = rows.first() {
        (0..r.msconv.len()).for_each(|k| {
            let _ = write!(s, ",msconv{k}");
        });
        (0..r.dense.len()).for_each(|k| {
            let _ = write!(s, ",dense{k}");
        });
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{}", r.wx, r.wy);
        for x in r.msconv.iter().chain(&r.dense) {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}

/// Parses `wx:wy` pairs separated by `;`, or a `n x max` square grid of
/// `(2n+1)^2` points on `[-max, max]^2`.
pub fn parse_grid(text: &str) -> Result<Vec<(f64, f64)>> {
    let bad = |m: &str| Error::InvalidInput(format!("grid `{text}`: {m}"));
    if let Some((n, max)) = text.split_once('x') {
        let n: usize = n.trim().parse().map_err(|_| bad("expected <n>x<max>"))?;
        let max: f64 = max.trim().parse().map_err(|_| bad("expected <n>x<max>"))?;
        if n == 0 || !(max > 0.0 && max.is_finite()) {
            return Err(bad("n and max must be positive"));
        }
        let step = max / n as f64;
        let ticks: Vec<f64> = (-(n as i64)..=n as i64).map(|i| i as f64 * step).collect();
        return Ok(ticks
            .iter()
            .flat_map(|&wy| ticks.iter().map(move |&wx| (wx, wy)))
            .collect());
    }
    let pts = text
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| bad("points are wx:wy"))?;
            let a: f64 = a.trim().parse().map_err(|_| bad("non-numeric component"))?;
            let b: f64 = b.trim().parse().map_err(|_| bad("non-numeric component"))?;
            if !(a.is_finite() && b.is_finite()) {
                return Err(bad("components must be finite"));
            }
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    if pts.is_empty() {
        return Err(bad("no points"));
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Single-channel r x r kernel with `m` slots, all zero.
    fn blank(r: usize, m: usize) -> Kernel {
        Kernel::filled(1, 1, r, r, m, 0.0, None)
    }

    fn linspace(a: f64, b: f64, m: usize) -> Vec<f64> {
        (0..m)
            .map(|i| a + (b - a) * i as f64 / (m - 1) as f64)
            .collect()
    }

    fn mirror_x(k: &Kernel) -> Kernel {
        let mut out = k.clone();
        for ch in 0..k.channels {
            for dy in 0..k.kh {
                for dx in 0..k.kw {
                    for d in 0..k.m {
                        out.exc[k.index(0, ch, dy, k.kw - 1 - dx, d)] =
                            k.exc[k.index(0, ch, dy, dx, d)];
                    }
                }
            }
        }
        out
    }

    fn transpose(k: &Kernel) -> Kernel {
        let mut out = k.clone();
        for ch in 0..k.channels {
            for dy in 0..k.kh {
                for dx in 0..k.kw {
                    for d in 0..k.m {
                        out.exc[k.index(0, ch, dx, dy, d)] = k.exc[k.index(0, ch, dy, dx, d)];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn uniform_slots_select_the_extremes() {
        for gamma in [0.0, 0.3, 1.0] {
            assert_eq!(select_slots(&[2.0; 6], gamma).unwrap(), (0, 5));
        }
    }

    #[test]
    fn only_strong_slots_qualify() {
        let mut t = vec![0.1; 10];
        t[2] = 3.0;
        t[7] = 2.0;
        assert_eq!(select_slots(&t, 0.5).unwrap(), (2, 7));
    }

    #[test]
    fn one_strong_slot_is_an_error() {
        let mut t = vec![0.0; 5];
        t[3] = 1.0;
        assert!(matches!(select_slots(&t, 0.5), Err(Error::Extraction(_))));
        assert!(select_slots(&[1.0], 0.5).is_err());
        assert!(select_slots(&[1.0, 1.0], 1.5).is_err());
        assert!(select_slots(&[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn identical_slots_give_zero_flow() {
        let mut k = blank(5, 3);
        for dy in 0..5 {
            for d in 0..3 {
                *k.exc_at_mut(0, 0, dy, 2, d) = 1.0;
            }
        }
        let f = kernel_flow(&k, 0, &[1.0, 3.0, 5.0], DEFAULT_GAMMA).unwrap();
        assert_eq!((f.u, f.v), (0.0, 0.0));
    }

    #[test]
    fn column_shift_matches_hand_fit() {
        // Unit column at x=1 in the 1 ms slot and at x=3 in the 5 ms slot.
        let mut k = blank(5, 2);
        for dy in 0..5 {
            *k.exc_at_mut(0, 0, dy, 1, 0) = 1.0;
            *k.exc_at_mut(0, 0, dy, 3, 1) = 1.0;
        }
        let f = kernel_flow(&k, 0, &[1.0, 5.0], DEFAULT_GAMMA).unwrap();
        // Difference histogram is [0,-5,0,5,0]; slope = sum((x-2) d) / sum((x-2)^2) = 10 / 10.
        assert_relative_eq!(f.theta_u, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.u, 0.25, epsilon = 1e-12);
        assert_eq!(f.v, 0.0);
        assert_eq!((f.tau_min_ms, f.tau_max_ms), (1.0, 5.0));
        // Two pixels in four milliseconds.
        assert_relative_eq!(f.rate_u, 0.5, epsilon = 1e-12);
        let m = kernel_flow(&mirror_x(&k), 0, &[1.0, 5.0], DEFAULT_GAMMA).unwrap();
        assert_eq!(m.u, -f.u);
        assert_eq!(m.v, f.v);
    }

    #[test]
    fn channels_are_summed() {
        let mut k = Kernel::filled(1, 2, 5, 5, 2, 0.0, None);
        for dy in 0..5 {
            *k.exc_at_mut(0, 0, dy, 1, 0) = 1.0;
            *k.exc_at_mut(0, 1, dy, 3, 1) = 1.0;
        }
        let f = kernel_flow(&k, 0, &[1.0, 5.0], DEFAULT_GAMMA).unwrap();
        assert_relative_eq!(f.theta_u, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn slope_matches_textbook_formula() {
        let y = [0.3, -1.0, 2.5, 0.0, 4.0, 1.5];
        let n = y.len() as f64;
        let xs: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let num: f64 = xs.iter().zip(&y).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        assert_relative_eq!(ls_slope(&y), num / den, epsilon = 1e-12);
    }

    #[test]
    fn zero_flows_are_black() {
        let r = colorize(&[(0.0, 0.0); 5]);
        assert!(r.pixels.iter().all(|p| *p == [0, 0, 0]));
        assert_eq!((r.width, r.height), (3, 2));
        assert!(r.to_ppm().starts_with(b"P6\n3 2\n255\n"));
    }

    #[test]
    fn opposite_flows_have_complementary_hues() {
        let a = flow_color(1.0, 0.0, 1.0);
        let b = flow_color(-1.0, 0.0, 1.0);
        assert_eq!(a, [255, 0, 0]);
        assert_eq!(b, [0, 255, 255]);
        let a = flow_color(0.3, 0.4, 0.5);
        let b = flow_color(-0.3, -0.4, 0.5);
        for i in 0..3 {
            assert_eq!(a[i] as u16 + b[i] as u16, 255);
        }
    }

    #[test]
    fn single_kernel_is_full_brightness() {
        assert_eq!(brightness(&[(0.2, -0.1)]), vec![1.0]);
        assert_eq!(brightness(&[(0.0, 0.0)]), vec![0.0]);
    }

    #[test]
    fn flow_csv_skips_failures() {
        let ok = KernelFlow {
            u: 0.25,
            v: 0.0,
            theta_u: 1.0,
            theta_v: 0.0,
            tau_min_ms: 1.0,
            tau_max_ms: 5.0,
            rate_u: 0.5,
            rate_v: 0.0,
        };
        let text = flow_csv(
            &[Ok(ok), Err(Error::Extraction("x".into()))],
            "units: px/ms",
        );
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            ["# units: px/ms", FLOW_CSV_HEADER, "0,0.25,0,1,0,1,5"]
        );
    }

    #[test]
    fn grids_parse() {
        assert_eq!(
            parse_grid("1:0;-1:0.5").unwrap(),
            vec![(1.0, 0.0), (-1.0, 0.5)]
        );
        let g = parse_grid("1x2").unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], (-2.0, -2.0));
        assert_eq!(g[4], (0.0, 0.0));
        assert!(parse_grid("").is_err());
        assert!(parse_grid("1:a").is_err());
        assert!(parse_grid("0x1").is_err());
    }

    #[test]
    fn winner_frames_colour_last_spike() {
        let record = LayerRecord {
            name: "ms".into(),
            kind: LayerKind::MSConv,
            shape: Shape::new(2, 2, 2),
            spikes: vec![vec![0], vec![4], vec![7]],
            mean_trace: vec![0.0; 8],
            final_trace: vec![0.0; 8],
        };
        let frames = winner_frames(&record, &[(1.0, 0.0), (-1.0, 0.0)], 2).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].pixels[0], [0, 255, 255]);
        assert_eq!(frames[1].pixels[3], [0, 255, 255]);
        assert_eq!(frames[1].pixels[0], [0, 0, 0]);
    }

    fn planted() -> impl Strategy<Value = (Kernel, Vec<f64>)> {
        (
            prop::collection::vec(0.0..1.0f64, 7 * 7),
            prop::collection::vec(0.0..1.0f64, 7 * 7),
            2usize..6,
        )
            .prop_map(|(a, b, m)| {
                let mut k = blank(7, m);
                for dy in 0..7 {
                    for dx in 0..7 {
                        *k.exc_at_mut(0, 0, dy, dx, 0) = a[dy * 7 + dx];
                        *k.exc_at_mut(0, 0, dy, dx, m - 1) = b[dy * 7 + dx];
                    }
                }
                (k, linspace(1.0, 20.0, m))
            })
    }

    proptest! {
        #[test]
        fn mirroring_negates_u((k, delays) in planted()) {
            let f = kernel_flow(&k, 0, &delays, 0.0).unwrap();
            let m = kernel_flow(&mirror_x(&k), 0, &delays, 0.0).unwrap();
            prop_assert_eq!(m.u, -f.u);
            prop_assert_eq!(m.v, f.v);
        }

        #[test]
        fn transposing_swaps_axes((k, delays) in planted()) {
            let f = kernel_flow(&k, 0, &delays, 0.0).unwrap();
            let t = kernel_flow(&transpose(&k), 0, &delays, 0.0).unwrap();
            prop_assert_eq!((t.u, t.v), (f.v, f.u));
            // A quarter turn is a transpose followed by a horizontal mirror.
            let r = kernel_flow(&mirror_x(&transpose(&k)), 0, &delays, 0.0).unwrap();
            prop_assert_eq!((r.u, r.v), (-f.v, f.u));
        }

        #[test]
        fn scaling_keeps_direction((k, delays) in planted(), c in 0.01..100.0f64) {
            let f = kernel_flow(&k, 0, &delays, 0.0).unwrap();
            let mut s = k.clone();
            s.exc.iter_mut().for_each(|w| *w *= c);
            let g = kernel_flow(&s, 0, &delays, 0.0).unwrap();
            prop_assert!((g.u - c * f.u).abs() <= 1e-9 * (1.0 + c * f.u.abs()));
            prop_assert!((g.v - c * f.v).abs() <= 1e-9 * (1.0 + c * f.v.abs()));
            prop_assert!((g.rate_u - f.rate_u).abs() <= 1e-9 * (1.0 + f.rate_u.abs()));
        }

        #[test]
        fn brightness_is_normalised(flows in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..20)) {
            let b = brightness(&flows);
            prop_assert!(b.iter().all(|&x| (0.0..=1.0).contains(&x)));
            if flows.iter().any(|&(u, v)| u != 0.0 || v != 0.0) {
                prop_assert!(b.contains(&1.0));
            }
        }
    }
}
