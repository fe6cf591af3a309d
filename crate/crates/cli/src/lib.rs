//! Command-line driver: synthetic data generation, layer-wise training,
//! inference, kernel export, flow extraction, velocity tuning and the
//! learning-rule comparison.
//!
//! Exit codes: 0 on success, 1 on invalid arguments or inputs, 2 when reading
//! or writing a file fails. Every command validates its inputs and finishes
//! its computation before the first output is written.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use spikeflow::events::{
    generate_events, read_events, write_events, CameraModel, EventStream, PlanarMotion, Texture,
};
use spikeflow::flow::{self, Probe};
use spikeflow::layers::{export_kernels, ExportFormat, Layer};
use spikeflow::network::{Network, NetworkConfig, TrainSchedule, WeightsFile};
use spikeflow::plasticity::{MovingAverage, RuleKind};
use spikeflow::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{flag}: {source}")]
    Flag {
        flag: &'static str,
        #[source]
        source: spikeflow::Error,
    },
    #[error(transparent)]
    Core(#[from] spikeflow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Flag { source, .. } | CliError::Core(source) => {
                if source.is_io() {
                    2
                } else {
                    1
                }
            }
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

trait FlagContext<T> {
    fn flag(self, flag: &'static str) -> CliResult<T>;
}

impl<T> FlagContext<T> for spikeflow::Result<T> {
    fn flag(self, flag: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Flag { flag, source })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "spikeflow",
    version,
    about = "Spiking motion-perception engine for event-camera data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a moving texture and write its events.
    Gen(GenArgs),
    /// Train plastic layers one after another.
    Train(TrainArgs),
    /// Replay an event file through a trained network.
    Infer(InferArgs),
    /// Write the kernels of one layer as CSV grids or PGM images.
    ExportKernels(ExportArgs),
    /// Extract per-kernel optical flow from a multisynaptic layer.
    Flow(FlowArgs),
    /// Measure firing rates over a grid of ventral flows.
    Response(ResponseArgs),
    /// Train one layer with a chosen learning rule and record weight histograms.
    StdpCompare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Pattern {
    Checkerboard,
    Bar,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Pgm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Rule {
    Ours,
    Kheradpisheh,
    Shrestha,
}

impl From<Rule> for RuleKind {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Ours => RuleKind::Ours,
            Rule::Kheradpisheh => RuleKind::Kheradpisheh,
            Rule::Shrestha => RuleKind::Shrestha,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    pattern: Pattern,
    /// Horizontal ventral flow in 1/s.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    wx: f64,
    /// Vertical ventral flow in 1/s.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    wy: f64,
    #[arg(long)]
    duration_ms: f64,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    /// Log-intensity contrast threshold.
    #[arg(long, default_value_t = 0.15)]
    contrast: f64,
    /// Checkerboard period or bar width in texture pixels.
    #[arg(long)]
    size: Option<f64>,
    /// Orient the bar horizontally.
    #[arg(long)]
    horizontal: bool,
    /// Output file; `.bin` selects the binary format, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    /// Layer index, name or kind; all plastic layers in order when omitted.
    #[arg(long)]
    layer: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_presentations: usize,
    #[arg(long)]
    weights_out: PathBuf,
    /// CSV of every postsynaptic update's convergence metric.
    #[arg(long)]
    log_out: Option<PathBuf>,
    /// Start from these weights instead of the initial values.
    #[arg(long)]
    weights_in: Option<PathBuf>,
    /// Worker threads; overrides the config, 0 keeps the global pool.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// CSV of every output spike: `step,layer,map,y,x`.
    #[arg(long)]
    spikes_out: PathBuf,
    /// CSV of postsynaptic traces: `layer,map,y,x,mean,final`.
    #[arg(long)]
    traces_out: PathBuf,
    /// Directory for flow-coloured winner frames of the first MS-Conv layer.
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    frame_ms: f64,
    #[arg(long, default_value_t = flow::DEFAULT_GAMMA)]
    gamma: f64,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Layer index or kind.
    #[arg(long)]
    layer: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Pgm)]
    format: Format,
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Layer index or kind.
    #[arg(long, default_value = "msconv")]
    layer: String,
    #[arg(long, default_value_t = flow::DEFAULT_GAMMA)]
    gamma: f64,
    /// Directory receiving `flow.csv` and `flow.ppm`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ResponseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// `wx:wy;wx:wy;...` points or `<n>x<max>` for a square grid.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300.0)]
    duration_ms: f64,
    /// Checkerboard period in texture pixels.
    #[arg(long, default_value_t = 16.0)]
    period: f64,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, value_enum)]
    rule: Rule,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    /// 50-bin weight histograms, one row per percent of the budget.
    #[arg(long)]
    hist_out: PathBuf,
    /// Layer index, name or kind; the first plastic layer when omitted.
    #[arg(long)]
    layer: Option<String>,
    #[arg(long, default_value_t = 100)]
    max_presentations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weights for the layers feeding the compared one.
    #[arg(long)]
    weights_in: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::ExportKernels(a) => export(a),
        Command::Flow(a) => flow_cmd(a),
        Command::Response(a) => response(a),
        Command::StdpCompare(a) => compare(a),
    }
}

fn require_file(path: &Path, flag: &'static str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{flag}: no such file `{}`",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, flag: &'static str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{flag}: no such directory `{}`",
            path.display()
        )))
    }
}

fn positive(value: f64, what: &str) -> CliResult<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} must be positive")))
    }
}

fn load_config(path: &Path) -> CliResult<NetworkConfig> {
    require_file(path, "--config")?;
    NetworkConfig::from_file(path).flag("--config")
}

fn load_weights(path: &Path, flag: &'static str) -> CliResult<WeightsFile> {
    require_file(path, flag)?;
    WeightsFile::load(path).flag(flag)
}

/// Every `.csv` or `.bin` file of `dir`, in file-name order.
fn load_dataset(dir: &Path) -> CliResult<Vec<EventStream>> {
    require_dir(dir, "--data-dir")?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(spikeflow::Error::from)
        .flag("--data-dir")?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv" || e == "bin"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Usage(format!(
            "--data-dir: no .csv or .bin event files in `{}`",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| read_events(p).flag("--data-dir"))
        .collect()
}

fn gen(a: GenArgs) -> CliResult<()> {
    positive(a.duration_ms, "duration")?;
    positive(a.contrast, "contrast")?;
    if a.width == 0 || a.height == 0 || a.width > u16::MAX as u32 || a.height > u16::MAX as u32 {
        return Err(CliError::Usage(format!(
            "--width/--height: resolution {}x{} is outside 1..=65535",
            a.width, a.height
        )));
    }
    let texture = match a.pattern {
        Pattern::Checkerboard => Texture::Checkerboard {
            period: a.size.unwrap_or(16.0),
        },
        Pattern::Bar => Texture::Bar {
            width: a.size.unwrap_or(4.0),
            horizontal: a.horizontal,
        },
    };
    let camera = CameraModel {
        contrast: a.contrast,
        ..CameraModel::default()
    };
    let motion = PlanarMotion::from_ventral_flow(a.wx, a.wy);
    let duration_us = (a.duration_ms * 1000.0).round() as u64;
    let stream = generate_events(&texture, &motion, &camera, duration_us, a.width, a.height)?;
    write_events(&stream, &a.out).flag("--out")?;
    eprintln!("wrote {} events to {}", stream.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> CliResult<()> {
    let mut config = load_config(&a.config)?;
    if let Some(w) = a.workers {
        config.workers = w;
    }
    let data = load_dataset(&a.data_dir)?;
    let mut net = Network::build(config).flag("--config")?;
    if let Some(p) = &a.weights_in {
        let w = load_weights(p, "--weights-in")?;
        net.set_weights(&w).flag("--weights-in")?;
    }
    let targets: Vec<usize> = match &a.layer {
        Some(sel) => vec![net.find_layer(sel).flag("--layer")?],
        None => (0..net.layers().len())
            .filter(|&i| net.layer(i).config().plastic)
            .collect(),
    };
    for &i in &targets {
        if !net.layer(i).config().plastic {
            return Err(CliError::Usage(format!(
                "--layer: layer `{}` is not plastic",
                net.layer(i).name()
            )));
        }
    }
    for d in &data {
        net.prepare(d).flag("--data-dir")?;
    }

    let window = net.config().stdp.window;
    let mut log = String::from("layer,update,metric,moving_average\n");
    for &i in &targets {
        let schedule = TrainSchedule::new(
            data.clone(),
            a.max_presentations,
            a.seed.wrapping_add(i as u64),
        );
        let report = net.train_layer(i, &schedule).flag("--layer")?;
        let name = net.layer(i).name().to_string();
        let mut avg = MovingAverage::new(window);
        for (n, &l) in report.log.iter().enumerate() {
            avg.push(l);
            let shown = avg
                .mean()
                .filter(|_| avg.is_full())
                .map_or(String::new(), |m| m.to_string());
            let _ = writeln!(log, "{name},{n},{l},{shown}");
        }
        eprintln!(
            "layer {name}: {} presentations, {} updates, {}",
            report.presentations,
            report.log.len(),
            if report.converged {
                "converged"
            } else {
                "budget exhausted"
            }
        );
    }
    net.save_weights(&a.weights_out).flag("--weights-out")?;
    if let Some(p) = &a.log_out {
        write_atomic(p, log.as_bytes()).flag("--log-out")?;
    }
    Ok(())
}

fn infer(a: InferArgs) -> CliResult<()> {
    positive(a.frame_ms, "--frame-ms")?;
    let config = load_config(&a.config)?;
    let weights = load_weights(&a.weights, "--weights")?;
    require_file(&a.events, "--events")?;
    let stream = read_events(&a.events).flag("--events")?;
    let mut net = Network::build(config).flag("--config")?;
    net.set_weights(&weights).flag("--weights")?;
    let record = net.infer(&stream).flag("--events")?;

    let mut spikes = String::from("step,layer,map,y,x\n");
    let mut traces = String::from("layer,map,y,x,mean,final\n");
    for (li, layer) in record.layers.iter().enumerate() {
        for (t, frame) in layer.spikes.iter().enumerate() {
            for &i in frame {
                let (k, y, x) = layer.shape.decode(i as usize);
                let _ = writeln!(spikes, "{t},{li},{k},{y},{x}");
            }
        }
        for (i, (m, f)) in layer.mean_trace.iter().zip(&layer.final_trace).enumerate() {
            let (k, y, x) = layer.shape.decode(i);
            let _ = writeln!(traces, "{li},{k},{y},{x},{m},{f}");
        }
    }

    let mut frames = Vec::new();
    if let Some(dir) = &a.frames_dir {
        let ms = net
            .layers()
            .iter()
            .position(|l| l.kind() == spikeflow::layers::LayerKind::MSConv)
            .ok_or_else(|| {
                CliError::Usage("--frames-dir: the network has no MS-Conv layer".into())
            })?;
        let lw = &weights.layers[ms];
        let flows = flow::flow_vectors(&flow::layer_flows(&lw.kernel, &lw.delays_ms, a.gamma));
        let bin = ((a.frame_ms / record.dt_ms).round() as usize).max(1);
        for (n, r) in flow::winner_frames(&record.layers[ms], &flows, bin)?
            .into_iter()
            .enumerate()
        {
            frames.push((dir.join(format!("frame{n:05}.ppm")), r.to_ppm()));
        }
    }

    write_atomic(&a.spikes_out, spikes.as_bytes()).flag("--spikes-out")?;
    write_atomic(&a.traces_out, traces.as_bytes()).flag("--traces-out")?;
    if let Some(dir) = &a.frames_dir {
        std::fs::create_dir_all(dir)
            .map_err(spikeflow::Error::from)
            .flag("--frames-dir")?;
        for (p, bytes) in &frames {
            write_atomic(p, bytes).flag("--frames-dir")?;
        }
    }
    let total: usize = record.layers.iter().map(|l| l.spike_count()).sum();
    eprintln!("{} steps, {total} spikes", record.steps);
    Ok(())
}

fn export(a: ExportArgs) -> CliResult<()> {
    let weights = load_weights(&a.weights, "--weights")?;
    let i = weights.find(&a.layer).flag("--layer")?;
    let format = match a.format {
        Format::Csv => ExportFormat::Csv,
        Format::Pgm => ExportFormat::Pgm,
    };
    let files = export_kernels(&weights.layers[i].kernel, &a.out_dir, format).flag("--out-dir")?;
    eprintln!("wrote {} files to {}", files.len(), a.out_dir.display());
    Ok(())
}

fn flow_cmd(a: FlowArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.gamma) {
        return Err(CliError::Usage(format!(
            "--gamma: must lie in [0, 1], got {}",
            a.gamma
        )));
    }
    let weights = load_weights(&a.weights, "--weights")?;
    let i = weights.find(&a.layer).flag("--layer")?;
    let lw = &weights.layers[i];
    if lw.kernel.m < 2 {
        return Err(CliError::Usage(format!(
            "--layer: layer {i} ({}) has a single delay slot",
            lw.kind
        )));
    }
    let flows = flow::layer_flows(&lw.kernel, &lw.delays_ms, a.gamma);
    for (k, f) in flows.iter().enumerate() {
        if let Err(e) = f {
            eprintln!("kernel {k}: {e}");
        }
    }
    let note = "u, v in pixels/ms of this layer's input grid; \
                multiply by the product of the strides of earlier layers \
                (and by 2 when input downsampling is on) for sensor pixels";
    let csv = flow::flow_csv(&flows, note);
    let ppm = flow::colorize(&flow::flow_vectors(&flows)).to_ppm();
    std::fs::create_dir_all(&a.out)
        .map_err(spikeflow::Error::from)
        .flag("--out")?;
    write_atomic(&a.out.join("flow.csv"), csv.as_bytes()).flag("--out")?;
    write_atomic(&a.out.join("flow.ppm"), &ppm).flag("--out")?;
    Ok(())
}

fn response(a: ResponseArgs) -> CliResult<()> {
    positive(a.duration_ms, "--duration-ms")?;
    positive(a.period, "--period")?;
    let grid = flow::parse_grid(&a.grid).flag("--grid")?;
    let config = load_config(&a.config)?;
    let weights = load_weights(&a.weights, "--weights")?;
    let mut net = Network::build(config).flag("--config")?;
    net.set_weights(&weights).flag("--weights")?;
    let probe = Probe {
        texture: Texture::Checkerboard { period: a.period },
        duration_us: (a.duration_ms * 1000.0).round() as u64,
        ..Probe::default()
    };
    let rows = flow::response_curve(&mut net, &grid, &probe)?;
    write_atomic(&a.out, flow::response_csv(&rows).as_bytes()).flag("--out")?;
    Ok(())
}

pub const HIST_BINS: usize = 50;

fn compare(a: CompareArgs) -> CliResult<()> {
    let config = load_config(&a.config)?;
    let data = load_dataset(&a.data_dir)?;
    let mut net = Network::build(config).flag("--config")?;
    if let Some(p) = &a.weights_in {
        let w = load_weights(p, "--weights-in")?;
        net.set_weights(&w).flag("--weights-in")?;
    }
    let index = match &a.layer {
        Some(sel) => net.find_layer(sel).flag("--layer")?,
        None => (0..net.layers().len())
            .find(|&i| net.layer(i).config().plastic)
            .ok_or_else(|| CliError::Usage("--config: no plastic layer".into()))?,
    };
    if a.max_presentations == 0 {
        return Err(CliError::Usage(
            "--max-presentations must be positive".into(),
        ));
    }
    let budget = a.max_presentations;
    let mut schedule = TrainSchedule::new(data, budget, a.seed);
    schedule.rule = a.rule.into();
    schedule.stop_at_convergence = false;

    // Snapshot at the presentation closing each percent of the budget.
    let checkpoints: Vec<usize> = (1..=100).map(|pct| (budget * pct).div_ceil(100)).collect();
    let mut snapshots: Vec<Vec<f64>> = Vec::with_capacity(100);
    let report = net
        .train_layer_observed(index, &schedule, |p, layer: &Layer| {
            // Budgets under 100 close several percents at once.
            let due = checkpoints.iter().filter(|&&c| c == p).count();
            snapshots.extend(std::iter::repeat_n(layer.kernel().exc.clone(), due));
        })
        .flag("--layer")?;
    let text = histogram_csv(&snapshots, &checkpoints);
    write_atomic(&a.hist_out, text.as_bytes()).flag("--hist-out")?;
    eprintln!(
        "rule {}: {} presentations, {} updates",
        RuleKind::from(a.rule),
        report.presentations,
        report.log.len()
    );
    Ok(())
}

/// Histograms over the range observed across all snapshots, so that rows
/// are directly comparable.
fn histogram_csv(snapshots: &[Vec<f64>], checkpoints: &[usize]) -> String {
    let (mut lo, mut hi) = snapshots
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &w| {
            (l.min(w), h.max(w))
        });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi <= lo {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let mut s = format!("# weight range [{lo}, {hi}] in {HIST_BINS} bins\npercent,presentations");
    for b in 0..HIST_BINS {
        let _ = write!(s, ",b{b:02}");
    }
    s.push('\n');
    for (pct, (snap, p)) in snapshots.iter().zip(checkpoints).enumerate() {
        let mut counts = [0usize; HIST_BINS];
        for &w in snap {
            let b = (((w - lo) / (hi - lo)) * HIST_BINS as f64).floor() as isize;
            counts[b.clamp(0, HIST_BINS as isize - 1) as usize] += 1;
        }
        let _ = write!(s, "{},{p}", pct + 1);
        for c in counts {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}
