//! Shared convolution kernels and their export as CSV grids or PGM images.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Weights of all maps of one layer, laid out `(map, channel, dy, dx, delay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub f: usize,
    pub channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub m: usize,
    pub exc: Vec<f64>,
    /// Present only for multisynaptic layers; same layout as `exc`.
    pub inh: Option<Vec<f64>>,
}

impl Kernel {
    pub fn filled(
        f: usize,
        channels: usize,
        kh: usize,
        kw: usize,
        m: usize,
        exc: f64,
        inh: Option<f64>,
    ) -> Self {
        let n = f * channels * kh * kw * m;
        Kernel {
            f,
            channels,
            kh,
            kw,
            m,
            exc: vec![exc; n],
            inh: inh.map(|v| vec![v; n]),
        }
    }

    /// Synapses per map.
    pub fn per_map(&self) -> usize {
        self.channels * self.kh * self.kw * self.m
    }

    #[inline]
    pub fn index(&self, k: usize, ch: usize, dy: usize, dx: usize, d: usize) -> usize {
        (((k * self.channels + ch) * self.kh + dy) * self.kw + dx) * self.m + d
    }

    pub fn exc_at_mut(&mut self, k: usize, ch: usize, dy: usize, dx: usize, d: usize) -> &mut f64 {
        let i = self.index(k, ch, dy, dx, d);
        &mut self.exc[i]
    }

    pub fn exc_map(&self, k: usize) -> &[f64] {
        let n = self.per_map();
        &self.exc[k * n..(k + 1) * n]
    }

    pub fn inh_map(&self, k: usize) -> Option<&[f64]> {
        let n = self.per_map();
        self.inh.as_ref().map(|w| &w[k * n..(k + 1) * n])
    }

    /// Same dimensions and inhibitory part.
    pub fn same_layout(&self, other: &Kernel) -> bool {
        (
            self.f,
            self.channels,
            self.kh,
            self.kw,
            self.m,
            self.inh.is_some(),
        ) == (
            other.f,
            other.channels,
            other.kh,
            other.kw,
            other.m,
            other.inh.is_some(),
        )
    }

    /// `kh x kw` grid of one (map, channel, delay) slice, excitatory or inhibitory.
    pub fn slice(&self, k: usize, ch: usize, d: usize, inhibitory: bool) -> Vec<Vec<f64>> {
        let src = if inhibitory {
            self.inh.as_ref().expect("kernel has inhibitory weights")
        } else {
            &self.exc
        };
        (0..self.kh)
            .map(|dy| {
                (0..self.kw)
                    .map(|dx| src[self.index(k, ch, dy, dx, d)])
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Pgm,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "pgm" => Ok(ExportFormat::Pgm),
            _ => Err(Error::InvalidInput(format!(
                "unknown export format `{s}` (csv or pgm)"
            ))),
        }
    }
}

/// Writes one file per (map, channel, delay slot, sign) into `dir`.
///
/// PGM brightness is `|w| / max|w|` over the whole layer, so images of one
/// layer are comparable.
pub fn export_kernels(kernel: &Kernel, dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let max_abs = kernel
        .exc
        .iter()
        .chain(kernel.inh.iter().flatten())
        .fold(0.0_f64, |a, w| a.max(w.abs()));
    let mut written = Vec::new();
    let signs: &[(bool, &str)] = if kernel.inh.is_some() {
        &[(false, "exc"), (true, "inh")]
    } else {
        &[(false, "exc")]
    };
    for k in 0..kernel.f {
        for ch in 0..kernel.channels {
            for d in 0..kernel.m {
                for &(inh, tag) in signs {
                    let grid = kernel.slice(k, ch, d, inh);
                    let (ext, bytes) = match format {
                        ExportFormat::Csv => ("csv", grid_csv(&grid).into_bytes()),
                        ExportFormat::Pgm => ("pgm", grid_pgm(&grid, max_abs)),
                    };
                    let path = dir.join(format!("kernel{k:02}_ch{ch}_d{d:02}_{tag}.{ext}"));
                    write_atomic(&path, &bytes)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

fn grid_csv(grid: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in grid {
        let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn grid_pgm(grid: &[Vec<f64>], max_abs: f64) -> Vec<u8> {
    let h = grid.len();
    let w = grid.first().map_or(0, Vec::len);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in grid {
        for &v in row {
            let level = if max_abs > 0.0 {
                (v.abs() / max_abs * 255.0).round()
            } else {
                0.0
            };
            out.push(level as u8);
        }
    }
    out
}
