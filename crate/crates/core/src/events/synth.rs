//! Synthetic DVS: renders a scene at a fixed frame rate and emits events where
//! the linearly interpolated log intensity of a pixel crosses a multiple of
//! the contrast threshold away from its last reference level.

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};

pub const DARK_LEVEL: f64 = 0.2;
pub const BRIGHT_LEVEL: f64 = 1.0;

// Absolute slack on threshold comparisons in log units, so that a change of
// exactly C (e.g. ln 2 for a doubling) registers as one crossing.
const CROSSING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    /// Contrast threshold C in log-intensity units.
    pub contrast: f64,
    /// Rendering rate used for the log-intensity interpolation.
    pub frame_rate_hz: f64,
    /// Pinhole focal length in pixels; maps ventral flow (1/s) to pixels/s.
    pub focal_px: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            contrast: 0.15,
            frame_rate_hz: 1000.0,
            focal_px: 100.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "contrast threshold must be positive, got {}",
                self.contrast
            )));
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "frame rate must be positive, got {}",
                self.frame_rate_hz
            )));
        }
        if !(self.focal_px > 0.0 && self.focal_px.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "focal length must be positive, got {}",
                self.focal_px
            )));
        }
        Ok(())
    }
}

/// Camera velocity relative to a fronto-parallel textured plane at depth `z0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarMotion {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub z0: f64,
}

impl PlanarMotion {
    pub fn new(u: f64, v: f64, w: f64, z0: f64) -> Result<Self> {
        let m = PlanarMotion { u, v, w, z0 };
        m.validate()?;
        Ok(m)
    }

    pub fn at_rest() -> Self {
        PlanarMotion {
            u: 0.0,
            v: 0.0,
            w: 0.0,
            z0: 1.0,
        }
    }

    /// Pure translation producing the given ventral flow at unit depth.
    pub fn from_ventral_flow(wx: f64, wy: f64) -> Self {
        PlanarMotion {
            u: -wx,
            v: -wy,
            w: 0.0,
            z0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "distance to plane must be positive, got {}",
                self.z0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowObservables {
    pub wx: f64,
    pub wy: f64,
    pub divergence: f64,
}

pub fn flow_observables(motion: &PlanarMotion) -> Result<FlowObservables> {
    motion.validate()?;
    Ok(FlowObservables {
        wx: -motion.u / motion.z0,
        wy: -motion.v / motion.z0,
        divergence: 2.0 * motion.w / motion.z0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Dark/bright squares; `period` is one full dark+bright cycle in pixels.
    Checkerboard { period: f64 },
    /// A single dark bar on a bright background, centred on the optical axis.
    Bar { width: f64, horizontal: bool },
}

impl Texture {
    fn validate(&self) -> Result<()> {
        let size = match *self {
            Texture::Checkerboard { period } => period,
            Texture::Bar { width, .. } => width,
        };
        if !(size > 0.0 && size.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "texture size must be positive, got {size}"
            )));
        }
        Ok(())
    }

    /// Mean intensity over the texture-plane rectangle `[x0,x1] x [y0,y1]`.
    fn area_intensity(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let bright = match *self {
            Texture::Checkerboard { period } => {
                let half = period / 2.0;
                let fx = stripe_fraction(x0, x1, half);
                let fy = stripe_fraction(y0, y1, half);
                fx * fy + (1.0 - fx) * (1.0 - fy)
            }
            Texture::Bar { width, horizontal } => {
                let (a, b) = if horizontal { (y0, y1) } else { (x0, x1) };
                let lo = a.max(-width / 2.0);
                let hi = b.min(width / 2.0);
                1.0 - (hi - lo).max(0.0) / (b - a)
            }
        };
        DARK_LEVEL + (BRIGHT_LEVEL - DARK_LEVEL) * bright
    }
}

/// Fraction of `[a, b]` covered by the stripes `[2kq, (2k+1)q)`.
fn stripe_fraction(a: f64, b: f64, q: f64) -> f64 {
    let cumulative = |x: f64| {
        let cycles = (x / (2.0 * q)).floor();
        let rem = x - cycles * 2.0 * q;
        cycles * q + rem.min(q)
    };
    (cumulative(b) - cumulative(a)) / (b - a)
}

/// Anything that yields a strictly positive intensity per pixel over time.
pub trait Scene {
    fn intensity(&self, x: u32, y: u32, t_s: f64) -> f64;
}

impl<F> Scene for F
where
    F: Fn(u32, u32, f64) -> f64,
{
    fn intensity(&self, x: u32, y: u32, t_s: f64) -> f64 {
        self(x, y, t_s)
    }
}

/// A texture on a plane seen by a pinhole camera under planar ego-motion.
///
/// Pixels are box-filtered over their footprint, so edges produce a
/// gradual intensity ramp while they sweep across a pixel.
#[derive(Debug, Clone, Copy)]
pub struct MovingTexture {
    pub texture: Texture,
    pub motion: PlanarMotion,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
}

impl MovingTexture {
    pub fn new(
        texture: Texture,
        motion: PlanarMotion,
        focal_px: f64,
        width: u32,
        height: u32,
    ) -> Self {
        MovingTexture {
            texture,
            motion,
            focal_px,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }
}

impl Scene for MovingTexture {
    fn intensity(&self, x: u32, y: u32, t_s: f64) -> f64 {
        let m = &self.motion;
        // Image-plane offset of the texture and zoom from approaching the plane.
        let shift_x = self.focal_px * m.u / m.z0 * t_s;
        let shift_y = self.focal_px * m.v / m.z0 * t_s;
        let scale = 1.0 - m.w * t_s / m.z0;
        let tx = |px: f64| shift_x + (px - self.cx) * scale;
        let ty = |py: f64| shift_y + (py - self.cy) * scale;
        let (x, y) = (x as f64, y as f64);
        self.texture
            .area_intensity(tx(x), tx(x + 1.0), ty(y), ty(y + 1.0))
    }
}

pub fn generate_events(
    pattern: &Texture,
    motion: &PlanarMotion,
    camera: &CameraModel,
    duration_us: u64,
    width: u32,
    height: u32,
) -> Result<EventStream> {
    pattern.validate()?;
    motion.validate()?;
    if motion.w * (duration_us as f64 * 1e-6) >= motion.z0 {
        return Err(Error::InvalidInput(
            "trajectory reaches the textured plane within the sequence".into(),
        ));
    }
    let scene = MovingTexture::new(*pattern, *motion, camera.focal_px, width, height);
    generate_scene_events(&scene, camera, duration_us, width, height)
}

/// Core generator: frames at `camera.frame_rate_hz`, per-pixel threshold
/// crossings located by linear interpolation of log intensity.
pub fn generate_scene_events<S: Scene + ?Sized>(
    scene: &S,
    camera: &CameraModel,
    duration_us: u64,
    width: u32,
    height: u32,
) -> Result<EventStream> {
    camera.validate()?;
    if duration_us == 0 {
        return Err(Error::InvalidInput("duration must be positive".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "resolution must be non-zero, got {width}x{height}"
        )));
    }
    let n_pix = (width * height) as usize;
    let frame_us = 1e6 / camera.frame_rate_hz;
    let n_frames = (duration_us as f64 / frame_us).ceil() as u64;
    let c = camera.contrast;

    let render = |t_us: f64, out: &mut [f64]| -> Result<()> {
        let t_s = t_us * 1e-6;
        for y in 0..height {
            for x in 0..width {
                let i = scene.intensity(x, y, t_s);
                if !(i > 0.0 && i.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "intensity {i} at ({x}, {y}), t = {t_s} s is not positive"
                    )));
                }
                out[(y * width + x) as usize] = i.ln();
            }
        }
        Ok(())
    };

    let mut reference = vec![0.0; n_pix];
    render(0.0, &mut reference)?;
    let mut prev = reference.clone();
    let mut cur = vec![0.0; n_pix];
    let mut events = Vec::new();

    for k in 1..=n_frames {
        let t_prev = (k - 1) as f64 * frame_us;
        let t_cur = (k as f64 * frame_us).min(duration_us as f64);
        render(t_cur, &mut cur)?;
        for idx in 0..n_pix {
            let (l0, l1) = (prev[idx], cur[idx]);
            if l1 == l0 {
                continue;
            }
            let (x, y) = ((idx as u32 % width) as u16, (idx as u32 / width) as u16);
            let r = &mut reference[idx];
            let crossing_time = |level: f64| {
                let frac = ((level - l0) / (l1 - l0)).clamp(0.0, 1.0);
                (t_prev + frac * (t_cur - t_prev)).round() as u64
            };
            while l1 - *r >= c - CROSSING_SLACK {
                *r += c;
                events.push(Event::new(crossing_time(*r), x, y, Polarity::On));
            }
            while *r - l1 >= c - CROSSING_SLACK {
                *r -= c;
                events.push(Event::new(crossing_time(*r), x, y, Polarity::Off));
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    EventStream::new(width, height, duration_us, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera(contrast: f64) -> CameraModel {
        CameraModel {
            contrast,
            ..CameraModel::default()
        }
    }

    #[test]
    fn observables_rest_case() {
        let o = flow_observables(&PlanarMotion::new(0.0, 0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!((o.wx, o.wy, o.divergence), (0.0, 0.0, 0.0));
    }

    #[test]
    fn observables_lateral_motion() {
        let o = flow_observables(&PlanarMotion::new(0.4, 0.0, 0.0, 1.0).unwrap()).unwrap();
        assert!((o.wx + 0.4).abs() < 1e-15);
        assert_eq!(o.wy, 0.0);
        assert_eq!(o.divergence, 0.0);
    }

    #[test]
    fn observables_substitution() {
        let o = flow_observables(&PlanarMotion {
            u: 1.0,
            v: 2.0,
            w: 3.0,
            z0: 2.0,
        })
        .unwrap();
        assert_eq!((o.wx, o.wy, o.divergence), (-0.5, -1.0, 3.0));
    }

    #[test]
    fn non_positive_depth_is_rejected() {
        assert!(PlanarMotion::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(flow_observables(&PlanarMotion {
            u: 0.0,
            v: 0.0,
            w: 0.0,
            z0: -1.0
        })
        .is_err());
    }

    #[test]
    fn static_pattern_yields_no_events() {
        let s = generate_events(
            &Texture::Checkerboard { period: 8.0 },
            &PlanarMotion::at_rest(),
            &camera(0.01),
            50_000,
            16,
            16,
        )
        .unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn uniform_doubling_fires_once_per_pixel() {
        let scene = |_x: u32, _y: u32, t: f64| if t < 0.5e-3 { 1.0 } else { 2.0 };
        let s = generate_scene_events(&scene, &camera(2f64.ln()), 5_000, 3, 2).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s
            .events()
            .iter()
            .all(|e| e.p == Polarity::On && e.t == 1000));
    }

    #[test]
    fn zero_intensity_is_rejected() {
        let scene = |x: u32, _y: u32, _t: f64| if x == 1 { 0.0 } else { 1.0 };
        let err = generate_scene_events(&scene, &camera(0.1), 1000, 2, 2).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn zero_duration_is_rejected() {
        let scene = |_x: u32, _y: u32, _t: f64| 1.0;
        let err = generate_scene_events(&scene, &camera(0.1), 0, 2, 2).unwrap_err();
        assert!(err.to_string().contains("duration must be positive"));
    }

    #[test]
    fn stripe_fraction_matches_direct_integration() {
        for &(a, b) in &[(0.0, 1.0), (3.5, 4.5), (-2.25, -1.25), (7.9, 8.9)] {
            let n = 100_000;
            let q = 4.0;
            let mut acc = 0.0;
            for i in 0..n {
                let x: f64 = a + (b - a) * (i as f64 + 0.5) / n as f64;
                if (x / q).floor().rem_euclid(2.0) == 0.0 {
                    acc += 1.0;
                }
            }
            let direct = acc / n as f64;
            assert!((stripe_fraction(a, b, q) - direct).abs() < 1e-4, "{a}..{b}");
        }
    }

    #[test]
    fn ramp_emits_threshold_multiples_with_interpolated_times() {
        // log I rises linearly by 1.0 per ms; C = 0.25 gives 4 events per ms.
        let scene = |_x: u32, _y: u32, t: f64| (t * 1000.0).exp();
        let s = generate_scene_events(&scene, &camera(0.25), 2_000, 1, 1).unwrap();
        let ts: Vec<u64> = s.events().iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![250, 500, 750, 1000, 1250, 1500, 1750, 2000]);
    }
}
