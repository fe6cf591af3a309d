//! Address-event data model, synthetic DVS generation and event-file I/O.
//!
//! Streams are kept in a total order `(t, y, x, p)` so that every consumer
//! sees simultaneous events in the same sequence.

mod io;
mod synth;
mod transform;

pub use io::{read_binary, read_csv, read_events, write_binary, write_csv, write_events};
pub use synth::{
    flow_observables, generate_events, generate_scene_events, CameraModel, FlowObservables,
    MovingTexture, PlanarMotion, Scene, Texture, BRIGHT_LEVEL, DARK_LEVEL,
};
pub use transform::{augment, downsample_half, Flips};

use crate::error::{Error, Result};

/// Sign of a log-brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Off => -1,
            Polarity::On => 1,
        }
    }

    pub fn from_sign(p: i8) -> Result<Self> {
        match p {
            -1 => Ok(Polarity::Off),
            1 => Ok(Polarity::On),
            other => Err(Error::Validation(format!(
                "polarity must be -1 or +1, got {other}"
            ))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Off => Polarity::On,
            Polarity::On => Polarity::Off,
        }
    }

    /// Input-layer channel fed by this polarity.
    pub fn channel(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }
}

/// One AER event. `t` is in microseconds since the start of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }

    #[inline]
    pub fn sort_key(&self) -> (u64, u16, u16, Polarity) {
        (self.t, self.y, self.x, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u32,
    height: u32,
    duration_us: u64,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, checking coordinates and restoring the canonical order.
    ///
    /// `duration_us` is raised to the last timestamp if it is shorter.
    pub fn new(width: u32, height: u32, duration_us: u64, mut events: Vec<Event>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "stream resolution must be non-zero, got {width}x{height}"
            )));
        }
        if width > u16::MAX as u32 + 1 || height > u16::MAX as u32 + 1 {
            return Err(Error::Validation(format!(
                "stream resolution {width}x{height} exceeds 16-bit addressing"
            )));
        }
        if let Some(e) = events
            .iter()
            .find(|e| e.x as u32 >= width || e.y as u32 >= height)
        {
            return Err(Error::Validation(format!(
                "event at ({}, {}) outside {width}x{height} grid",
                e.x, e.y
            )));
        }
        events.sort_by_key(Event::sort_key);
        let last = events.last().map_or(0, |e| e.t);
        Ok(EventStream {
            width,
            height,
            duration_us: duration_us.max(last),
            events,
        })
    }

    pub fn empty(width: u32, height: u32, duration_us: u64) -> Result<Self> {
        Self::new(width, height, duration_us, Vec::new())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn duration_us(&self) -> u64 {
        self.duration_us
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Events with `start <= t < end`, re-based so the window starts at 0.
    pub fn window(&self, start_us: u64, end_us: u64) -> EventStream {
        let lo = self.events.partition_point(|e| e.t < start_us);
        let hi = self.events.partition_point(|e| e.t < end_us);
        let events = self.events[lo..hi]
            .iter()
            .map(|e| Event {
                t: e.t - start_us,
                ..*e
            })
            .collect();
        EventStream {
            width: self.width,
            height: self.height,
            duration_us: end_us.saturating_sub(start_us),
            events,
        }
    }

    pub fn count_polarity(&self, p: Polarity) -> usize {
        self.events.iter().filter(|e| e.p == p).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_sorts_by_time_then_row_then_column() {
        let evs = vec![
            Event::new(5, 1, 0, Polarity::On),
            Event::new(5, 0, 1, Polarity::Off),
            Event::new(5, 0, 0, Polarity::On),
            Event::new(5, 0, 0, Polarity::Off),
            Event::new(1, 3, 3, Polarity::On),
        ];
        let s = EventStream::new(4, 4, 10, evs).unwrap();
        let keys: Vec<_> = s
            .events()
            .iter()
            .map(|e| (e.t, e.y, e.x, e.p.sign()))
            .collect();
        assert_eq!(
            keys,
            vec![
                (1, 3, 3, 1),
                (5, 0, 0, -1),
                (5, 0, 0, 1),
                (5, 0, 1, 1),
                (5, 1, 0, -1)
            ]
        );
    }

    #[test]
    fn out_of_bounds_event_is_rejected() {
        let err = EventStream::new(4, 4, 0, vec![Event::new(0, 4, 0, Polarity::On)]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn polarity_sign_round_trip() {
        assert_eq!(Polarity::from_sign(-1).unwrap(), Polarity::Off);
        assert_eq!(Polarity::from_sign(1).unwrap().sign(), 1);
        assert!(Polarity::from_sign(0).is_err());
        assert!(Polarity::from_sign(2).is_err());
    }

    #[test]
    fn window_rebases_timestamps() {
        let evs = (0..10)
            .map(|i| Event::new(i * 100, 0, 0, Polarity::On))
            .collect();
        let s = EventStream::new(1, 1, 1000, evs).unwrap();
        let w = s.window(250, 550);
        assert_eq!(w.len(), 3);
        assert_eq!(w.events()[0].t, 50);
        assert_eq!(w.duration_us(), 300);
    }
}
