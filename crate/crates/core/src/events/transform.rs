use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Event, EventStream};

/// Which augmentation flips to apply to a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flips {
    pub horizontal: bool,
    pub vertical: bool,
    pub polarity: bool,
}

impl Flips {
    pub const NONE: Flips = Flips {
        horizontal: false,
        vertical: false,
        polarity: false,
    };
    pub const ALL: Flips = Flips {
        horizontal: true,
        vertical: true,
        polarity: true,
    };

    /// Three independent fair coin tosses.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Flips {
            horizontal: rng.gen_bool(0.5),
            vertical: rng.gen_bool(0.5),
            polarity: rng.gen_bool(0.5),
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::draw(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn apply(&self, stream: &EventStream) -> EventStream {
        let (w, h) = (stream.width(), stream.height());
        let events = stream
            .events()
            .iter()
            .map(|e| Event {
                t: e.t,
                x: if self.horizontal {
                    (w - 1 - e.x as u32) as u16
                } else {
                    e.x
                },
                y: if self.vertical {
                    (h - 1 - e.y as u32) as u16
                } else {
                    e.y
                },
                p: if self.polarity { e.p.flipped() } else { e.p },
            })
            .collect();
        EventStream::new(w, h, stream.duration_us(), events)
            .expect("flips keep events inside the grid")
    }
}

/// Random horizontal, vertical and polarity flips, each with probability 1/2.
pub fn augment(stream: &EventStream, seed: u64) -> EventStream {
    Flips::from_seed(seed).apply(stream)
}

pub fn downsample_half(stream: &EventStream) -> EventStream {
    let w = stream.width().div_ceil(2);
    let h = stream.height().div_ceil(2);
    let events = stream
        .events()
        .iter()
        .map(|e| Event {
            x: e.x / 2,
            y: e.y / 2,
            ..*e
        })
        .collect();
    EventStream::new(w, h, stream.duration_us(), events)
        .expect("halved coordinates stay inside the halved grid")
}
