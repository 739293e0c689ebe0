//! Event-stream primitives.

use serde::{Deserialize, Serialize};

/// Event polarity: positive for an intensity rise past the threshold,
/// negative for a fall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    /// Wire encoding: 1 = positive, 0 = negative.
    pub fn to_byte(self) -> u8 {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Polarity> {
        match b {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }
}

/// A single sensor event: pixel, polarity, microsecond timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
    pub t_us: u64,
}

impl Event {
    /// Canonical ordering key: time, then y, x, polarity. Streams sorted by
    /// this key are byte-diffable.
    pub fn sort_key(&self) -> (u64, u16, u16, u8) {
        (self.t_us, self.y, self.x, self.polarity.to_byte())
    }

    pub fn is_positive(&self) -> bool {
        self.polarity == Polarity::Positive
    }
}

/// An event sequence with its sensor geometry, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

impl EventStream {
    /// Build a stream, sorting into canonical order and checking coordinate
    /// ranges.
    pub fn new(width: u32, height: u32, mut events: Vec<Event>) -> Self {
        assert!(
            events.iter().all(|e| (e.x as u32) < width && (e.y as u32) < height),
            "event coordinates out of sensor range"
        );
        events.sort_unstable_by_key(Event::sort_key);
        EventStream { width, height, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_canonical(&self) -> bool {
        self.events.windows(2).all(|w| w[0].sort_key() <= w[1].sort_key())
    }

    /// Timestamp span (first, last), if nonempty.
    pub fn time_span_us(&self) -> Option<(u64, u64)> {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => Some((a.t_us, b.t_us)),
            _ => None,
        }
    }

    pub fn positive_count(&self) -> usize {
        self.events.iter().filter(|e| e.is_positive()).count()
    }
}
