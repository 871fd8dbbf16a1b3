use std::ops::{Add, Sub};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Monotonic nanoseconds since an arbitrary process-local epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClockReading(pub u64);

impl ClockReading {
    pub const ZERO: ClockReading = ClockReading(0);

    pub fn from_millis(ms: u64) -> Self {
        ClockReading(ms * 1_000_000)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    /// Saturating difference, zero when `earlier` is actually later.
    pub fn since(self, earlier: ClockReading) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }
}

impl Add<Duration> for ClockReading {
    type Output = ClockReading;

    fn add(self, rhs: Duration) -> ClockReading {
        ClockReading(self.0.saturating_add(duration_ns(rhs)))
    }
}

impl Sub<ClockReading> for ClockReading {
    type Output = Duration;

    fn sub(self, rhs: ClockReading) -> Duration {
        self.since(rhs)
    }
}

pub(crate) fn duration_ns(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

pub trait Clock: Send + Sync + std::fmt::Debug {
    fn now(&self) -> ClockReading;

    /// Whether time only moves when someone advances it by hand.
    fn is_manual(&self) -> bool {
        false
    }
}

/// The OS monotonic clock. All instances share one epoch so readings
/// taken from different instances are comparable.
#[derive(Debug, Clone, Copy, Default)]
pub struct MonotonicClock;

fn epoch() -> Instant {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    *EPOCH.get_or_init(Instant::now)
}

impl MonotonicClock {
    pub fn instant_of(reading: ClockReading) -> Instant {
        epoch() + Duration::from_nanos(reading.0)
    }

    pub fn reading_of(instant: Instant) -> ClockReading {
        ClockReading(duration_ns(instant.saturating_duration_since(epoch())))
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> ClockReading {
        Self::reading_of(Instant::now())
    }
}

/// Hand-driven clock for tests and virtual-time runs.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: ClockReading) -> Self {
        ManualClock(AtomicU64::new(start.0))
    }

    pub fn advance(&self, by: Duration) -> ClockReading {
        let by = duration_ns(by);
        ClockReading(self.0.fetch_add(by, Ordering::SeqCst) + by)
    }

    /// Moves the clock to `to`; never moves it backwards.
    pub fn set(&self, to: ClockReading) {
        self.0.fetch_max(to.0, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> ClockReading {
        ClockReading(self.0.load(Ordering::SeqCst))
    }

    fn is_manual(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonic_readings_never_decrease() {
        let clock = MonotonicClock;
        let mut last = clock.now();
        for _ in 0..10_000 {
            let next = clock.now();
            assert!(next >= last);
            last = next;
        }
    }

    #[test]
    fn readings_map_back_to_instants() {
        let now = Instant::now();
        let reading = MonotonicClock::reading_of(now);
        let back = MonotonicClock::instant_of(reading);
        assert!(back <= now && now - back < Duration::from_micros(1));
    }

    #[test]
    fn manual_clock_does_not_go_backwards() {
        let clock = ManualClock::new(ClockReading::from_millis(5));
        clock.set(ClockReading::from_millis(1));
        assert_eq!(clock.now(), ClockReading::from_millis(5));
        clock.advance(Duration::from_millis(10));
        assert_eq!(clock.now(), ClockReading::from_millis(15));
    }

    #[test]
    fn since_saturates() {
        let a = ClockReading(10);
        let b = ClockReading(20);
        assert_eq!(a.since(b), Duration::ZERO);
        assert_eq!(b - a, Duration::from_nanos(10));
    }
}
