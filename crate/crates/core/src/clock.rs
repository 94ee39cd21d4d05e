//! Time sources. Pipeline runs use a simulated clock per paper so that
//! repeated runs produce identical timestamps; interactive use takes the
//! system clock.

use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};

pub type Timestamp = DateTime<Utc>;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;

    /// Block (or advance simulated time) for a backoff interval.
    fn sleep(&self, d: Duration);

    /// Account for work that took `d` on the simulated timeline. A no-op on
    /// the system clock, where real time has already passed.
    fn simulate(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }

    fn simulate(&self, _d: Duration) {}
}

/// Deterministic clock: every `now()` returns the current instant and then
/// moves forward by `tick`.
#[derive(Debug)]
pub struct SimulatedClock {
    current: Mutex<Timestamp>,
    tick: chrono::Duration,
}

impl SimulatedClock {
    pub fn new(start: Timestamp, tick: Duration) -> Self {
        SimulatedClock {
            current: Mutex::new(start),
            tick: chrono::Duration::from_std(tick).expect("tick fits chrono range"),
        }
    }

    pub fn starting_at(start: Timestamp) -> Self {
        SimulatedClock::new(start, Duration::from_secs(1))
    }

    /// Current instant without advancing.
    pub fn peek(&self) -> Timestamp {
        *self.current.lock().unwrap()
    }

    fn advance(&self, d: Duration) {
        let d = chrono::Duration::from_std(d).expect("duration fits chrono range");
        let mut cur = self.current.lock().unwrap();
        *cur += d;
    }
}

impl Clock for SimulatedClock {
    fn now(&self) -> Timestamp {
        let mut cur = self.current.lock().unwrap();
        let t = *cur;
        *cur += self.tick;
        t
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }

    fn simulate(&self, d: Duration) {
        self.advance(d);
    }
}

/// ISO 8601 with millisecond precision and a `Z` suffix.
pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Result<Timestamp, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulated_clock_ticks_and_simulates() {
        let start = parse_timestamp("2025-10-01T00:00:00Z").unwrap();
        let clock = SimulatedClock::starting_at(start);
        assert_eq!(clock.now(), start);
        assert_eq!(clock.now(), start + chrono::Duration::seconds(1));
        clock.simulate(Duration::from_secs(5400));
        assert_eq!(clock.peek(), start + chrono::Duration::seconds(5402));
    }

    #[test]
    fn timestamp_round_trip() {
        let t = parse_timestamp("2025-10-01T12:30:05.250Z").unwrap();
        assert_eq!(format_timestamp(&t), "2025-10-01T12:30:05.250Z");
        assert_eq!(parse_timestamp(&format_timestamp(&t)).unwrap(), t);
    }
}
