//! Monotone virtual clock in whole seconds.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClockError {
    #[error("virtual time cannot move backwards: now {now}, requested {requested}")]
    Backwards { now: u64, requested: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VirtualClock {
    now_s: u64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now_s
    }

    pub fn advance_to(&mut self, t: u64) -> Result<(), ClockError> {
        if t < self.now_s {
            return Err(ClockError::Backwards {
                now: self.now_s,
                requested: t,
            });
        }
        self.now_s = t;
        Ok(())
    }

    pub fn advance_by(&mut self, dt: u64) {
        self.now_s += dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_only() {
        let mut clock = VirtualClock::new();
        clock.advance_to(10).unwrap();
        clock.advance_by(5);
        assert_eq!(clock.now(), 15);
        assert_eq!(
            clock.advance_to(14),
            Err(ClockError::Backwards {
                now: 15,
                requested: 14
            })
        );
        clock.advance_to(15).unwrap();
    }
}
