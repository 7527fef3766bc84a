use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Time source for rate limiting and backoff, swappable for tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Clock whose `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: Mutex<Duration>,
    slept: Mutex<Vec<Duration>>,
}

impl VirtualClock {
    pub fn new() -> Arc<Self> {
        Arc::new(VirtualClock::default())
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().expect("clock lock") += d;
    }

    /// Every sleep requested so far, in order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().expect("clock lock").clone()
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock lock")
    }

    fn sleep(&self, d: Duration) {
        self.slept.lock().expect("clock lock").push(d);
        self.advance(d);
    }
}

const WINDOW: Duration = Duration::from_secs(60);

/// Sliding-window limiter: at most `per_minute` admissions in any 60 s span.
pub struct RateLimiter {
    per_minute: usize,
    admitted: Mutex<VecDeque<Duration>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(per_minute: usize, clock: Arc<dyn Clock>) -> Self {
        assert!(per_minute > 0, "rate cap must be positive");
        RateLimiter {
            per_minute,
            admitted: Mutex::new(VecDeque::new()),
            clock,
        }
    }

    /// Block until a slot is free, then record the admission.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut q = self.admitted.lock().expect("limiter lock");
                let now = self.clock.now();
                while q.front().is_some_and(|&t| now >= t + WINDOW) {
                    q.pop_front();
                }
                if q.len() < self.per_minute {
                    q.push_back(now);
                    return now;
                }
                (q[0] + WINDOW) - now
            };
            self.clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_exceeds_cap_in_any_window() {
        let clock = VirtualClock::new();
        let limiter = RateLimiter::new(7, clock.clone());
        let mut stamps = Vec::new();
        for i in 0..100 {
            if i % 3 == 0 {
                clock.advance(Duration::from_millis(1700));
            }
            stamps.push(limiter.acquire());
        }
        for (i, &t) in stamps.iter().enumerate() {
            let in_window = stamps[i..].iter().take_while(|&&s| s < t + WINDOW).count();
            assert!(in_window <= 7, "window starting at {t:?} admitted {in_window}");
        }
        // the cap is actually reached, not just respected
        assert!(stamps.windows(7).any(|w| w[6] - w[0] < WINDOW));
    }

    #[test]
    fn admits_immediately_under_cap() {
        let clock = VirtualClock::new();
        let limiter = RateLimiter::new(3, clock.clone());
        for _ in 0..3 {
            limiter.acquire();
        }
        assert!(clock.sleeps().is_empty());
        limiter.acquire();
        assert_eq!(clock.sleeps(), vec![WINDOW]);
    }
}
