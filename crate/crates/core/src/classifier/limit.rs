use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding concurrent remote requests.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    /// Blocks until a slot is free.
    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.current.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        InFlightGuard { limit: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.limit.current.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.limit.freed.notify_one();
    }
}
