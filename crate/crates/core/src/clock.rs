use core::time::Duration;

/// Monotonic time source used for per-step runtime measurements and solver
/// deadlines.
///
/// `now` returns the time elapsed since an arbitrary but fixed epoch.
pub trait Clock {
    fn now(&self) -> Duration;
}

/// A clock that never advances. Runtimes come out as zero and deadlines
/// never fire.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> Duration {
        Duration::ZERO
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now(&self) -> Duration {
        (**self).now()
    }
}
