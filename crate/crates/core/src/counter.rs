//! Float-allocation accounting.
//!
//! Every float buffer used by the scoring heads is a [`FloatBuf`], which
//! reports its size to a thread-local counter on creation and on drop. The
//! counter tracks live floats, the high-water mark of live floats and the
//! cumulative number of floats allocated. Counts are exact and independent
//! of the platform allocator.
//!
//! A buffer created on one thread and dropped on another (rayon workers
//! returning gradients, say) moves its count between the two threads, so
//! per-thread live counts are signed. Measured regions run on one thread.

use std::cell::Cell;
use std::ops::{Deref, DerefMut};

thread_local! {
    static LIVE: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
    static TOTAL: Cell<usize> = const { Cell::new(0) };
}

fn on_alloc(len: usize) {
    LIVE.with(|live| {
        let now = live.get() + len as isize;
        live.set(now);
        PEAK.with(|peak| {
            if now > peak.get() {
                peak.set(now);
            }
        });
    });
    TOTAL.with(|total| total.set(total.get() + len));
}

fn on_free(len: usize) {
    LIVE.with(|live| live.set(live.get() - len as isize));
}

/// Floats allocated minus floats freed on this thread.
pub fn live_floats() -> isize {
    LIVE.with(Cell::get)
}

/// Counts gathered over one measured region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AllocStats {
    /// High-water mark of floats allocated inside the region and still live,
    /// relative to the live count on entry.
    pub peak_live: usize,
    /// Sum of the sizes of every buffer allocated inside the region.
    pub total_allocated: usize,
    /// Floats allocated inside the region that outlive it.
    pub retained: usize,
}

/// Runs `f` and reports the float allocations it performed on this thread.
///
/// Regions nest: the enclosing region still observes the inner allocations.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, AllocStats) {
    let base_live = live_floats();
    let outer_peak = PEAK.with(|p| p.replace(base_live));
    let outer_total = TOTAL.with(|t| t.replace(0));

    let out = f();

    let inner_peak = PEAK.with(Cell::get);
    let inner_total = TOTAL.with(Cell::get);
    let end_live = live_floats();
    PEAK.with(|p| p.set(outer_peak.max(inner_peak)));
    TOTAL.with(|t| t.set(outer_total + inner_total));

    let stats = AllocStats {
        peak_live: (inner_peak - base_live).max(0) as usize,
        total_allocated: inner_total,
        retained: (end_live - base_live).max(0) as usize,
    };
    (out, stats)
}

/// A counted, heap-allocated buffer of `f64`.
#[derive(Debug, PartialEq)]
pub struct FloatBuf {
    data: Vec<f64>,
}

impl FloatBuf {
    pub fn zeros(len: usize) -> Self {
        on_alloc(len);
        FloatBuf { data: vec![0.0; len] }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        on_alloc(len);
        FloatBuf { data: vec![value; len] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        on_alloc(data.len());
        FloatBuf { data }
    }

    pub fn into_vec(mut self) -> Vec<f64> {
        let data = std::mem::take(&mut self.data);
        on_free(data.len());
        std::mem::forget(self);
        data
    }
}

impl Clone for FloatBuf {
    fn clone(&self) -> Self {
        FloatBuf::from_vec(self.data.clone())
    }
}

impl Drop for FloatBuf {
    fn drop(&mut self) {
        on_free(self.data.len());
    }
}

impl Deref for FloatBuf {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for FloatBuf {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl FromIterator<f64> for FloatBuf {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        FloatBuf::from_vec(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measures_peak_and_total() {
        let (_, stats) = measure(|| {
            let a = FloatBuf::zeros(10);
            let b = FloatBuf::zeros(5);
            drop(a);
            let _c = FloatBuf::zeros(3);
            drop(b);
        });
        assert_eq!(stats.peak_live, 15);
        assert_eq!(stats.total_allocated, 18);
        assert_eq!(stats.retained, 0);
    }

    #[test]
    fn nested_regions_propagate() {
        let (_, outer) = measure(|| {
            let _a = FloatBuf::zeros(4);
            let (kept, inner) = measure(|| FloatBuf::zeros(6));
            assert_eq!(inner.peak_live, 6);
            assert_eq!(inner.retained, 6);
            drop(kept);
        });
        assert_eq!(outer.peak_live, 10);
        assert_eq!(outer.total_allocated, 10);
    }

    #[test]
    fn into_vec_releases_count() {
        let before = live_floats();
        let v = FloatBuf::filled(7, 1.5).into_vec();
        assert_eq!(v, vec![1.5; 7]);
        assert_eq!(live_floats(), before);
    }

    #[test]
    fn drop_on_another_thread() {
        let buf = std::thread::spawn(|| FloatBuf::zeros(9)).join().unwrap();
        let before = live_floats();
        drop(buf);
        assert_eq!(live_floats(), before - 9);
        let (_, stats) = measure(|| FloatBuf::zeros(4));
        assert_eq!(stats.peak_live, 4);
    }
}
