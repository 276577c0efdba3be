//! Small shared helpers: deterministic hashing, rounding, parallel dispatch.

/// Rounds half away from zero toward +infinity: 0.5 -> 1, -0.5 -> 0.
pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Clamps `x` into [lo, hi]; infinite bounds pass through.
pub(crate) fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Deterministic 64-bit hash of a point quantized to a 1e-9 grid.
///
/// Used as the dedup key for pool submissions; two points closer than the
/// grid everywhere collide on purpose. FNV-1a over the quantized words keeps
/// the key stable across runs and platforms.
pub(crate) fn point_key(x: &[f64]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for &v in x {
        let q = (v * 1e9).round();
        let q = if q >= i64::MAX as f64 {
            i64::MAX
        } else if q <= i64::MIN as f64 {
            i64::MIN
        } else {
            q as i64
        };
        for b in q.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Maps `f` over 0..n, in parallel when requested and compiled.
#[cfg(feature = "parallel")]
pub(crate) fn map_index<T: Send, F: Fn(usize) -> T + Send + Sync>(
    n: usize,
    parallel: bool,
    f: F,
) -> Vec<T> {
    use rayon::prelude::*;
    if parallel && n > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_index<T: Send, F: Fn(usize) -> T + Send + Sync>(
    n: usize,
    _parallel: bool,
    f: F,
) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Consumes `items`, applying `f` to each, in parallel when requested and
/// compiled.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_item<T: Send, F: Fn(T) + Send + Sync>(items: Vec<T>, parallel: bool, f: F) {
    use rayon::prelude::*;
    if parallel && items.len() > 1 {
        items.into_par_iter().for_each(f);
    } else {
        items.into_iter().for_each(f);
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_item<T: Send, F: Fn(T) + Send + Sync>(items: Vec<T>, _parallel: bool, f: F) {
    items.into_iter().for_each(f);
}

/// Elapsed-time source. The threaded scheduler uses wall time; the
/// deterministic scheduler drives a virtual clock so traces replay exactly.
pub trait Clock: Send + Sync {
    /// Seconds since the run started.
    fn elapsed(&self) -> f64;
}

pub struct WallClock {
    start: std::time::Instant,
}

impl WallClock {
    pub fn new() -> WallClock {
        WallClock {
            start: std::time::Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        WallClock::new()
    }
}

impl Clock for WallClock {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Counts abstract ticks; elapsed = ticks * seconds_per_tick.
pub struct VirtualClock {
    ticks: std::sync::atomic::AtomicU64,
    seconds_per_tick: f64,
}

impl VirtualClock {
    pub fn new(seconds_per_tick: f64) -> VirtualClock {
        VirtualClock {
            ticks: std::sync::atomic::AtomicU64::new(0),
            seconds_per_tick,
        }
    }

    pub fn advance(&self, ticks: u64) {
        self.ticks
            .fetch_add(ticks, std::sync::atomic::Ordering::Relaxed);
    }
}

impl Clock for VirtualClock {
    fn elapsed(&self) -> f64 {
        self.ticks.load(std::sync::atomic::Ordering::Relaxed) as f64 * self.seconds_per_tick
    }
}

/// Splits `data` into the segments delimited by `seg_ptr` (CSR-style offsets).
pub(crate) fn split_segments<'a, T>(data: &'a mut [T], seg_ptr: &[usize]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(seg_ptr.len().saturating_sub(1));
    let mut rest = data;
    let mut consumed = 0usize;
    for w in seg_ptr.windows(2) {
        let len = w[1] - w[0];
        debug_assert_eq!(w[0], consumed);
        let (seg, tail) = rest.split_at_mut(len);
        out.push(seg);
        rest = tail;
        consumed += len;
    }
    out
}
