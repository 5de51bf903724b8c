//! Small order-statistics helpers shared across modules.

/// Linearly interpolated quantile of a sorted slice (the convention used by
/// most statistics environments: at fraction `f` the index is
/// `f * (len - 1)`, interpolating between the bracketing order statistics).
///
/// `sorted` must be non-empty and ascending; `f` is clamped to `[0, 1]`.
pub(crate) fn interpolated_quantile(sorted: &[f64], f: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let f = f.clamp(0.0, 1.0);
    let h = f * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Median of an arbitrary slice (copies and sorts; NaNs sort last and are the
/// caller's responsibility to exclude).
pub(crate) fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    interpolated_quantile(&v, 0.5)
}
