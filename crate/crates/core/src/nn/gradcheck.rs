//! Central-finite-difference verification of analytic gradients.
//!
//! Used by the test suites to check every layer class of the networks at
//! `f64`; lives in the library so integration tests can share it.

/// Relative error between an analytic derivative and a central difference
/// of `f` at parameter index `idx`, stepping by `h`.
///
/// `get`/`set` address the flattened parameter vector the closure reads.
pub fn relative_error(
    mut f: impl FnMut() -> f64,
    mut get: impl FnMut(usize) -> f64,
    mut set: impl FnMut(usize, f64),
    idx: usize,
    analytic: f64,
    h: f64,
) -> f64 {
    let orig = get(idx);
    set(idx, orig + h);
    let plus = f();
    set(idx, orig - h);
    let minus = f();
    set(idx, orig);
    let numeric = (plus - minus) / (2.0 * h);
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (numeric - analytic).abs() / denom
}

/// Deterministically spread `count` probe indices over `len` slots.
pub fn probe_indices(len: usize, count: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let count = count.min(len);
    (0..count)
        .map(|i| i * len / count + (len / (2 * count.max(1))).min(len - 1))
        .map(|i| i.min(len - 1))
        .collect()
}
