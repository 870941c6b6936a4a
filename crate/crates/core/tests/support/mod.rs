//! Test-only oracles, kept independent of the library's solve paths.

/// Pure bisection for the plateau equation `s_prev (1 - e^{-lambda s}) = s`
/// on `(0, s_prev)`; 200 halvings reach machine precision from any start.
/// Deliberately shares no code with the production hybrid solver.
pub fn bisect_plateau(s_prev: f64, lambda: f64) -> Option<f64> {
    if lambda * s_prev <= 1.0 {
        return None;
    }
    let g = |s: f64| s_prev * (1.0 - (-lambda * s).exp()) - s;
    let mut lo = 0.0_f64;
    let mut hi = s_prev;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Full ladder by pure bisection: plateaus and the termination index.
pub fn bisect_ladder(s0: f64, lambda: f64, cap: usize) -> (Vec<f64>, Option<usize>) {
    let mut plateaus = vec![s0];
    for n in 0..cap {
        match bisect_plateau(plateaus[n], lambda) {
            Some(next) => plateaus.push(next),
            None => return (plateaus, Some(n)),
        }
    }
    (plateaus, None)
}
