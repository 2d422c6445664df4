//! Scalar root bracketing and unimodal maximisation.

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs.
///
/// Runs until the bracket collapses to adjacent floats or its width drops below `xtol`.
/// Returns `None` when the endpoints do not bracket a root.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= xtol {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    // endpoint with the smaller residual
    let (a, b) = (f(lo), f(hi));
    Some(if a.abs() <= b.abs() { lo } else { hi })
}

/// Expands `[lo, hi]` by doubling `hi` until `f` changes sign, then bisects.
pub fn bisect_expanding<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    mut hi: f64,
    xtol: f64,
    max_doublings: usize,
) -> Option<f64> {
    let flo = f(lo);
    let mut fhi = f(hi);
    let mut n = 0;
    while flo.signum() == fhi.signum() && fhi != 0.0 {
        if n == max_doublings {
            return None;
        }
        hi *= 2.0;
        fhi = f(hi);
        n += 1;
    }
    bisect(f, lo, hi, xtol)
}

/// Golden-section search for the maximiser of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let m = 0.5 * (a + b);
    // the bracket ends are candidates too when the maximum sits on the boundary
    [a, m, b]
        .into_iter()
        .map(|x| (x, f(x)))
        .fold((m, f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 { cand } else { best })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bisect_rejects_non_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
    }

    #[test]
    fn expanding_bracket() {
        let r = bisect_expanding(|x| 10.0 - x, 0.0, 1.0, 1e-14, 60).unwrap();
        assert!((r - 10.0).abs() < 1e-12);
    }

    #[test]
    fn golden_interior_and_boundary() {
        let m = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((m - 0.3).abs() < 1e-8);
        let e = golden_max(|x| x, 0.0, 1.0, 1e-10);
        assert!((e - 1.0).abs() < 1e-9);
    }
}
