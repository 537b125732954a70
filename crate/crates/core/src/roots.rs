//! Bracketing root finders shared by the dispersion and metrics modules.

use crate::error::{Error, Result};

const MAX_BISECTIONS: usize = 400;

/// Bisection on a bracket `[lo, hi]` with `f(lo)` and `f(hi)` of opposite
/// sign. Stops once the bracket is narrower than `xtol` or can no longer be
/// split in floating point (`xtol = 0`).
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoRoot(format!("no sign change in [{lo}, {hi}]")));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= xtol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Samples `f` at `points` uniformly spaced abscissae on `[lo, hi]` and
/// returns every sub-interval across which it changes sign.
pub fn scan_sign_changes<F>(mut f: F, lo: f64, hi: f64, points: usize) -> Result<Vec<(f64, f64)>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let points = points.max(2);
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let mut out = Vec::new();
    let mut prev = f(xs[0])?;
    for w in xs.windows(2) {
        let next = f(w[1])?;
        if prev == 0.0 || prev.signum() != next.signum() {
            out.push((w[0], w[1]));
        }
        prev = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 0.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn honours_tolerance() {
        let r = bisect(|x| Ok(x - 0.3), 0.0, 1.0, 1e-3).unwrap();
        assert!((r - 0.3).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_bracket() {
        assert!(matches!(
            bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 0.0),
            Err(Error::NoRoot(_))
        ));
    }

    #[test]
    fn scan_finds_all_crossings() {
        let found = scan_sign_changes(|x| Ok(x.sin()), 0.5, 10.0, 100).unwrap();
        assert_eq!(found.len(), 3);
    }
}
