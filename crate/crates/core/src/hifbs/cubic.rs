use crate::error::{Error, Result};

fn lhs(a3: f64, a1: f64, a0: f64, r: f64) -> f64 {
    (a3 * r * r + a1) * r - a0
}

/// Unique nonnegative root of `a3·r³ + a1·r − a0 = 0` for `a3 ≥ 0`, `a1 > 0`, `a0 > 0`.
///
/// The left-hand side is strictly increasing and convex on `[0, ∞)`, so Newton
/// started from an upper bound decreases monotonically onto the root. A
/// bisection bracket on `[0, r_max]` guards every step anyway.
pub fn cubic_positive_root(a3: f64, a1: f64, a0: f64) -> Result<f64> {
    if !(a3 >= 0.0 && a3.is_finite())
        || !(a1 > 0.0 && a1.is_finite())
        || !(a0 > 0.0 && a0.is_finite())
    {
        return Err(Error::InvalidParameter(format!(
            "cubic coefficients need a3 ≥ 0, a1 > 0, a0 > 0; got ({a3}, {a1}, {a0})"
        )));
    }
    if a3 == 0.0 {
        return Ok(a0 / a1);
    }

    let linear_bound = a0 / a1;
    let cubic_bound = (a0 / a3).cbrt();
    let mut lo = 0.0_f64;
    let mut hi = (cubic_bound + linear_bound).max(1.0);
    let mut r = linear_bound.min(cubic_bound);

    for _ in 0..200 {
        let fr = lhs(a3, a1, a0, r);
        if fr == 0.0 {
            return Ok(r);
        }
        if fr > 0.0 {
            hi = hi.min(r);
        } else {
            lo = lo.max(r);
        }
        let slope = 3.0 * a3 * r * r + a1;
        let mut next = r - fr / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 2.0 * f64::EPSILON * r.abs() || hi - lo <= 2.0 * f64::EPSILON * hi {
            r = next;
            break;
        }
        r = next;
    }

    // Newton may stop one ulp off; keep whichever neighbour has the smaller residual.
    let best = [r, lo, hi]
        .into_iter()
        .filter(|c| c.is_finite())
        .min_by(|a, b| {
            lhs(a3, a1, a0, *a)
                .abs()
                .total_cmp(&lhs(a3, a1, a0, *b).abs())
        })
        .unwrap_or(r);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisection(a3: f64, a1: f64, a0: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while lhs(a3, a1, a0, hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if lhs(a3, a1, a0, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn linear_case() {
        assert_eq!(cubic_positive_root(0.0, 2.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn moderate_case_matches_bisection() {
        let r = cubic_positive_root(3.0, 2.0, 1.0).unwrap();
        // frozen from a 40-digit mpmath root of 3r³ + 2r − 1
        assert!((r - 0.402_319_938_062_814_3).abs() < 1e-12, "{r}");
        assert!((r - bisection(3.0, 2.0, 1.0)).abs() < 1e-14);
        assert!(lhs(3.0, 2.0, 1.0, r).abs() <= 1e-12);
    }

    #[test]
    fn huge_constant_term() {
        let a0 = 1e12;
        let r = cubic_positive_root(3.0, 2.0, a0).unwrap();
        assert!(lhs(3.0, 2.0, a0, r).abs() <= 1e-12 * a0);
        assert!((r / (a0 / 3.0).cbrt() - 1.0).abs() < 1e-6);
        assert!((r - bisection(3.0, 2.0, a0)).abs() <= 1e-10 * r);
    }

    #[test]
    fn rejects_invalid_coefficients() {
        assert!(cubic_positive_root(-1.0, 1.0, 1.0).is_err());
        assert!(cubic_positive_root(1.0, 0.0, 1.0).is_err());
        assert!(cubic_positive_root(1.0, 1.0, 0.0).is_err());
        assert!(cubic_positive_root(f64::NAN, 1.0, 1.0).is_err());
    }
}
