//! Bounded Nelder-Mead on a single variable. Trial points outside the box are
//! clamped back onto it.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum1d {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `f` on `[lo, hi]` starting from the simplex `{x0, x0 + step}`.
/// Stops once the simplex is narrower than `width_tol` or after `max_iter`
/// iterations.
pub fn minimize_bounded_1d(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    x0: f64,
    step: f64,
    width_tol: f64,
    max_iter: usize,
) -> Minimum1d {
    let clamp = |x: f64| x.clamp(lo, hi);
    let start = clamp(x0);
    let mut second = clamp(x0 + step);
    if second == start {
        second = clamp(x0 - step);
    }
    let mut s = [(start, f(start)), (second, f(second))];
    let mut iterations = 0;
    while iterations < max_iter {
        if s[1].1 < s[0].1 {
            s.swap(0, 1);
        }
        if (s[1].0 - s[0].0).abs() < width_tol {
            break;
        }
        iterations += 1;
        let (best, worst) = (s[0], s[1]);
        // Centroid of all but the worst vertex is the best vertex itself.
        let c = best.0;
        let xr = clamp(c + (c - worst.0));
        let fr = f(xr);
        if fr < best.1 {
            let xe = clamp(c + 2.0 * (c - worst.0));
            let fe = f(xe);
            s[1] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        // With two vertices "better than the second-worst" never happens;
        // go straight to contraction.
        let outside = fr < worst.1;
        let xc = if outside { clamp(c + 0.5 * (xr - c)) } else { clamp(c + 0.5 * (worst.0 - c)) };
        let fc = f(xc);
        if fc < if outside { fr } else { worst.1 } {
            s[1] = (xc, fc);
        } else {
            let xs = clamp(c + 0.5 * (worst.0 - c));
            s[1] = (xs, f(xs));
        }
    }
    if s[1].1 < s[0].1 {
        s.swap(0, 1);
    }
    Minimum1d { x: s[0].0, value: s[0].1, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_minimum() {
        let m = minimize_bounded_1d(|x| (x - 3.7).powi(2), 0.0, 10.0, 5.0, 1.0, 1e-9, 10_000);
        assert!((m.x - 3.7).abs() < 1e-8);
    }

    #[test]
    fn finds_kink_minimum() {
        let m = minimize_bounded_1d(|x| (x - 100.0).abs() + 0.3 * (x - 100.0).abs(), 0.0, 236.0, 118.0, 23.6, 1e-6, 10_000);
        assert!((m.x - 100.0).abs() < 1e-5);
    }

    #[test]
    fn respects_bounds() {
        let m = minimize_bounded_1d(|x| x, 2.0, 5.0, 4.0, 0.5, 1e-9, 10_000);
        assert!((m.x - 2.0).abs() < 1e-8);
        let m = minimize_bounded_1d(|x| -x, 2.0, 5.0, 4.0, 0.5, 1e-9, 10_000);
        assert!((m.x - 5.0).abs() < 1e-8);
    }
}
