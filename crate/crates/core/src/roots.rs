/// Safeguarded Newton on a bracket `[a, b]` whose endpoint values have opposite signs.
///
/// `f` returns `(value, derivative)`. Newton steps that leave the bracket, or that fail to
/// halve the bracket width over two iterations, are replaced by bisection.
pub(crate) fn newton_bisect<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Option<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (mut fa, _) = f(a);
    let (fb, _) = f(b);
    if !(fa.is_finite() && fb.is_finite()) {
        return None;
    }
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let mut x = 0.5 * (a + b);
    let mut width_before = (b - a).abs();
    for it in 0..max_iter {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Some(x);
        }
        if !fx.is_finite() {
            return None;
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let width = (b - a).abs();
        if width <= xtol * (1.0 + x.abs()) {
            return Some(0.5 * (a + b));
        }
        let newton = x - fx / dfx;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let slow = it % 2 == 1 && width > 0.5 * width_before;
        if it % 2 == 1 {
            width_before = width;
        }
        let next = if newton.is_finite() && newton > lo && newton < hi && !slow {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= xtol * (1.0 + x.abs()) * 0.5 {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

/// Plain bisection on a sign change.
pub(crate) fn bisect<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return None;
    }
    let sa = fa.signum();
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= xtol * (1.0 + m.abs()) {
            return Some(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = newton_bisect(|x| (x * x - 2.0, 2.0 * x), 0.0, 4.0, 1e-15, 100).unwrap();
        assert!((r - 2.0f64.sqrt()).abs() < 1e-14);
        let r = bisect(|x| x * x - 2.0, 0.0, 4.0, 1e-15, 200).unwrap();
        assert!((r - 2.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn decreasing_function() {
        let r = newton_bisect(|x| (1.0 - x * x * x, -3.0 * x * x), 0.0, 3.0, 1e-15, 100).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn no_bracket() {
        assert!(newton_bisect(|x| (x * x + 1.0, 2.0 * x), -1.0, 1.0, 1e-12, 50).is_none());
    }

    #[test]
    fn bad_derivative_falls_back_to_bisection() {
        let r = newton_bisect(|x| (x - 0.3, 0.0), 0.0, 1.0, 1e-14, 200).unwrap();
        assert!((r - 0.3).abs() < 1e-13);
    }
}
