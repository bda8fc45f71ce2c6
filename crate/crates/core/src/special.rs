//! Exponential integral E1.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// E1(x) = int_x^inf e^-t / t dt for x > 0.
///
/// Power series below 1, modified Lentz continued fraction above.
pub fn exponential_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain("exponential_integral_e1", "argument must be > 0"));
    }
    Ok(if x < 1.0 { e1_series(x) } else { e1_continued_fraction(x) })
}

fn e1_series(x: f64) -> f64 {
    -EULER_GAMMA - x.ln() - ein_tail(x)
}

/// Sum_{k>=1} (-x)^k / (k k!), the entire part of E1 with its sign flipped.
fn ein_tail(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..200 {
        term *= -x / k as f64;
        let add = term / k as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn e1_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// E1(a) - E1(b) for 0 < a, b, without cancellation when both are small.
pub fn e1_difference(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain("e1_difference", "arguments must be > 0"));
    }
    if a < 2.0 && b < 2.0 {
        Ok((b / a).ln() - (ein_tail(a) - ein_tail(b)))
    } else {
        Ok(exponential_integral_e1(a)? - exponential_integral_e1(b)?)
    }
}

/// Sum_{k>=1} [(-a)^k - (-b)^k] / (k k!), the series remainder of
/// E1(a) - E1(b) - ln(b / a). Finite at a = 0 or b = 0.
pub(crate) fn ein_tail_difference(a: f64, b: f64) -> f64 {
    ein_tail(a) - ein_tail(b)
}

/// Nodes and weights of a composite 8-point Gauss-Legendre rule on [a, b].
pub(crate) fn gauss_legendre_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    const X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let h = (b - a) / panels as f64;
    let half = h / 2.0;
    let mut nodes = Vec::with_capacity(8 * panels);
    for i in 0..panels {
        let mid = a + (i as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            nodes.push((mid - half * x, w * half));
            nodes.push((mid + half * x, w * half));
        }
    }
    nodes
}

pub(crate) fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    gauss_legendre_nodes(a, b, panels).into_iter().map(|(x, w)| w * f(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature of e^-t/t after the substitution
    /// t = x + s, independent of the series/fraction code. The factor e^-x
    /// is pulled out so the tolerance is relative.
    fn e1_quadrature(x: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let f = |s: f64| (-s).exp() / (x + s);
        let (a, b) = (0.0, 60.0);
        let m = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        let tol = 1e-14 / (1.0 + x);
        (-x).exp() * simpson(&f, a, b, f(a), f(m), f(b), whole, tol, 40)
    }

    #[test]
    fn matches_quadrature_oracle() {
        let q1 = e1_quadrature(1.0);
        assert!((q1 - 0.219_383_934_4).abs() < 1e-10, "{q1}");
        let q10 = e1_quadrature(10.0);
        assert!((q10 / 4.156_97e-6 - 1.0).abs() < 1e-5, "{q10}");
        for x in [0.05, 0.3, 0.99, 1.0, 1.5, 3.0, 10.0, 25.0] {
            let q = e1_quadrature(x);
            let e = exponential_integral_e1(x).unwrap();
            assert!((e / q - 1.0).abs() < 1e-10, "x={x}: {e} vs {q}");
        }
    }

    #[test]
    fn frozen_values() {
        assert!((exponential_integral_e1(1.0).unwrap() - 0.219_383_934_4).abs() < 1e-10);
        assert!((exponential_integral_e1(10.0).unwrap() / 4.156_968_929_685e-6 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn small_argument_limit() {
        let x = 1e-6;
        let e = exponential_integral_e1(x).unwrap();
        assert!((e - (-EULER_GAMMA - x.ln())).abs() < 1e-6);
    }

    #[test]
    fn continuity_at_switch_point() {
        let below = e1_series(1.0 - 1e-12);
        let above = e1_continued_fraction(1.0);
        assert!((below / above - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(exponential_integral_e1(0.0).is_err());
        assert!(exponential_integral_e1(-1.0).is_err());
    }

    #[test]
    fn quadrature_integrates_polynomials() {
        let v = gauss_legendre(|x| x.powi(15) - 3.0 * x * x, -1.0, 2.0, 1);
        let exact = (2f64.powi(16) - 1.0) / 16.0 - 9.0;
        assert!((v - exact).abs() < 1e-10 * exact.abs());
        let total: f64 = gauss_legendre_nodes(0.0, 3.0, 4).iter().map(|n| n.1).sum();
        assert!((total - 3.0).abs() < 1e-14);
    }

    #[test]
    fn difference_matches_direct() {
        for (a, b) in [(1e-3, 0.5), (0.2, 1.9), (0.5, 3.0), (4.0, 9.0)] {
            let d = e1_difference(a, b).unwrap();
            let direct = exponential_integral_e1(a).unwrap() - exponential_integral_e1(b).unwrap();
            assert!((d - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }
}
