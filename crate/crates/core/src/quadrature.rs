//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

// Kronrod abscissae on [-1, 1], descending, last entry is the centre.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 500;

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    resabs: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut resabs = res_k.abs();
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        res_k += wk * (f1 + f2);
        resabs += wk * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    Panel {
        a,
        b,
        value: res_k * half,
        err: ((res_k - res_g) * half).abs(),
        resabs: resabs * half.abs(),
    }
}

/// Integrate `f` over `[a, b]`.
///
/// Stops once the summed Kronrod-vs-Gauss error estimate is below
/// `min(abs_tol, rel_tol * |I|)`, floored at the round-off level of the
/// integrand. Returns `(value, error_estimate)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut panels = vec![kronrod(&f, a, b)];
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.err).sum();
        let resabs: f64 = panels.iter().map(|p| p.resabs).sum();
        let target = abs_tol.min(rel_tol * value.abs()).max(50.0 * f64::EPSILON * resabs);
        if err <= target {
            return Ok((value, err));
        }
        if panels.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureNotConverged { tol: target, err });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::QuadratureNotConverged { tol: target, err });
        }
        panels.push(kronrod(&f, p.a, mid));
        panels.push(kronrod(&f, mid, p.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let (v, _) = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14, 1e-14).unwrap();
        assert!((v - 0.0).abs() < 1e-13);
        let (v, _) = integrate(|x| x.powi(6), -1.0, 1.0, 1e-14, 1e-14).unwrap();
        assert!((v - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_transcendental() {
        let (v, _) = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-13, 1e-13).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
        let (v, _) = integrate(|x| (-x).exp(), 0.0, 30.0, 1e-13, 1e-13).unwrap();
        assert!((v - (1.0 - (-30.0f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn kink_needs_subdivision() {
        let (v, _) = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-12);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-10, 1e-10).unwrap(), (0.0, 0.0));
    }
}
