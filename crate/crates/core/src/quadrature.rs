//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{OrrError, Result};

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` by bisection of
/// the interval with the largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = kronrod15(&f, a, b);
    let mut segments = vec![(a, b, v, e)];
    let mut total_err = e;
    let mut iterations = 0;
    while total_err > tol {
        iterations += 1;
        if iterations > 2000 {
            return Err(OrrError::Quadrature { a, b, estimate: total_err });
        }
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (sa, sb, _, _) = segments.swap_remove(idx);
        let mid = 0.5 * (sa + sb);
        let (v1, e1) = kronrod15(&f, sa, mid);
        let (v2, e2) = kronrod15(&f, mid, sb);
        segments.push((sa, mid, v1, e1));
        segments.push((mid, sb, v2, e2));
        total_err = segments.iter().map(|s| s.3).sum();
    }
    Ok(segments.iter().map(|s| s.2).sum())
}
