//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used by the SDE → kernel oracle and by density normalization checks. The
//! rule never evaluates the integrand at interval endpoints, which lets it
//! integrate schedule coefficients that are undefined exactly at `t = 0`.

use crate::error::{Error, Result};

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
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Maximum number of subintervals before giving up.
pub const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn kronrod<F>(f: &mut F, lo: f64, hi: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(centre)?;
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(centre - dx)? + f(centre + dx)?;
        k += w * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    let value = k * half;
    let error = ((k - g) * half).abs();
    if !value.is_finite() {
        return Err(Error::Quadrature {
            tol: f64::NAN,
            estimate: f64::NAN,
        });
    }
    Ok(Segment {
        lo,
        hi,
        value,
        error,
    })
}

/// Integrates a fallible integrand over `[lo, hi]` until the estimated error
/// is below `max(tol · |value|, abs_tol)`.
///
/// Returns `(value, error_estimate)`. Integrand errors are propagated.
pub fn integrate_checked<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    abs_tol: f64,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(tol > 0.0) || !(abs_tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if lo == hi {
        return Ok((0.0, 0.0));
    }
    if hi < lo {
        let (v, e) = integrate_checked(f, hi, lo, tol, abs_tol)?;
        return Ok((-v, e));
    }

    let mut segments = vec![kronrod(&mut f, lo, hi)?];
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        let scale: f64 = segments.iter().map(|s| s.value.abs()).sum();
        if error <= (tol * value.abs()).max(abs_tol) || error <= 50.0 * f64::EPSILON * scale {
            return Ok((value, error));
        }
        if segments.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature {
                tol,
                estimate: error / value.abs().max(f64::MIN_POSITIVE),
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .map(|(i, _)| i)
            .expect("at least one segment");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.lo + s.hi);
        if mid <= s.lo || mid >= s.hi {
            return Err(Error::Quadrature {
                tol,
                estimate: error / value.abs().max(f64::MIN_POSITIVE),
            });
        }
        segments.push(kronrod(&mut f, s.lo, mid)?);
        segments.push(kronrod(&mut f, mid, s.hi)?);
    }
}

/// Infallible-integrand wrapper around [`integrate_checked`], relative
/// tolerance only.
pub fn integrate<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_checked(|x| Ok(f(x)), lo, hi, tol, 0.0).map(|(v, _)| v)
}
