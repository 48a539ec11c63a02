//! Binomial weights and moments, used for the distribution of the height
//! function inside the central rectangle.

use num_bigint::BigUint;
use num_traits::One;

use crate::rational::Rational;

/// `P(Bin(d, eps) = j)` for `j = 0..=d` in binary64.
///
/// Built by the ratio recurrence outward from the mode and normalized to
/// total mass one, which keeps relative accuracy near machine precision
/// even for `d` in the millions. Terms below the binary64 range are zero.
pub fn pmf_table(d: u64, eps: &Rational) -> Vec<f64> {
    let e = eps.to_f64();
    let odds = e / one_minus(eps).to_f64();
    let n = d as usize;
    let mode = (((d + 1) as f64 * e).floor() as usize).min(n);
    let mut pmf = vec![0.0f64; n + 1];
    pmf[mode] = 1.0;
    let tiny = 1e-300;
    let mut v = 1.0;
    for j in mode..n {
        v *= (d - j as u64) as f64 / (j + 1) as f64 * odds;
        if v < tiny {
            break;
        }
        pmf[j + 1] = v;
    }
    v = 1.0;
    for j in (1..=mode).rev() {
        v *= j as f64 / ((d - j as u64 + 1) as f64 * odds);
        if v < tiny {
            break;
        }
        pmf[j - 1] = v;
    }
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// `E[Bin(d, eps)^q]` in binary64.
pub fn moment_f64(d: u64, eps: &Rational, q: f64) -> f64 {
    pmf_table(d, eps)
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, p)| **p > 0.0)
        .map(|(j, p)| p * (j as f64).powf(q))
        .sum()
}

/// `E[Bin(d, eps)^q]` exactly, for a nonnegative integer `q`.
pub fn moment_exact(d: u64, eps: &Rational, q: u32) -> Rational {
    let one_m = one_minus(eps);
    let mut total = Rational::zero();
    let mut choose = BigUint::one();
    for j in 0..=d {
        if j > 0 {
            choose = choose * BigUint::from(d - j + 1) / BigUint::from(j);
            let weight = Rational::from_big_uint(&choose)
                * eps.pow(j as u32)
                * one_m.pow((d - j) as u32);
            total = total + weight * Rational::from_integer(j).pow(q);
        }
    }
    total
}

/// Exact `C(d, j)` as a rational.
pub fn choose_exact(d: u64, j: u64) -> Rational {
    let mut c = BigUint::one();
    for i in 1..=j {
        c = c * BigUint::from(d - j + i) / BigUint::from(i);
    }
    Rational::from_big_uint(&c)
}

pub(crate) fn one_minus(eps: &Rational) -> Rational {
    Rational::one()
        .checked_sub(eps)
        .expect("epsilon above one")
}
