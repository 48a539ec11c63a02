//! The maximal operator of a single configuration acting on atom-constant
//! functions, plus the distribution-function quantities built on it.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{lp_norm, shadow_ratio, AtomId, AtomSpace, Scalar, StepFunction};
use crate::rational::Rational;

/// `M f` together with the averages `⟨f⟩_{Q_k}` it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct MaximalResult<V> {
    pub mf: StepFunction<V>,
    /// `averages[k - 1] = ⟨f⟩_{Q_k}`.
    pub averages: Vec<V>,
}

pub fn apply_maximal<V: Scalar>(space: &AtomSpace, f: &StepFunction<V>) -> Result<MaximalResult<V>> {
    if f.space() != space {
        return Err(Error::SpaceMismatch);
    }
    let w = space.weights::<V>();
    let d = space.d() as usize;
    let inner = f.inner_values();
    let slabs = f.slab_values();

    if space.is_symmetric() {
        // A class-j atom lies in Q_k for a fraction j/d of the class.
        let dd = V::from_u64(d as u64);
        let mut inside = V::zero();
        for (j, (v, m)) in inner.iter().zip(&w.inner).enumerate().skip(1) {
            let share = m.mul(&V::from_u64(j as u64)).div(&dd);
            inside = inside.add(&v.mul(&share));
        }
        let avg = inside.add(&slabs[0].mul(&w.slab)).div(&w.q0);
        let mut classes = vec![avg.clone(); d + 1];
        classes[0] = V::zero();
        let mf = StepFunction::from_parts(space, classes, vec![avg.clone()], V::zero());
        return Ok(MaximalResult {
            mf,
            averages: vec![avg; d],
        });
    }

    let mut acc = vec![V::zero(); d];
    for (mask, v) in inner.iter().enumerate() {
        if mask == 0 {
            continue;
        }
        let mass = v.mul(&w.inner[(mask as u64).count_ones() as usize]);
        let mut m = mask;
        while m != 0 {
            let k = m.trailing_zeros() as usize;
            acc[k] = acc[k].add(&mass);
            m &= m - 1;
        }
    }
    let averages: Vec<V> = acc
        .iter()
        .zip(slabs)
        .map(|(a, s)| a.add(&s.mul(&w.slab)).div(&w.q0))
        .collect();

    // M f on Inner(E) = max_{k in E} avg_k, filled by dropping the lowest bit.
    let mut mf_inner = vec![V::zero(); inner.len()];
    for mask in 1..inner.len() {
        let low = mask.trailing_zeros() as usize;
        let rest = &mf_inner[mask & (mask - 1)];
        let cand = &averages[low];
        mf_inner[mask] = if cand > rest { cand.clone() } else { rest.clone() };
    }
    let mf = StepFunction::from_parts(space, mf_inner, averages.clone(), V::zero());
    Ok(MaximalResult { mf, averages })
}

/// `|{g > lambda}|`, strict inequality.
pub fn superlevel_measure<V: Scalar>(g: &StepFunction<V>, lambda: &V) -> V {
    let w = g.space().weights::<V>();
    let mut total = V::zero();
    g.for_each_slot(&w, |v, m| {
        if v > lambda {
            total = total.add(m);
        }
    });
    total
}

/// `sup_λ λ |{g > λ}|^{1/p}`, attained as `λ` increases to one of the values
/// of `g`: `max_v v |{g >= v}|^{1/p}`.
pub fn weak_lp_norm<V: Scalar>(g: &StepFunction<V>, p: f64) -> f64 {
    let w = g.space().weights::<f64>();
    let g = g.to_f64();
    let mut levels: Vec<(f64, f64)> = Vec::new();
    g.for_each_slot(&w, |v, m| {
        if *v > 0.0 && *m > 0.0 {
            levels.push((*v, *m));
        }
    });
    levels.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut best = 0.0f64;
    let mut tail = 0.0f64;
    let mut i = 0;
    while i < levels.len() {
        let v = levels[i].0;
        while i < levels.len() && levels[i].0 == v {
            tail += levels[i].1;
            i += 1;
        }
        best = best.max(v * tail.powf(1.0 / p));
    }
    best
}

/// `∫ (f/λ) log(e + f/λ)`.
pub fn llogl_functional<V: Scalar>(f: &StepFunction<V>, lambda: f64) -> f64 {
    assert!(lambda > 0.0, "lambda must be positive");
    let w = f.space().weights::<f64>();
    let f = f.to_f64();
    let mut acc = 0.0;
    f.for_each_slot(&w, |v, m| {
        if *v > 0.0 {
            let x = v / lambda;
            acc += x * (std::f64::consts::E + x).ln() * m;
        }
    });
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Witness {
    /// `1_{Q0}`
    Center,
    /// `1_{Q1}`
    Single,
    /// `h^{q-1} / ‖h‖_q^{q/p}`
    Height,
}

impl Witness {
    pub const ALL: [Witness; 3] = [Witness::Center, Witness::Single, Witness::Height];

    pub fn name(self) -> &'static str {
        match self {
            Witness::Center => "center",
            Witness::Single => "single",
            Witness::Height => "height",
        }
    }
}

impl std::str::FromStr for Witness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(Witness::Center),
            "single" => Ok(Witness::Single),
            "height" => Ok(Witness::Height),
            other => Err(Error::Parse(format!("unknown witness {other:?}"))),
        }
    }
}

pub fn indicator_q0<V: Scalar>(space: &AtomSpace) -> StepFunction<V> {
    let classes = vec![V::from_u64(1); space.d() as usize + 1];
    StepFunction::symmetric(space, classes, V::zero(), V::zero()).expect("nonnegative")
}

/// `1_{Q1}`; needs the enumerated layout.
pub fn indicator_q1<V: Scalar>(space: &AtomSpace) -> Result<StepFunction<V>> {
    StepFunction::from_fn(space, |a| match a {
        AtomId::Inner(mask) if mask & 1 == 1 => V::from_u64(1),
        AtomId::OuterSlab(1) => V::from_u64(1),
        _ => V::zero(),
    })
    .map_err(|e| match e {
        Error::NotSymmetric(_) => Error::NotSymmetric("1_{Q1}"),
        other => other,
    })
}

/// `h^exponent` with exact integer powers.
pub fn height_power<V: Scalar>(space: &AtomSpace, exponent: u32) -> StepFunction<V> {
    let classes = (0..=space.d())
        .map(|j| V::from_u64((j as u64).pow(exponent)))
        .collect();
    StepFunction::symmetric(space, classes, V::from_u64(1), V::zero()).expect("nonnegative")
}

pub fn conjugate_exponent(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::BadExponent(p));
    }
    Ok(p / (p - 1.0))
}

pub fn extremal_function(space: &AtomSpace, kind: Witness, p: f64) -> Result<StepFunction<f64>> {
    match kind {
        Witness::Center => Ok(indicator_q0(space)),
        Witness::Single => indicator_q1(space),
        Witness::Height => {
            let q = conjugate_exponent(p)?;
            let h = space.height_function::<f64>();
            let hq = h.map(|v| v.powf(q));
            let norm_q_pow_q = crate::measure::integrate(&hq, None)?;
            let scale = norm_q_pow_q.powf(1.0 / p);
            Ok(h.map(|v| if *v > 0.0 { v.powf(q - 1.0) / scale } else { 0.0 }))
        }
    }
}

/// `sup_λ λ |{M f > λ}|^{1/p} / ‖f‖_p` for one test function.
pub fn weak_type_ratio(space: &AtomSpace, f: &StepFunction<f64>, p: f64) -> Result<f64> {
    let norm = lp_norm(f, p);
    if norm == 0.0 {
        return Err(Error::DivisionByZero("‖f‖_p = 0"));
    }
    let mf = apply_maximal(space, f)?.mf;
    Ok(weak_lp_norm(&mf, p) / norm)
}

/// Closed form of the `1_{Q1}` ratio: `M f = 1` on `Q1` and `eps^2` on the
/// rest of the shadow, so the ratio is `max(1, eps^2 (|sh|/|Q0|)^{1/p})`.
pub fn single_witness_ratio(eps: &Rational, d: u32, p: f64) -> f64 {
    if d == 1 {
        return 1.0;
    }
    let e = eps.to_f64();
    (e * e * shadow_ratio(eps, d as u64).powf(1.0 / p)).max(1.0)
}

pub fn witness_ratio(space: &AtomSpace, kind: Witness, p: f64) -> Result<f64> {
    conjugate_exponent(p)?;
    if kind == Witness::Single && space.is_symmetric() {
        return Ok(single_witness_ratio(space.eps(), space.d(), p));
    }
    let f = extremal_function(space, kind, p)?;
    weak_type_ratio(space, &f, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub weak_norm: f64,
    pub witness: Witness,
    pub ratios: Vec<(Witness, f64)>,
}

/// Best of the three witnesses; a certified lower bound for
/// `‖M‖_{L^p -> L^{p,∞}}`.
pub fn lower_bound_weak_norm(space: &AtomSpace, p: f64) -> Result<WitnessReport> {
    let mut ratios = Vec::with_capacity(3);
    for kind in Witness::ALL {
        ratios.push((kind, witness_ratio(space, kind, p)?));
    }
    let (witness, weak_norm) = ratios
        .iter()
        .copied()
        .fold((Witness::Center, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    Ok(WitnessReport {
        weak_norm,
        witness,
        ratios,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub best_ratio: f64,
    pub witness_bound: f64,
    pub evaluations: u64,
    /// Class values `1..=d` followed by the slab value of the best symmetric
    /// function found.
    pub best_point: Vec<f64>,
}

/// Coordinate ascent over permutation-symmetric functions supported on the
/// shadow (one value per inner class `|E| = 1..d` plus a slab value). The
/// search starts from the better of the symmetric witnesses and the result
/// never drops below the witness bound.
pub fn empirical_norm_search(
    space: &AtomSpace,
    p: f64,
    budget: u64,
    seed: u64,
    witness_starts: bool,
) -> Result<SearchReport> {
    conjugate_exponent(p)?;
    if budget == 0 && !witness_starts {
        return Err(Error::BudgetZero);
    }
    let witness_bound = if witness_starts {
        lower_bound_weak_norm(space, p)?.weak_norm
    } else {
        0.0
    };
    let sym = space.clone().with_symmetric(true)?;
    let d = space.d() as usize;
    let eval = |x: &[f64]| -> Result<f64> {
        let mut classes = Vec::with_capacity(d + 1);
        classes.push(0.0);
        classes.extend_from_slice(&x[..d]);
        let f = StepFunction::symmetric(&sym, classes, x[d], 0.0)?;
        if lp_norm(&f, p) == 0.0 {
            return Ok(0.0);
        }
        weak_type_ratio(&sym, &f, p)
    };

    let mut x: Vec<f64> = if witness_starts {
        let height = extremal_function(&sym, Witness::Height, p)?;
        let mut v: Vec<f64> = (1..=d as u32)
            .map(|j| *height.class_value(j).expect("symmetric layout"))
            .collect();
        v.push(*height.value(&AtomId::OuterSlab(1)));
        v
    } else {
        vec![1.0; d + 1]
    };
    let mut best = eval(&x)?;
    let mut evaluations = 1u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut step = 0.5f64;
    let mut stale = 0usize;
    let n = x.len();
    while evaluations < budget {
        let i = rng.random_range(0..n);
        let factor = if rng.random_bool(0.5) { 1.0 + step } else { 1.0 / (1.0 + step) };
        let old = x[i];
        x[i] = if old == 0.0 { step } else { old * factor };
        let val = eval(&x)?;
        evaluations += 1;
        if val > best {
            best = val;
            stale = 0;
        } else {
            x[i] = old;
            stale += 1;
            if stale >= 2 * n {
                step *= 0.5;
                stale = 0;
                if step < 1e-9 {
                    break;
                }
            }
        }
    }
    Ok(SearchReport {
        best_ratio: best.max(witness_bound),
        witness_bound,
        evaluations,
        best_point: x,
    })
}
