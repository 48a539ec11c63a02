//! The finite measure space generated by a central rectangle `Q0` and the
//! `d` translates of an `(eps, d)`-configuration around it, together with
//! functions that are constant on its atoms.
//!
//! Atoms come in three kinds:
//!
//! * `Inner(E)`: the points of `Q0` lying in exactly the translates indexed by
//!   `E`, measure `eps^|E| (1-eps)^(d-|E|) |Q0|`;
//! * `OuterSlab(k)`: `Q_k \ Q0`, measure `(1-eps) |Q0|`;
//! * `Remainder`: everything outside `Q0 ∪ Q_1 ∪ ... ∪ Q_d`.
//!
//! Bit `k - 1` of an inner mask records membership in `Q_k`.
//!
//! In symmetric mode inner atoms are grouped by `|E|` and the slabs share a
//! single value, which is exact for permutation-symmetric functions and is the
//! only layout available once `d > 24`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binomial::{self, one_minus};
use crate::error::{Error, Result};
use crate::rational::Rational;

/// Above this dimension only the symmetric layout is available.
pub const ENUMERATION_LIMIT: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomId {
    Inner(u64),
    /// 1-based index of the translate.
    OuterSlab(u32),
    Remainder,
}

impl fmt::Display for AtomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomId::Inner(mask) => {
                write!(f, "Inner{{")?;
                let mut first = true;
                let mut m = *mask;
                while m != 0 {
                    let k = m.trailing_zeros() + 1;
                    if !first {
                        write!(f, ",")?;
                    }
                    write!(f, "{k}")?;
                    first = false;
                    m &= m - 1;
                }
                write!(f, "}}")
            }
            AtomId::OuterSlab(k) => write!(f, "OuterSlab({k})"),
            AtomId::Remainder => write!(f, "Remainder"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "AtomSpaceRepr", into = "AtomSpaceRepr")]
pub struct AtomSpace {
    eps: Rational,
    d: u32,
    q0_measure: Rational,
    symmetric: bool,
}

#[derive(Serialize, Deserialize)]
struct AtomSpaceRepr {
    eps: Rational,
    d: u32,
    q0_measure: Rational,
    symmetric: bool,
}

impl TryFrom<AtomSpaceRepr> for AtomSpace {
    type Error = Error;
    fn try_from(r: AtomSpaceRepr) -> Result<Self> {
        build_atom_space(r.eps, r.d, r.q0_measure)?.with_symmetric(r.symmetric)
    }
}

impl From<AtomSpace> for AtomSpaceRepr {
    fn from(s: AtomSpace) -> Self {
        AtomSpaceRepr {
            eps: s.eps,
            d: s.d,
            q0_measure: s.q0_measure,
            symmetric: s.symmetric,
        }
    }
}

pub fn check_epsilon(eps: &Rational) -> Result<()> {
    if eps.is_zero() || *eps > Rational::new(1, 2) {
        return Err(Error::BadEpsilon(eps.to_string()));
    }
    Ok(())
}

/// `|Q0| (1 + d(1 - eps))`, the measure taken up by `Q0` and the slabs.
fn required_measure(eps: &Rational, d: u32, q0: &Rational) -> Rational {
    let slabs = one_minus(eps).scale(d as u64);
    q0 * &(Rational::one() + slabs)
}

pub fn build_atom_space(eps: Rational, d: u32, q0_measure: Rational) -> Result<AtomSpace> {
    check_epsilon(&eps)?;
    if d == 0 {
        return Err(Error::BadDimension);
    }
    if q0_measure.is_zero() {
        return Err(Error::InfeasibleMeasure {
            required: "|Q0| = 0".into(),
        });
    }
    let required = required_measure(&eps, d, &q0_measure);
    if required > 1u64 {
        return Err(Error::InfeasibleMeasure {
            required: required.to_string(),
        });
    }
    Ok(AtomSpace {
        eps,
        d,
        q0_measure,
        symmetric: d > ENUMERATION_LIMIT,
    })
}

impl AtomSpace {
    pub fn eps(&self) -> &Rational {
        &self.eps
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn q0_measure(&self) -> &Rational {
        &self.q0_measure
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Switch layouts. Turning symmetric mode off is refused above the
    /// enumeration limit.
    pub fn with_symmetric(mut self, symmetric: bool) -> Result<Self> {
        if !symmetric && self.d > ENUMERATION_LIMIT {
            return Err(Error::NotSymmetric("enumerated layout above d = 24"));
        }
        self.symmetric = symmetric;
        Ok(self)
    }

    pub fn inner_atom_count(&self) -> u64 {
        assert!(self.d <= 63, "inner atoms cannot be enumerated for d = {}", self.d);
        1u64 << self.d
    }

    /// Measure of a single inner atom with `|E| = size`.
    pub fn inner_measure(&self, size: u32) -> Rational {
        let one_m = one_minus(&self.eps);
        &(&self.eps.pow(size) * &one_m.pow(self.d - size)) * &self.q0_measure
    }

    /// Total measure of the inner atoms with `|E| = size`.
    pub fn inner_class_measure(&self, size: u32) -> Rational {
        &binomial::choose_exact(self.d as u64, size as u64) * &self.inner_measure(size)
    }

    pub fn slab_measure(&self) -> Rational {
        &one_minus(&self.eps) * &self.q0_measure
    }

    pub fn remainder_measure(&self) -> Rational {
        Rational::one()
            .checked_sub(&required_measure(&self.eps, self.d, &self.q0_measure))
            .expect("feasibility checked at construction")
    }

    pub fn measure(&self, atom: &AtomId) -> Rational {
        match atom {
            AtomId::Inner(mask) => self.inner_measure(mask.count_ones()),
            AtomId::OuterSlab(_) => self.slab_measure(),
            AtomId::Remainder => self.remainder_measure(),
        }
    }

    /// Every atom in a fixed order: inner atoms by mask, then slabs, then the
    /// remainder. Needs `d <= 63`.
    pub fn atoms(&self) -> impl Iterator<Item = AtomId> + '_ {
        (0..self.inner_atom_count())
            .map(AtomId::Inner)
            .chain((1..=self.d).map(AtomId::OuterSlab))
            .chain(std::iter::once(AtomId::Remainder))
    }

    /// `|Q_1 ∪ ... ∪ Q_d| = |Q0| (d(1-eps) + 1 - (1-eps)^d)`.
    pub fn shadow_measure(&self) -> Rational {
        let one_m = one_minus(&self.eps);
        let inside = Rational::one()
            .checked_sub(&one_m.pow(self.d))
            .expect("(1-eps)^d <= 1");
        &self.q0_measure * &(one_m.scale(self.d as u64) + inside)
    }

    pub fn shadow_measure_f64(&self) -> f64 {
        shadow_ratio(&self.eps, self.d as u64) * self.q0_measure.to_f64()
    }

    pub fn height_function<V: Scalar>(&self) -> StepFunction<V> {
        let classes = (0..=self.d).map(|j| V::from_u64(j as u64)).collect();
        StepFunction::symmetric(self, classes, V::from_u64(1), V::zero())
            .expect("height values are nonnegative")
    }

    pub fn weights<V: Scalar>(&self) -> AtomWeights<V> {
        V::weights(self)
    }
}

/// `|sh| / |Q0|` in binary64, for any `d`.
pub fn shadow_ratio(eps: &Rational, d: u64) -> f64 {
    let e = eps.to_f64();
    let ln1m = one_minus(eps).ln();
    let inside = -(d as f64 * ln1m).exp_m1();
    d as f64 * (1.0 - e) + inside
}

/// Atom weights for one numeric mode. In the enumerated layout `inner[j]` is
/// the measure of one inner atom with `|E| = j`; in the symmetric layout it is
/// the total measure of that class.
#[derive(Clone, Debug)]
pub struct AtomWeights<V> {
    pub inner: Vec<V>,
    pub slab: V,
    pub remainder: V,
    pub q0: V,
}

/// Numeric field used for step-function values: exact rationals or binary64.
pub trait Scalar: Clone + PartialOrd + fmt::Debug + Send + Sync {
    fn zero() -> Self;
    fn from_u64(n: u64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;
    fn to_f64(&self) -> f64;
    fn is_negative(&self) -> bool;
    fn weights(space: &AtomSpace) -> AtomWeights<Self>;
}

impl Scalar for Rational {
    fn zero() -> Self {
        Rational::zero()
    }
    fn from_u64(n: u64) -> Self {
        Rational::from_integer(n)
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn to_f64(&self) -> f64 {
        Rational::to_f64(self)
    }
    fn is_negative(&self) -> bool {
        false
    }
    fn weights(space: &AtomSpace) -> AtomWeights<Self> {
        let inner = if space.symmetric {
            (0..=space.d).map(|j| space.inner_class_measure(j)).collect()
        } else {
            (0..=space.d).map(|j| space.inner_measure(j)).collect()
        };
        AtomWeights {
            inner,
            slab: space.slab_measure(),
            remainder: space.remainder_measure(),
            q0: space.q0_measure.clone(),
        }
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn from_rational(r: &Rational) -> Self {
        r.to_f64()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_negative(&self) -> bool {
        *self < 0.0 || self.is_nan()
    }
    fn weights(space: &AtomSpace) -> AtomWeights<Self> {
        let d = space.d as u64;
        let ln_eps = space.eps.ln();
        let ln_1m = one_minus(&space.eps).ln();
        let ln_q0 = space.q0_measure.ln();
        let inner = if space.symmetric {
            let q0 = space.q0_measure.to_f64();
            binomial::pmf_table(d, &space.eps)
                .into_iter()
                .map(|p| p * q0)
                .collect()
        } else {
            (0..=d)
                .map(|j| (j as f64 * ln_eps + (d - j) as f64 * ln_1m + ln_q0).exp())
                .collect()
        };
        AtomWeights {
            inner,
            slab: space.slab_measure().to_f64(),
            remainder: space.remainder_measure().to_f64(),
            q0: space.q0_measure.to_f64(),
        }
    }
}

/// A nonnegative function constant on the atoms of an [`AtomSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction<V> {
    space: AtomSpace,
    inner: Vec<V>,
    slabs: Vec<V>,
    remainder: V,
}

impl<V: Scalar> StepFunction<V> {
    pub fn zero(space: &AtomSpace) -> Self {
        let inner_len = if space.symmetric {
            space.d as usize + 1
        } else {
            space.inner_atom_count() as usize
        };
        let slab_len = if space.symmetric { 1 } else { space.d as usize };
        StepFunction {
            space: space.clone(),
            inner: vec![V::zero(); inner_len],
            slabs: vec![V::zero(); slab_len],
            remainder: V::zero(),
        }
    }

    /// Permutation-symmetric function: `classes[j]` on inner atoms with
    /// `|E| = j`, a common slab value, and a remainder value. Valid in both
    /// layouts.
    pub fn symmetric(space: &AtomSpace, classes: Vec<V>, slab: V, remainder: V) -> Result<Self> {
        assert_eq!(classes.len(), space.d as usize + 1, "one value per class");
        if classes.iter().any(V::is_negative) || slab.is_negative() || remainder.is_negative() {
            return Err(Error::NegativeValue);
        }
        if space.symmetric {
            return Ok(StepFunction {
                space: space.clone(),
                inner: classes,
                slabs: vec![slab],
                remainder,
            });
        }
        let inner = (0..space.inner_atom_count())
            .map(|mask| classes[mask.count_ones() as usize].clone())
            .collect();
        Ok(StepFunction {
            space: space.clone(),
            inner,
            slabs: vec![slab; space.d as usize],
            remainder,
        })
    }

    /// Arbitrary atom-constant function. Only the enumerated layout can hold
    /// it.
    pub fn from_fn(space: &AtomSpace, mut f: impl FnMut(AtomId) -> V) -> Result<Self> {
        if space.symmetric {
            return Err(Error::NotSymmetric("an arbitrary atom function"));
        }
        let inner: Vec<V> = (0..space.inner_atom_count())
            .map(|m| f(AtomId::Inner(m)))
            .collect();
        let slabs: Vec<V> = (1..=space.d).map(|k| f(AtomId::OuterSlab(k))).collect();
        let remainder = f(AtomId::Remainder);
        if inner.iter().chain(&slabs).any(V::is_negative) || remainder.is_negative() {
            return Err(Error::NegativeValue);
        }
        Ok(StepFunction {
            space: space.clone(),
            inner,
            slabs,
            remainder,
        })
    }

    pub fn space(&self) -> &AtomSpace {
        &self.space
    }

    pub fn value(&self, atom: &AtomId) -> &V {
        match *atom {
            AtomId::Inner(mask) => {
                if self.space.symmetric {
                    &self.inner[mask.count_ones() as usize]
                } else {
                    &self.inner[mask as usize]
                }
            }
            AtomId::OuterSlab(k) => {
                assert!(k >= 1 && k <= self.space.d, "slab index {k} out of range");
                if self.space.symmetric {
                    &self.slabs[0]
                } else {
                    &self.slabs[k as usize - 1]
                }
            }
            AtomId::Remainder => &self.remainder,
        }
    }

    /// Value on inner atoms with `|E| = size`. Symmetric layout only.
    pub fn class_value(&self, size: u32) -> Option<&V> {
        if self.space.symmetric {
            self.inner.get(size as usize)
        } else {
            None
        }
    }

    pub(crate) fn inner_values(&self) -> &[V] {
        &self.inner
    }

    pub(crate) fn slab_values(&self) -> &[V] {
        &self.slabs
    }

    pub(crate) fn from_parts(space: &AtomSpace, inner: Vec<V>, slabs: Vec<V>, remainder: V) -> Self {
        StepFunction {
            space: space.clone(),
            inner,
            slabs,
            remainder,
        }
    }

    pub fn map<W: Scalar>(&self, mut f: impl FnMut(&V) -> W) -> StepFunction<W> {
        StepFunction {
            space: self.space.clone(),
            inner: self.inner.iter().map(&mut f).collect(),
            slabs: self.slabs.iter().map(&mut f).collect(),
            remainder: f(&self.remainder),
        }
    }

    pub fn to_f64(&self) -> StepFunction<f64> {
        self.map(|v| v.to_f64())
    }

    /// Calls `visit(value, measure)` once per atom (or per class in the
    /// symmetric layout).
    pub fn for_each_slot(&self, w: &AtomWeights<V>, mut visit: impl FnMut(&V, &V)) {
        if self.space.symmetric {
            for (v, m) in self.inner.iter().zip(&w.inner) {
                visit(v, m);
            }
            let all_slabs = w.slab.mul(&V::from_u64(self.space.d as u64));
            visit(&self.slabs[0], &all_slabs);
        } else {
            for (mask, v) in self.inner.iter().enumerate() {
                visit(v, &w.inner[(mask as u64).count_ones() as usize]);
            }
            for v in &self.slabs {
                visit(v, &w.slab);
            }
        }
        visit(&self.remainder, &w.remainder);
    }

    /// Largest value taken on a set of positive measure (or 0).
    pub fn max_value(&self) -> V {
        let w = self.space.weights::<V>();
        let zero = V::zero();
        let mut best = V::zero();
        self.for_each_slot(&w, |v, m| {
            if *m > zero && *v > best {
                best = v.clone();
            }
        });
        best
    }
}

/// `∫ f g dx`, or `∫ f dx` when `g` is `None`.
pub fn integrate<V: Scalar>(f: &StepFunction<V>, g: Option<&StepFunction<V>>) -> Result<V> {
    let w = f.space.weights::<V>();
    match g {
        None => {
            let mut acc = V::zero();
            f.for_each_slot(&w, |v, m| acc = acc.add(&v.mul(m)));
            Ok(acc)
        }
        Some(g) => {
            if g.space != f.space {
                return Err(Error::SpaceMismatch);
            }
            let product = StepFunction {
                space: f.space.clone(),
                inner: f.inner.iter().zip(&g.inner).map(|(a, b)| a.mul(b)).collect(),
                slabs: f.slabs.iter().zip(&g.slabs).map(|(a, b)| a.mul(b)).collect(),
                remainder: f.remainder.mul(&g.remainder),
            };
            integrate(&product, None)
        }
    }
}

/// `‖f‖_p` in binary64.
pub fn lp_norm<V: Scalar>(f: &StepFunction<V>, p: f64) -> f64 {
    let w = f.space.weights::<f64>();
    let f = f.to_f64();
    let mut acc = 0.0;
    f.for_each_slot(&w, |v, m| {
        if *v > 0.0 {
            acc += v.powf(p) * m;
        }
    });
    acc.powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: u64, b: u64) -> Rational {
        Rational::new(a, b)
    }

    #[test]
    fn half_one_quarter_atoms() {
        let s = build_atom_space(r(1, 2), 1, r(1, 4)).unwrap();
        assert_eq!(s.measure(&AtomId::Inner(0)), r(1, 8));
        assert_eq!(s.measure(&AtomId::Inner(1)), r(1, 8));
        assert_eq!(s.measure(&AtomId::OuterSlab(1)), r(1, 8));
        assert_eq!(s.measure(&AtomId::Remainder), r(5, 8));
    }

    #[test]
    fn half_two_sixteenth_atoms() {
        let s = build_atom_space(r(1, 2), 2, r(1, 16)).unwrap();
        // enumerate the 4 subsets directly
        for mask in 0..4 {
            assert_eq!(s.measure(&AtomId::Inner(mask)), r(1, 64));
        }
        assert_eq!(s.measure(&AtomId::OuterSlab(1)), r(1, 32));
        assert_eq!(s.measure(&AtomId::OuterSlab(2)), r(1, 32));
        assert_eq!(s.measure(&AtomId::Remainder), r(7, 8));
        let total: Rational = s.atoms().map(|a| s.measure(&a)).sum();
        assert_eq!(total, Rational::one());
    }

    #[test]
    fn infeasible_and_bad_eps() {
        // 1/2 * (1 + 2 * 1/2) = 1 is exactly feasible with an empty remainder
        let tight = build_atom_space(r(1, 2), 2, r(1, 2)).unwrap();
        assert!(tight.remainder_measure().is_zero());
        assert!(matches!(
            build_atom_space(r(1, 4), 2, r(1, 2)),
            Err(Error::InfeasibleMeasure { .. })
        ));
        assert!(matches!(build_atom_space(r(3, 4), 1, r(1, 8)), Err(Error::BadEpsilon(_))));
        assert!(matches!(build_atom_space(r(0, 1), 1, r(1, 8)), Err(Error::BadEpsilon(_))));
        assert!(matches!(build_atom_space(r(1, 2), 0, r(1, 8)), Err(Error::BadDimension)));
    }

    #[test]
    fn symmetric_forced_above_limit() {
        let s = build_atom_space(r(1, 4), 25, Rational::dyadic(7)).unwrap();
        assert!(s.is_symmetric());
        assert!(s.clone().with_symmetric(false).is_err());
        let s = build_atom_space(r(1, 4), 24, Rational::dyadic(7)).unwrap();
        assert!(!s.is_symmetric());
    }

    #[test]
    fn shadow_examples() {
        // |Q0| = 1 is not a feasible space, so compare ratios.
        let s = build_atom_space(r(1, 2), 2, r(1, 4)).unwrap();
        assert_eq!(&s.shadow_measure() / s.q0_measure(), r(7, 4));
        let s = build_atom_space(r(1, 2), 1, r(1, 2)).unwrap();
        assert_eq!(s.shadow_measure(), r(1, 2));
        let s = build_atom_space(r(1, 4), 8, Rational::dyadic(8)).unwrap();
        let ratio = &s.shadow_measure() / s.q0_measure();
        let expected = Rational::from_integer(7).checked_sub(&r(3, 4).pow(8)).unwrap();
        assert_eq!(ratio, expected);
        assert!((ratio.to_f64() - 6.899887).abs() < 1e-6);
        assert!(ratio >= 4u64);
    }

    #[test]
    fn shadow_by_inclusion_exclusion() {
        // |∪ Q_k| by summing measures of atoms lying in at least one Q_k
        for d in 1..=6u32 {
            let s = build_atom_space(r(1, 3), d, Rational::dyadic(d as u64 + 1)).unwrap();
            let covered: Rational = s
                .atoms()
                .filter(|a| !matches!(a, AtomId::Inner(0) | AtomId::Remainder))
                .map(|a| s.measure(&a))
                .sum();
            assert_eq!(covered, s.shadow_measure());
            assert!((s.shadow_measure_f64() - covered.to_f64()).abs() < 1e-15);
        }
    }

    #[test]
    fn height_values() {
        let s = build_atom_space(r(1, 2), 2, r(1, 4)).unwrap();
        let h = s.height_function::<Rational>();
        assert_eq!(*h.value(&AtomId::Inner(0b11)), 2u64);
        assert_eq!(*h.value(&AtomId::OuterSlab(2)), 1u64);
        assert_eq!(*h.value(&AtomId::Remainder), 0u64);
        let s = build_atom_space(r(1, 2), 3, Rational::dyadic(5)).unwrap();
        let h = s.height_function::<Rational>();
        assert_eq!(*h.value(&AtomId::Inner(0b010)), 1u64);
        for k in 1..=3 {
            assert!(*h.value(&AtomId::OuterSlab(k)) <= 1u64);
        }
    }

    #[test]
    fn integrals_half_two() {
        let s = build_atom_space(r(1, 2), 2, r(1, 4)).unwrap();
        let one = StepFunction::<Rational>::from_fn(&s, |_| Rational::one()).unwrap();
        assert_eq!(integrate(&one, None).unwrap(), Rational::one());
        let h = s.height_function::<Rational>();
        let q0 = s.q0_measure().clone();
        assert_eq!(&integrate(&h, None).unwrap() / &q0, Rational::from_integer(2));
        assert_eq!(&integrate(&h, Some(&h)).unwrap() / &q0, r(5, 2));
    }

    #[test]
    fn space_mismatch() {
        let a = build_atom_space(r(1, 2), 2, r(1, 4)).unwrap();
        let b = build_atom_space(r(1, 4), 2, r(1, 4)).unwrap();
        let f = a.height_function::<f64>();
        let g = b.height_function::<f64>();
        assert_eq!(integrate(&f, Some(&g)), Err(Error::SpaceMismatch));
    }

    #[test]
    fn negative_values_rejected() {
        let s = build_atom_space(r(1, 2), 1, r(1, 4)).unwrap();
        assert_eq!(
            StepFunction::<f64>::from_fn(&s, |_| -1.0).unwrap_err(),
            Error::NegativeValue
        );
    }

    #[test]
    fn json_shape() {
        let s = build_atom_space(r(1, 2), 2, r(1, 4)).unwrap();
        let js = serde_json::to_value(&s).unwrap();
        assert_eq!(
            js,
            serde_json::json!({"eps": "1/2", "d": 2, "q0_measure": "1/4", "symmetric": false})
        );
        let bad = serde_json::json!({"eps": "1/2", "d": 2, "q0_measure": "3/4", "symmetric": false});
        assert!(serde_json::from_value::<AtomSpace>(bad).is_err());
    }
}
