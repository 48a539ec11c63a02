//! Closed-form quantities attached to a configuration: the size parameters
//! `A_p` and `A`, the three-regime weak-type prediction, Latała's norm of
//! the independent indicators, height-function moments, the Hölder upper
//! bound, and the machinery behind the `L log L` endpoint estimate.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binomial;
use crate::error::{Error, Result};
use crate::maximal::{apply_maximal, conjugate_exponent, llogl_functional, superlevel_measure};
use crate::measure::{shadow_ratio, AtomSpace, StepFunction};
use crate::rational::Rational;

/// Relative tolerance used to decide that `A` sits on a regime boundary.
pub const BOUNDARY_RTOL: f64 = 1e-12;

/// Upper-bound subconfiguration scan is exhaustive up to this `d`.
pub const EXHAUSTIVE_SCAN: u64 = 10_000;

/// Number of log-spaced subconfiguration sizes above [`EXHAUSTIVE_SCAN`].
pub const LOG_SCAN_POINTS: usize = 48;

/// `A_p = eps d^{1/p}`.
pub fn a_p(eps: f64, d: u64, p: f64) -> f64 {
    eps * (d as f64).powf(1.0 / p)
}

/// `A = eps d / log(1/eps)`.
pub fn a_endpoint(eps: f64, d: u64) -> f64 {
    eps * d as f64 / (1.0 / eps).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Small,
    Middle,
    Large,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Small => "small",
            Regime::Middle => "middle",
            Regime::Large => "large",
        }
    }

    /// Predicted bound of this regime at `(A, q)`.
    pub fn bound(self, a: f64, q: f64) -> f64 {
        match self {
            Regime::Small => 1.0,
            Regime::Middle => q / (q / a).ln(),
            Regime::Large => E * a,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub p: f64,
    pub q: f64,
    #[serde(rename = "A")]
    pub a: f64,
    /// One regime, or the two adjacent ones when `A` is on a boundary.
    pub regimes: Vec<Regime>,
    #[serde(rename = "B")]
    pub b: f64,
}

impl RegimeReport {
    pub fn regime_label(&self) -> String {
        self.regimes.iter().map(|r| r.name()).collect::<Vec<_>>().join("|")
    }
}

/// Regime of `A` for conjugate exponent `q`. Boundaries are closed on both
/// sides; on a boundary both regimes are reported and `B` is the larger of
/// their bounds.
pub fn regime_of(a: f64, q: f64) -> (Vec<Regime>, f64) {
    let lo = q * (-q).exp();
    let hi = q / E;
    let near = |x: f64, t: f64| (x - t).abs() <= BOUNDARY_RTOL * t;
    let regimes = if near(a, lo) {
        vec![Regime::Small, Regime::Middle]
    } else if near(a, hi) {
        vec![Regime::Middle, Regime::Large]
    } else if a < lo {
        vec![Regime::Small]
    } else if a < hi {
        vec![Regime::Middle]
    } else {
        vec![Regime::Large]
    };
    let b = regimes
        .iter()
        .map(|r| r.bound(a, q))
        .fold(f64::NEG_INFINITY, f64::max);
    (regimes, b)
}

pub fn classify_regime(eps: f64, d: u64, p: f64) -> Result<RegimeReport> {
    let q = conjugate_exponent(p)?;
    let a = a_p(eps, d, p);
    let (regimes, b) = regime_of(a, q);
    Ok(RegimeReport { p, q, a, regimes, b })
}

/// Latała's norm of the `d` independent `Bernoulli(eps)` indicators in
/// `L^q`: the `eta` solving `[1 + eps((1 + 1/eta)^q - 1)]^d = e^q`,
/// `eta = 1 / ((1 + (exp(q/d) - 1)/eps)^{1/q} - 1)`.
pub fn latala_eta(eps: f64, d: u64, q: f64) -> f64 {
    let x = (q / d as f64).exp_m1() / eps;
    1.0 / (x.ln_1p() / q).exp_m1()
}

/// `|Π E(1 + f_i/eta)^q / e^q - 1|` for the independent indicators.
pub fn eta_residual(eps: f64, d: u64, q: f64, eta: f64) -> f64 {
    let inner = eps * (q * (1.0 / eta).ln_1p()).exp_m1();
    (d as f64 * inner.ln_1p() - q).exp_m1().abs()
}

/// `∫ h^q / |Q0| = (1 - eps) d + E[Bin(d, eps)^q]`.
pub fn height_q_moment_ratio(eps: &Rational, d: u64, q: f64) -> f64 {
    (1.0 - eps.to_f64()) * d as f64 + binomial::moment_f64(d, eps, q)
}

/// `∫ h^q` on a concrete space.
pub fn height_q_moment(space: &AtomSpace, q: f64) -> f64 {
    height_q_moment_ratio(space.eps(), space.d() as u64, q) * space.q0_measure().to_f64()
}

/// Exact `∫ h^q` for integer `q`.
pub fn height_q_moment_exact(space: &AtomSpace, q: u32) -> Rational {
    let d = space.d() as u64;
    let one_m = Rational::one().checked_sub(space.eps()).expect("eps <= 1/2");
    let ratio = one_m.scale(d) + binomial::moment_exact(d, space.eps(), q);
    &ratio * space.q0_measure()
}

/// `C(d') = ∫ h^q / |sh|` for an `(eps, d')`-configuration.
pub fn holder_constant(eps: &Rational, d: u64, q: f64) -> f64 {
    height_q_moment_ratio(eps, d, q) / shadow_ratio(eps, d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    /// `max_{d'} C(d')^{1/q}` over the scanned subconfiguration sizes.
    pub value: f64,
    pub argmax_d: u64,
    /// `C(d)^{1/q}` for the full configuration.
    pub full_c_pow_inv_q: f64,
    pub exhaustive: bool,
}

/// Subconfiguration sizes scanned for a configuration of size `d`.
pub fn scan_sizes(d: u64, p: f64, eps: f64) -> Vec<u64> {
    if d <= EXHAUSTIVE_SCAN {
        return (1..=d).collect();
    }
    let q = p / (p - 1.0);
    let a = a_p(eps, d, p);
    let mut v: Vec<u64> = (0..LOG_SCAN_POINTS)
        .map(|i| {
            let t = i as f64 / (LOG_SCAN_POINTS - 1) as f64;
            (d as f64).powf(t).round() as u64
        })
        .collect();
    v.push(d);
    v.push(q.ceil() as u64);
    v.push((2.0 * a).powf(p).ceil() as u64);
    v.iter_mut().for_each(|x| *x = (*x).clamp(1, d));
    v.sort_unstable();
    v.dedup();
    v
}

/// Hölder bound `‖M‖_{L^p -> L^{p,∞}} <= max_{d'} C(d')^{1/q}`, maximized
/// over subconfigurations since the sets with large average always form one.
pub fn upper_bound_weak_norm(eps: &Rational, d: u64, p: f64) -> Result<UpperBound> {
    let q = conjugate_exponent(p)?;
    let scanned: Vec<(u64, f64)> = if d <= EXHAUSTIVE_SCAN {
        holder_constants_upto(eps, d, q)
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i as u64 + 1, c))
            .collect()
    } else {
        scan_sizes(d, p, eps.to_f64())
            .into_iter()
            .map(|k| (k, holder_constant(eps, k, q)))
            .collect()
    };
    let mut best = (f64::NEG_INFINITY, 0u64);
    let mut full = 0.0;
    for (k, c) in scanned {
        let c = c.powf(1.0 / q);
        if c > best.0 {
            best = (c, k);
        }
        if k == d {
            full = c;
        }
    }
    Ok(UpperBound {
        value: best.0,
        argmax_d: best.1,
        full_c_pow_inv_q: full,
        exhaustive: d <= EXHAUSTIVE_SCAN,
    })
}

/// `C(1), ..., C(dmax)`, stepping the binomial law one trial at a time.
pub fn holder_constants_upto(eps: &Rational, dmax: u64, q: f64) -> Vec<f64> {
    let e = eps.to_f64();
    let one_m = binomial::one_minus(eps).to_f64();
    let powers: Vec<f64> = (0..=dmax).map(|j| (j as f64).powf(q)).collect();
    let mut pmf = vec![0.0f64; dmax as usize + 1];
    pmf[0] = 1.0;
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut out = Vec::with_capacity(dmax as usize);
    for k in 1..=dmax {
        hi += 1;
        for j in (lo..=hi).rev() {
            let prev = if j > lo { pmf[j - 1] } else { 0.0 };
            pmf[j] = one_m * pmf[j] + e * prev;
        }
        while pmf[lo] < 1e-300 && lo < hi {
            pmf[lo] = 0.0;
            lo += 1;
        }
        while pmf[hi] < 1e-300 && hi > lo {
            pmf[hi] = 0.0;
            hi -= 1;
        }
        let moment: f64 = (lo.max(1)..=hi).map(|j| pmf[j] * powers[j]).sum();
        out.push(((1.0 - e) * k as f64 + moment) / shadow_ratio(eps, k));
    }
    out
}

/// `d^{-1/q} eta`.
pub fn relevant_quantity(eps: f64, d: u64, p: f64) -> Result<f64> {
    let q = conjugate_exponent(p)?;
    Ok((d as f64).powf(-1.0 / q) * latala_eta(eps, d, q))
}

/// The relevant quantity rewritten through `eps = A d^{-1/p}`, for real `d`.
pub fn relevant_quantity_at(a: f64, q: f64, d: f64) -> f64 {
    let p = q / (q - 1.0);
    let eps = a * d.powf(-1.0 / p);
    let x = (q / d).exp_m1() / eps;
    d.powf(-1.0 / q) / (x.ln_1p() / q).exp_m1()
}

/// The simplified forms of the relevant quantity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RqBranch {
    /// `d in [1, q]`: `1 / ((1 + d exp(q/d)/A)^{1/q} - 1)`.
    Rq1 { d: f64 },
    /// `d >= q`: `d^{-1/q} / ((1 + (q/A) d^{-1/q})^{1/q} - 1)`.
    Rq2 { d: f64 },
    /// `1 / ((1 + q/A)^{1/q} - 1)`.
    Srq,
    /// `(2A)^{-p/q} / ((1 + (q/A)(2A)^{-p/q})^{1/q} - 1)`.
    Srq2,
}

impl FromStr for RqBranch {
    type Err = Error;

    /// Parses `RQ1:<d>`, `RQ2:<d>`, `SRQ` or `SRQ2`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let d = || -> Result<f64> {
            arg.and_then(|a| a.parse::<f64>().ok())
                .filter(|d| *d >= 1.0)
                .ok_or_else(|| Error::BranchUnknown(s.to_string()))
        };
        match name.to_ascii_uppercase().as_str() {
            "RQ1" => Ok(RqBranch::Rq1 { d: d()? }),
            "RQ2" => Ok(RqBranch::Rq2 { d: d()? }),
            "SRQ" if arg.is_none() => Ok(RqBranch::Srq),
            "SRQ2" if arg.is_none() => Ok(RqBranch::Srq2),
            _ => Err(Error::BranchUnknown(s.to_string())),
        }
    }
}

/// `(1 + x)^{1/q} - 1` without cancellation.
fn root_minus_one(x: f64, q: f64) -> f64 {
    (x.ln_1p() / q).exp_m1()
}

pub fn simplified_rq(a: f64, q: f64, branch: RqBranch) -> f64 {
    let p = q / (q - 1.0);
    match branch {
        RqBranch::Rq1 { d } => 1.0 / root_minus_one(d * (q / d).exp() / a, q),
        RqBranch::Rq2 { d } => {
            let t = d.powf(-1.0 / q);
            t / root_minus_one(q / a * t, q)
        }
        RqBranch::Srq => 1.0 / root_minus_one(q / a, q),
        RqBranch::Srq2 => {
            let t = (2.0 * a).powf(-p / q);
            t / root_minus_one(q / a * t, q)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    #[serde(rename = "A")]
    pub a: f64,
    pub c: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    /// `(1 + (Λ - 1) eps)^d = ∫_{Q0} exp(c h) / |Q0|`.
    pub expmoment: f64,
    /// `exp(d (Λ - 1) eps)`.
    pub exp_bound: f64,
    pub inv_eps: f64,
}

/// The exponential-integrability estimate with `c` chosen so that
/// `(1 + A)(Λ - 1) = 1`.
pub fn endpoint_machinery(eps: &Rational, d: u64) -> EndpointReport {
    let e = eps.to_f64();
    let a = a_endpoint(e, d);
    let lambda_minus_one = 1.0 / (1.0 + a);
    let c = lambda_minus_one.ln_1p();
    let lambda = c.exp();
    let per_factor = lambda_minus_one * e;
    EndpointReport {
        a,
        c,
        lambda,
        expmoment: (d as f64 * per_factor.ln_1p()).exp(),
        exp_bound: (d as f64 * per_factor).exp(),
        inv_eps: 1.0 / e,
    }
}

/// `Σ_atoms exp(c h) · measure / |Q0|` over inner atoms, with `exp(c)`
/// supplied as an exact rational `Λ`: the result is the exact polynomial
/// `Σ_E eps^|E| (1-eps)^{d-|E|} Λ^|E|`. Enumerates all `2^d` inner atoms.
pub fn expmoment_by_atoms(space: &AtomSpace, lambda: &Rational) -> Rational {
    let d = space.d();
    let mut count_by_size = vec![0u64; d as usize + 1];
    for mask in 0..space.inner_atom_count() {
        count_by_size[mask.count_ones() as usize] += 1;
    }
    let mut total = Rational::zero();
    for (j, n) in count_by_size.iter().enumerate() {
        let atom = space.inner_measure(j as u32);
        total = total + (&atom * &lambda.pow(j as u32)).scale(*n);
    }
    &total / space.q0_measure()
}

/// `ψ(t) = eps c^{-1} exp(c t)`.
pub fn psi(t: f64, eps: f64, c: f64) -> f64 {
    eps / c * (c * t).exp()
}

/// Positive part of the Legendre transform `sup_{t>0} (x t - ψ(t))`. The
/// supremum sits at `t* = log(x/eps)/c` when `x > eps`.
pub fn legendre_phi(x: f64, eps: f64, c: f64) -> f64 {
    if x <= eps {
        return 0.0;
    }
    let t = (x / eps).ln() / c;
    (x * t - psi(t, eps, c)).max(0.0)
}

/// `|{M f > λ}| / ((1 + A) ∫ (f/λ) log(e + f/λ))`.
pub fn endpoint_upper_check(space: &AtomSpace, f: &StepFunction<f64>, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Parse(format!("lambda must be positive, got {lambda}")));
    }
    let functional = llogl_functional(f, lambda);
    if functional == 0.0 {
        return Err(Error::DivisionByZero("f ≡ 0"));
    }
    let mf = apply_maximal(space, f)?.mf;
    let level = superlevel_measure(&mf, &lambda);
    let a = a_endpoint(space.eps().to_f64(), space.d() as u64);
    Ok(level / ((1.0 + a) * functional))
}

/// One configuration of a disjoint family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub eps: Rational,
    pub d: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyRule {
    /// `eps_j = 1/(j+1)`, `d_j = floor(j^{p0})`: bounded exactly for `p >= p0`.
    Closed,
    /// `eps_j = 1/(j+1)`, `d_j = floor(log(j+2) j^{p0})`: bounded exactly for `p > p0`.
    Open,
}

impl FromStr for FamilyRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(FamilyRule::Closed),
            "open" => Ok(FamilyRule::Open),
            other => Err(Error::Parse(format!("unknown family rule {other:?}"))),
        }
    }
}

pub fn corollary_family(rule: FamilyRule, p0: f64, jmax: u64) -> Vec<FamilyMember> {
    (1..=jmax)
        .map(|j| {
            let base = (j as f64).powf(p0);
            let d = match rule {
                FamilyRule::Closed => base.floor(),
                FamilyRule::Open => ((j as f64 + 2.0).ln() * base).floor(),
            };
            FamilyMember {
                eps: Rational::new(1, j + 1),
                d: (d as u64).max(1),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(J, sup_{j <= J} value_j)` at the checkpoints.
    pub checkpoints: Vec<(u64, f64)>,
    pub sup: f64,
    pub divergent: bool,
    /// Fewer than three checkpoints: no growth judgement made.
    pub inconclusive: bool,
}

/// Prefix-supremum trajectory at decades `1, 10, 100, ...` and at the end of
/// the sample. A sequence is flagged divergent when its last increment is
/// positive and at least half the previous one: bounded monotone sequences
/// along such a sample converge geometrically, so their increments shrink
/// by a large factor each decade.
pub fn trajectory(values: &[f64]) -> Trajectory {
    let n = values.len() as u64;
    let mut marks: Vec<u64> = std::iter::successors(Some(1u64), |x| x.checked_mul(10))
        .take_while(|x| *x <= n)
        .collect();
    if marks.last() != Some(&n) {
        marks.push(n);
    }
    let mut running = f64::NEG_INFINITY;
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next = 0;
    for (i, v) in values.iter().enumerate() {
        running = running.max(*v);
        if next < marks.len() && i as u64 + 1 == marks[next] {
            checkpoints.push((marks[next], running));
            next += 1;
        }
    }
    let inconclusive = checkpoints.len() < 3;
    let divergent = if inconclusive {
        false
    } else {
        let k = checkpoints.len();
        let last = checkpoints[k - 1].1 - checkpoints[k - 2].1;
        let prev = checkpoints[k - 2].1 - checkpoints[k - 3].1;
        last > 0.0 && last >= 0.5 * prev
    };
    Trajectory {
        checkpoints,
        sup: running,
        divergent,
        inconclusive,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyPReport {
    pub p: f64,
    pub a_p: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub members: u64,
    pub per_p: Vec<FamilyPReport>,
    /// `sup_j d_j`.
    pub sup_d: Trajectory,
    /// `sup_j eps_j d_j / log(1/eps_j)`.
    pub sup_a_endpoint: Trajectory,
}

pub fn family_analysis(members: &[FamilyMember], p_grid: &[f64]) -> Result<FamilyReport> {
    if members.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut per_p = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        conjugate_exponent(p)?;
        let vals: Vec<f64> = members.iter().map(|m| a_p(m.eps.to_f64(), m.d, p)).collect();
        per_p.push(FamilyPReport {
            p,
            a_p: trajectory(&vals),
        });
    }
    let ds: Vec<f64> = members.iter().map(|m| m.d as f64).collect();
    let aa: Vec<f64> = members
        .iter()
        .map(|m| a_endpoint(m.eps.to_f64(), m.d))
        .collect();
    Ok(FamilyReport {
        members: members.len() as u64,
        per_p,
        sup_d: trajectory(&ds),
        sup_a_endpoint: trajectory(&aa),
    })
}

/// Range of `p` on which a built-in family is weak-type bounded.
pub fn predicted_range(rule: FamilyRule, p0: f64) -> String {
    match rule {
        FamilyRule::Closed => format!("[{p0}, inf]"),
        FamilyRule::Open => format!("({p0}, inf]"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::build_atom_space;

    /// Independent bisection on the defining product equation.
    fn eta_by_bisection(eps: f64, d: u64, q: f64) -> f64 {
        let g = |eta: f64| d as f64 * (1.0 + eps * ((1.0 + 1.0 / eta).powf(q) - 1.0)).ln() - q;
        let (mut lo, mut hi) = (1e-12f64, 1e12f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    }

    #[test]
    fn a_p_examples() {
        assert_eq!(a_p(0.5, 1, 2.0), 0.5);
        assert!((a_p(0.5, 2, 2.0) - 0.707107).abs() < 1e-6);
        let j = 10u64;
        let d = (j as f64).powf(2.0).floor() as u64;
        assert!((a_p(1.0 / 11.0, d, 2.0) - 10.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(0.5, 2, 2.0).unwrap();
        assert_eq!(r.regimes, vec![Regime::Middle]);
        assert!((r.b - 1.9236).abs() < 1e-4);
        assert!((r.b - 2.0 / (2.0 / (0.5 * 2f64.sqrt())).ln()).abs() < 1e-12);

        let r = classify_regime(1e-9, 1, 2.0).unwrap();
        assert_eq!(r.regimes, vec![Regime::Small]);
        assert_eq!(r.b, 1.0);

        let r = classify_regime(0.5, 100, 2.0).unwrap();
        assert_eq!(r.regimes, vec![Regime::Large]);
        assert!((r.b - E * 5.0).abs() < 1e-12);

        assert_eq!(classify_regime(0.5, 2, 1.0), Err(Error::BadExponent(1.0)));
    }

    #[test]
    fn regime_boundaries_report_both() {
        let q = 2.0;
        let (r, b) = regime_of(q / E, q);
        assert_eq!(r, vec![Regime::Middle, Regime::Large]);
        // B is continuous there: both formulas give q/1 = 2 = e * (2/e)
        assert!((b - 2.0).abs() < 1e-12);
        let (r, b) = regime_of(q * (-q).exp(), q);
        assert_eq!(r, vec![Regime::Small, Regime::Middle]);
        assert!((b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eta_spot_values() {
        let eta = latala_eta(0.5, 1, 2.0);
        let closed = 1.0 / ((2.0 * E * E - 1.0).sqrt() - 1.0);
        assert!((eta - closed).abs() < 1e-15);
        assert!((eta - 0.368747).abs() < 1e-6);
        assert!((eta - eta_by_bisection(0.5, 1, 2.0)).abs() < 1e-10);
        let eta = latala_eta(0.5, 2, 2.0);
        assert!((eta - 0.903901).abs() < 1e-6);
        assert!((eta - eta_by_bisection(0.5, 2, 2.0)).abs() < 1e-10);
    }

    #[test]
    fn eta_residual_small() {
        for a in 1..=10 {
            let eps = 0.5f64.powi(a);
            for d in [1u64, 3, 17, 1000, 1 << 20] {
                for q in [4.0 / 3.0, 2.0, 4.0] {
                    let eta = latala_eta(eps, d, q);
                    assert!(eta_residual(eps, d, q, eta) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn moments() {
        let s = build_atom_space(Rational::new(1, 2), 2, Rational::new(1, 4)).unwrap();
        assert_eq!(
            &height_q_moment_exact(&s, 2) / s.q0_measure(),
            Rational::new(5, 2)
        );
        assert!((height_q_moment(&s, 2.0) / 0.25 - 2.5).abs() < 1e-15);
        for d in [1u64, 4, 9] {
            let eps = Rational::new(1, 3);
            assert!((height_q_moment_ratio(&eps, d, 1.0) - d as f64).abs() < 1e-12);
        }
        assert!((height_q_moment_ratio(&Rational::new(1, 5), 1, 3.7) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn upper_bound_examples() {
        let u = upper_bound_weak_norm(&Rational::new(1, 2), 2, 2.0).unwrap();
        assert!((u.value - (2.5f64 / 1.75).sqrt()).abs() < 1e-12);
        assert!((u.value - 1.195229).abs() < 1e-6);
        assert_eq!(u.argmax_d, 2);
        let u = upper_bound_weak_norm(&Rational::new(1, 3), 1, 3.0).unwrap();
        assert!((u.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stepped_constants_match_direct() {
        for eps in [Rational::new(1, 2), Rational::new(3, 16), Rational::new(1, 1024)] {
            for q in [4.0 / 3.0, 2.0, 4.0] {
                let stepped = holder_constants_upto(&eps, 3000, q);
                for d in [1u64, 2, 7, 100, 999, 3000] {
                    let direct = holder_constant(&eps, d, q);
                    let got = stepped[d as usize - 1];
                    assert!((got - direct).abs() < 1e-11 * direct, "eps={eps} q={q} d={d}");
                }
            }
        }
    }

    #[test]
    fn holder_constant_increasing_in_d() {
        for eps in [Rational::new(1, 2), Rational::new(1, 16), Rational::new(1, 1024)] {
            for q in [4.0 / 3.0, 2.0, 4.0] {
                let mut prev = 0.0;
                for (i, c) in holder_constants_upto(&eps, EXHAUSTIVE_SCAN, q).into_iter().enumerate() {
                    let d = i + 1;
                    assert!(c >= prev * (1.0 - 1e-13), "eps={eps} q={q} d={d}");
                    prev = c;
                }
            }
        }
    }

    #[test]
    fn rq_branches_parse() {
        assert_eq!("SRQ".parse::<RqBranch>().unwrap(), RqBranch::Srq);
        assert_eq!("rq1:2.5".parse::<RqBranch>().unwrap(), RqBranch::Rq1 { d: 2.5 });
        assert!(matches!("RQ3".parse::<RqBranch>(), Err(Error::BranchUnknown(_))));
        assert!(matches!("RQ1".parse::<RqBranch>(), Err(Error::BranchUnknown(_))));
    }

    #[test]
    fn rq_at_d_equals_q() {
        for q in [4.0 / 3.0, 2.0, 4.0, 10.0] {
            for a in [1e-3, 0.1, 1.0, 10.0, 300.0] {
                let srq = simplified_rq(a, q, RqBranch::Srq);
                for b in [RqBranch::Rq1 { d: q }, RqBranch::Rq2 { d: q }] {
                    let ratio = simplified_rq(a, q, b) / srq;
                    assert!((0.1..=10.0).contains(&ratio), "q={q} a={a} {b:?}: {ratio}");
                }
            }
        }
    }

    #[test]
    fn rq_monotone() {
        for q in [4.0 / 3.0, 2.0, 4.0, 10.0] {
            for a in [1e-3, 0.3, 5.0] {
                let mut prev = 0.0;
                for i in 0..=50 {
                    let d = 1.0 + (q - 1.0) * i as f64 / 50.0;
                    let v = simplified_rq(a, q, RqBranch::Rq1 { d });
                    assert!(v >= prev * (1.0 - 1e-12));
                    prev = v;
                }
                let mut prev = f64::INFINITY;
                for i in 0..=50 {
                    let d = q * 1.2f64.powi(i);
                    let v = simplified_rq(a, q, RqBranch::Rq2 { d });
                    assert!(v <= prev * (1.0 + 1e-12));
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn relevant_quantity_consistent() {
        // same quantity through both parametrizations
        for (eps, d, p) in [(0.5, 3u64, 2.0), (0.125, 40, 4.0), (0.01, 1000, 1.5)] {
            let q = p / (p - 1.0);
            let direct = relevant_quantity(eps, d, p).unwrap();
            let via_a = relevant_quantity_at(a_p(eps, d, p), q, d as f64);
            assert!((direct - via_a).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn endpoint_example() {
        let r = endpoint_machinery(&Rational::new(1, 4), 8);
        assert!((r.a - 1.442695).abs() < 1e-6);
        assert!((r.c - 0.343153).abs() < 1e-6);
        assert!((r.expmoment - 2.180436).abs() < 1e-6);
        assert!((r.exp_bound - 2.268).abs() < 1e-3);
        assert!(r.expmoment <= r.exp_bound && r.exp_bound <= r.inv_eps);
        assert!(((1.0 + r.a) * (r.lambda - 1.0) - 1.0).abs() < 1e-12);

        let r = endpoint_machinery(&Rational::new(1, 3), 1);
        assert!((r.expmoment - (1.0 + (r.lambda - 1.0) / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn expmoment_polynomial_identity() {
        for d in 1..=10u32 {
            let s = build_atom_space(Rational::new(1, 4), d, Rational::dyadic(d as u64 + 2)).unwrap();
            let lam = Rational::new(7, 5);
            let one_m = Rational::new(3, 4);
            let closed = (one_m + &Rational::new(1, 4) * &lam).pow(d);
            assert_eq!(expmoment_by_atoms(&s, &lam), closed);
        }
    }

    #[test]
    fn phi_boundary_and_young() {
        let (eps, c) = (0.25, 0.3);
        assert_eq!(legendre_phi(eps, eps, c), 0.0);
        assert_eq!(legendre_phi(0.1, eps, c), 0.0);
        for i in 0..40 {
            for k in 0..40 {
                let a = 0.01 * 1.4f64.powi(i);
                let b = 0.01 * 1.4f64.powi(k);
                assert!(a * b <= legendre_phi(a, eps, c) + psi(b, eps, c) + 1e-12);
            }
        }
    }

    #[test]
    fn phi_matches_numeric_sup() {
        let (eps, c) = (0.125, 0.5);
        for x in [0.2, 1.0, 7.5, 100.0] {
            let mut best = 0.0f64;
            for i in 1..200_000 {
                let t = i as f64 * 1e-4;
                best = best.max(x * t - psi(t, eps, c));
            }
            assert!((legendre_phi(x, eps, c) - best).abs() < 1e-6 * (1.0 + best));
        }
    }

    #[test]
    fn phi_large_x_bounds() {
        for a in 1..=10 {
            let eps = 0.5f64.powi(a);
            let c = 0.3;
            for i in 0..30 {
                let x = 10.0 / eps * 1.5f64.powi(i);
                let phi = legendre_phi(x, eps, c);
                assert!(phi <= x / c * (x / eps).ln());
                assert!(phi <= 2.0 * x / c * (E + x).ln());
            }
        }
    }

    #[test]
    fn endpoint_check_examples() {
        let s = build_atom_space(Rational::new(1, 4), 3, Rational::dyadic(5)).unwrap();
        let a = a_endpoint(0.25, 3);
        let f1 = crate::maximal::indicator_q1::<f64>(&s).unwrap();
        let r = endpoint_upper_check(&s, &f1, 0.5).unwrap();
        assert!((r - 1.0 / ((1.0 + a) * 2.0 * (E + 2.0).ln())).abs() < 1e-12);

        let f0 = crate::maximal::indicator_q0::<f64>(&s);
        let r = endpoint_upper_check(&s, &f0, 0.125).unwrap();
        let sh = shadow_ratio(&Rational::new(1, 4), 3);
        let expect = sh / ((1.0 + a) * 8.0 * (E + 8.0).ln());
        assert!((r - expect).abs() < 1e-12);

        let zero = StepFunction::<f64>::zero(&s);
        assert!(matches!(endpoint_upper_check(&s, &zero, 1.0), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn family_examples() {
        let fam = corollary_family(FamilyRule::Closed, 2.0, 10_000);
        let rep = family_analysis(&fam, &[1.5, 2.0, 3.0]).unwrap();
        let at = |p: f64| rep.per_p.iter().find(|r| r.p == p).unwrap();
        assert!(at(2.0).a_p.sup < 1.0);
        assert!(!at(2.0).a_p.divergent);
        assert!(at(1.5).a_p.divergent);
        assert!(!at(3.0).a_p.divergent);

        let open = corollary_family(FamilyRule::Open, 2.0, 10_000);
        let rep = family_analysis(&open, &[2.0, 3.0]).unwrap();
        assert!(rep.per_p[0].a_p.divergent);
        assert!(!rep.per_p[1].a_p.divergent);

        let single = vec![FamilyMember {
            eps: Rational::new(1, 4),
            d: 9,
        }];
        let rep = family_analysis(&single, &[2.0]).unwrap();
        assert_eq!(rep.per_p[0].a_p.sup, 0.75);
        assert_eq!(rep.sup_d.sup, 9.0);
        assert!(rep.per_p[0].a_p.inconclusive);
        assert_eq!(family_analysis(&[], &[2.0]), Err(Error::EmptyFamily));
    }
}
