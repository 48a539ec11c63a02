//! Invariant suites with measured universal constants.
//!
//! Each suite returns named pass/fail checks plus the constants it measured.
//! Constants are recorded, never assumed; a check fails only when a measured
//! constant exceeds its configured ceiling or an exact identity breaks.

use std::collections::BTreeMap;
use std::time::Instant;

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{basis_level, config_to_atom_space, default_atom_space, make_config};
use crate::binomial;
use crate::bounds::{
    corollary_family, endpoint_machinery, endpoint_upper_check, eta_residual,
    expmoment_by_atoms, family_analysis, latala_eta, legendre_phi, simplified_rq,
    FamilyRule, RqBranch,
};
use crate::maximal::{apply_maximal, indicator_q0, indicator_q1, superlevel_measure};
use crate::measure::{build_atom_space, AtomId, AtomSpace, StepFunction};
use crate::oracle::{build_grid, cell_indicator, oracle_maximal, oracle_measures, SetExpr};
use crate::rational::Rational;
use crate::sweep::{log_spaced, run_sweep, SweepSpec};

/// Ceilings the measured constants must stay under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ceilings {
    /// Latała equivalence constant `K`.
    pub latala_k: f64,
    /// `K1 * K2` for the regime conformance band.
    pub band_product: f64,
    /// Allowed relative widening of `K1 * K2` under 2x grid refinement.
    pub refinement_widening: f64,
    /// Largest endpoint ratio over the test corpus.
    pub endpoint_ratio: f64,
    /// Sharpness constant `K3` of the endpoint witnesses.
    pub k3: f64,
    /// Constant in `φ(x) <= K (x/c) log(e + x)` for `x >= 10/eps`.
    pub phi_k: f64,
}

impl Default for Ceilings {
    fn default() -> Self {
        Ceilings {
            latala_k: 10.0,
            band_product: 1e3,
            refinement_widening: 0.05,
            endpoint_ratio: 10.0,
            k3: 100.0,
            phi_k: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub checks: Vec<Check>,
    pub constants: BTreeMap<String, f64>,
    pub seconds: f64,
}

impl Suite {
    fn new(name: &str) -> Self {
        Suite {
            name: name.into(),
            ..Default::default()
        }
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn timed(name: &str, body: impl FnOnce(&mut Suite)) -> Suite {
    let start = Instant::now();
    let mut s = Suite::new(name);
    body(&mut s);
    s.seconds = start.elapsed().as_secs_f64();
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSize {
    Small,
    Full,
}

impl GridSize {
    pub fn sweep(self) -> SweepSpec {
        match self {
            GridSize::Small => SweepSpec::small(),
            GridSize::Full => SweepSpec::full(),
        }
    }
}

impl std::str::FromStr for GridSize {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "small" => Ok(GridSize::Small),
            "full" => Ok(GridSize::Full),
            other => Err(crate::Error::Parse(format!("unknown grid {other:?}"))),
        }
    }
}

/// Atom measures sum to one; `μ(∩_{k∈E} Q_k) = eps^|E|` on `Q0` for every
/// `E`; `|sh|` closed form and `|sh| >= (d/2)|Q0|`; `Σ|Q_k| = d|Q0|`; the
/// exponential moment as an atom sum equals `(1 + (Λ-1) eps)^d`.
pub fn suite_identities(max_d: u32, max_d_exp: u32) -> Suite {
    timed("identities", |s| {
        let eps_list = [
            Rational::new(1, 2),
            Rational::new(1, 3),
            Rational::new(1, 4),
            Rational::new(1, 8),
            Rational::new(3, 7),
        ];
        let (mut sums, mut inter, mut shadow, mut qk) = (true, true, true, true);
        for eps in &eps_list {
            let one_m = Rational::one().checked_sub(eps).expect("eps <= 1/2");
            for d in 1..=max_d {
                let space = default_atom_space(eps.clone(), d).expect("valid configuration");
                let q0 = space.q0_measure().clone();
                let total: Rational = space.atoms().map(|a| space.measure(&a)).sum();
                sums &= total == Rational::one();

                // sums over supersets of every E
                let n = space.inner_atom_count() as usize;
                let mut g: Vec<Rational> = (0..n as u64)
                    .map(|m| space.measure(&AtomId::Inner(m)))
                    .collect();
                for bit in 0..d {
                    for m in 0..n {
                        if m & (1 << bit) == 0 {
                            let add = g[m | (1 << bit)].clone();
                            g[m] = &g[m] + &add;
                        }
                    }
                }
                for (m, v) in g.iter().enumerate() {
                    inter &= &(v / &q0) == &eps.pow((m as u64).count_ones());
                }

                let sh: Rational = space
                    .atoms()
                    .filter(|a| !matches!(a, AtomId::Inner(0) | AtomId::Remainder))
                    .map(|a| space.measure(&a))
                    .sum();
                let closed = &q0
                    * &(one_m.scale(d as u64) + Rational::one())
                        .checked_sub(&one_m.pow(d))
                        .expect("shadow positive");
                shadow &= sh == closed
                    && space.shadow_measure() == closed
                    && sh.scale(2) >= q0.scale(d as u64);

                let mut sum_qk = Rational::zero();
                for k in 1..=d {
                    let inner: Rational = (0..n as u64)
                        .filter(|m| m >> (k - 1) & 1 == 1)
                        .map(|m| space.measure(&AtomId::Inner(m)))
                        .sum();
                    sum_qk = sum_qk + inner + space.measure(&AtomId::OuterSlab(k));
                }
                qk &= sum_qk == q0.scale(d as u64);
            }
        }
        s.check("atom measures sum to 1", sums, format!("eps in 5 values, d <= {max_d}"));
        s.check("mu(cap_E Q_k) = eps^|E|", inter, format!("all E, d <= {max_d}"));
        s.check("shadow closed form and >= d|Q0|/2", shadow, "");
        s.check("sum |Q_k| = d|Q0|", qk, "");

        let mut expm = true;
        for eps in [Rational::new(1, 2), Rational::new(1, 4), Rational::new(1, 8)] {
            let one_m = Rational::one().checked_sub(&eps).expect("eps <= 1/2");
            for d in 1..=max_d_exp {
                let rep = endpoint_machinery(&eps, d as u64);
                let lambda = Rational::from_f64(rep.lambda).expect("finite");
                let space = build_atom_space(eps.clone(), d, Rational::dyadic(d as u64 + 1))
                    .expect("feasible");
                let closed = (one_m.clone() + &eps * &lambda).pow(d);
                expm &= expmoment_by_atoms(&space, &lambda) == closed;
            }
        }
        s.check(
            "exponential moment atom sum = (1+(Λ-1)eps)^d",
            expm,
            format!("d <= {max_d_exp}, Λ exact rational of its binary64 value"),
        );
    })
}

/// Basis levels reproduce the ten tabulated rows.
pub fn suite_table() -> Suite {
    const ROWS: [&[u32]; 10] = [
        &[1],
        &[1, 1],
        &[2, 1],
        &[2, 2],
        &[2, 2, 1],
        &[2, 2, 2],
        &[3, 2, 2],
        &[3, 3, 2],
        &[3, 3, 3],
        &[3, 3, 3, 1],
    ];
    timed("table", |s| {
        for (i, row) in ROWS.iter().enumerate() {
            let m = i as u64 + 1;
            let got = basis_level(m).sidelength_exponents;
            s.check(&format!("m = {m}"), got == *row, format!("{got:?}"));
        }
    })
}

/// Independent bisection on `d log(1 + eps((1 + 1/eta)^q - 1)) = q`.
pub fn eta_by_bisection(eps: f64, d: u64, q: f64) -> f64 {
    let g = |eta: f64| d as f64 * (eps * (q * (1.0 / eta).ln_1p()).exp_m1()).ln_1p() - q;
    let (mut lo, mut hi) = (1e-12f64, 1e12f64);
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

pub const Q_GRID: [f64; 3] = [4.0 / 3.0, 2.0, 4.0];

fn eta_grid(size: GridSize) -> (Vec<u32>, Vec<u64>) {
    match size {
        GridSize::Small => ((1..=10).collect(), log_spaced(1, 1 << 20, 11)),
        GridSize::Full => ((1..=10).collect(), log_spaced(1, 1 << 20, 61)),
    }
}

/// Residual of the closed-form `eta` on the grid, spot values, and the
/// Latała equivalence constant against the exact binomial `L^q` norm.
pub fn suite_eta(size: GridSize, ceilings: &Ceilings) -> Suite {
    timed("eta", |s| {
        let (eps_pows, ds) = eta_grid(size);
        let mut worst = 0.0f64;
        let (mut kmax, mut kmin) = (0.0f64, f64::INFINITY);
        for &a in &eps_pows {
            let eps = Rational::dyadic(a as u64);
            let e = eps.to_f64();
            for &d in &ds {
                for q in Q_GRID {
                    let eta = latala_eta(e, d, q);
                    worst = worst.max(eta_residual(e, d, q, eta));
                    let norm = binomial::moment_f64(d, &eps, q).powf(1.0 / q);
                    let r = norm / eta;
                    kmax = kmax.max(r);
                    kmin = kmin.min(r);
                }
            }
        }
        s.check(
            "eta residual <= 1e-12",
            worst <= 1e-12,
            format!("max relative residual {worst:e}"),
        );
        s.constants.insert("eta_max_residual".into(), worst);

        let spot = latala_eta(0.5, 1, 2.0);
        let bis = eta_by_bisection(0.5, 1, 2.0);
        s.check(
            "eta(1/2,1,2) = 0.368747",
            (spot - 0.368747).abs() <= 1e-5 && (bis - 0.368747).abs() <= 1e-5,
            format!("closed {spot}, bisection {bis}"),
        );
        let spot2 = latala_eta(0.5, 2, 2.0);
        s.check(
            "eta(1/2,2,2) = 0.903901",
            (spot2 - 0.903901).abs() <= 1e-5,
            format!("{spot2}"),
        );

        let k = kmax.max(1.0 / kmin);
        s.constants.insert("K".into(), k);
        s.constants.insert("latala_ratio_min".into(), kmin);
        s.constants.insert("latala_ratio_max".into(), kmax);
        s.check(
            "Latala equivalence K within ceiling",
            k <= ceilings.latala_k,
            format!("ratio in [{kmin}, {kmax}], K = {k}"),
        );
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub k1: f64,
    pub k2: f64,
    pub sandwich: bool,
    pub rows: usize,
    pub failed_rows: usize,
}

impl Band {
    pub fn product(&self) -> f64 {
        self.k1 * self.k2
    }
}

/// Relative slack allowed in `lower <= upper`; the two coincide at `d = 1`.
pub const SANDWICH_RTOL: f64 = 1e-12;

/// Band `[1/K1, K2]` containing `lower/B` and `upper/B` over a sweep.
pub fn conformance_band(spec: &SweepSpec, threads: Option<usize>) -> crate::Result<Band> {
    let rows = run_sweep(spec, threads)?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut sandwich = true;
    let mut failed = 0;
    for r in &rows {
        match &r.outcome {
            Ok(rep) => {
                lo = lo.min(rep.lower_over_b.min(rep.upper_over_b));
                hi = hi.max(rep.lower_over_b.max(rep.upper_over_b));
                sandwich &= rep.lower <= rep.upper * (1.0 + SANDWICH_RTOL);
            }
            Err(_) => failed += 1,
        }
    }
    Ok(Band {
        k1: 1.0 / lo,
        k2: hi,
        sandwich,
        rows: rows.len(),
        failed_rows: failed,
    })
}

pub fn suite_conformance(size: GridSize, ceilings: &Ceilings, threads: Option<usize>) -> Suite {
    timed("conformance", |s| {
        let spec = size.sweep();
        let (base, refined) = match (
            conformance_band(&spec, threads),
            conformance_band(&spec.refined(), threads),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                s.check("sweep runs", false, e.to_string());
                return;
            }
        };
        s.check(
            "all grid points evaluated",
            base.failed_rows == 0 && refined.failed_rows == 0,
            format!("{} + {} rows", base.rows, refined.rows),
        );
        s.check("lower <= upper", base.sandwich && refined.sandwich, "");
        s.constants.insert("K1".into(), base.k1);
        s.constants.insert("K2".into(), base.k2);
        s.constants.insert("K1_refined".into(), refined.k1);
        s.constants.insert("K2_refined".into(), refined.k2);
        s.check(
            "K1*K2 within ceiling",
            base.product() <= ceilings.band_product,
            format!("K1 = {}, K2 = {}, product {}", base.k1, base.k2, base.product()),
        );
        s.check(
            "band stable under 2x refinement",
            refined.product() <= base.product() * (1.0 + ceilings.refinement_widening),
            format!("refined product {}", refined.product()),
        );
    })
}

/// Sample points of `A` inside each regime for conjugate exponent `q`.
pub fn regime_samples(q: f64) -> [Vec<f64>; 3] {
    let lo = q * (-q).exp();
    let hi = q / std::f64::consts::E;
    let geo = |a: f64, b: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
            .collect()
    };
    [geo(lo * 1e-6, lo, 25), geo(hi, hi * 1e6, 25), geo(lo, hi, 25)]
}

pub const REGIME_Q: [f64; 7] = [4.0 / 3.0, 1.5, 2.0, 3.0, 4.0, 8.0, 20.0];

pub fn suite_regime_cases() -> Suite {
    timed("regime cases", |s| {
        let (mut c1, mut c2, mut c3) = (0.0f64, (f64::INFINITY, 0.0f64), (f64::INFINITY, 0.0f64));
        let mut mono = true;
        for q in REGIME_Q {
            let [small, large, middle] = regime_samples(q);
            for a in small {
                c1 = c1.max(simplified_rq(a, q, RqBranch::Srq));
            }
            for a in large {
                let r = simplified_rq(a, q, RqBranch::Srq) / a;
                c2 = (c2.0.min(r), c2.1.max(r));
            }
            for a in middle {
                let r = simplified_rq(a, q, RqBranch::Srq) * (q / a).ln() / q;
                c3 = (c3.0.min(r), c3.1.max(r));
            }
            for a in [1e-4, 1e-2, 0.3, 1.0, 5.0, 100.0] {
                let mut prev = 0.0;
                for i in 0..=64 {
                    let d = 1.0 + (q - 1.0) * i as f64 / 64.0;
                    let v = simplified_rq(a, q, RqBranch::Rq1 { d });
                    mono &= v >= prev * (1.0 - 1e-12);
                    prev = v;
                }
                let mut prev = f64::INFINITY;
                for i in 0..=64 {
                    let d = q * 1.25f64.powi(i);
                    let v = simplified_rq(a, q, RqBranch::Rq2 { d });
                    mono &= v <= prev * (1.0 + 1e-12);
                    prev = v;
                }
            }
        }
        s.check("case A <= q e^-q: SRQ <= 10", c1 <= 10.0, format!("max SRQ {c1}"));
        s.check(
            "case A >= q/e: SRQ/A in [1/10, 10]",
            c2.0 >= 0.1 && c2.1 <= 10.0,
            format!("range [{}, {}]", c2.0, c2.1),
        );
        s.check(
            "middle case: SRQ log(q/A)/q in [1/10, 10]",
            c3.0 >= 0.1 && c3.1 <= 10.0,
            format!("range [{}, {}]", c3.0, c3.1),
        );
        s.check("RQ1 increasing, RQ2 decreasing", mono, "");
        s.constants.insert("case1_max".into(), c1);
        s.constants.insert("case2_min".into(), c2.0);
        s.constants.insert("case2_max".into(), c2.1);
        s.constants.insert("case3_min".into(), c3.0);
        s.constants.insert("case3_max".into(), c3.1);
    })
}

fn random_step(space: &AtomSpace, rng: &mut ChaCha8Rng) -> StepFunction<f64> {
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if rng.random::<f64>() < 0.3 {
            0.0
        } else {
            (-rng.random::<f64>().max(1e-300).ln()).powi(3)
        }
    };
    if space.is_symmetric() {
        let classes = (0..=space.d()).map(|_| draw(rng)).collect();
        let slab = draw(rng);
        let rem = draw(rng);
        StepFunction::symmetric(space, classes, slab, rem).expect("nonnegative")
    } else {
        StepFunction::from_fn(space, |_| draw(rng)).expect("nonnegative")
    }
}

/// Endpoint chain on the grid, the endpoint ratio over a corpus of step
/// functions, and the sharpness constant of the two witnesses.
pub fn suite_endpoint(size: GridSize, ceilings: &Ceilings, seed: u64) -> Suite {
    timed("endpoint", |s| {
        let spec = size.sweep();
        let mut chain = true;
        for eps in &spec.eps_grid {
            for &d in &spec.d_grid {
                let r = endpoint_machinery(eps, d);
                chain &= r.expmoment <= r.exp_bound && r.exp_bound <= r.inv_eps;
            }
        }
        s.check("expmoment <= exp(d(Λ-1)eps) <= 1/eps", chain, "no tolerance");

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_config = 100;
        let eps_list: Vec<Rational> = (1..=5).map(Rational::dyadic).collect();
        let d_list: &[u32] = match size {
            GridSize::Small => &[1, 2, 3, 5, 8, 12, 16, 20],
            GridSize::Full => &[1, 2, 3, 4, 5, 6, 8, 10, 12, 14, 16, 18, 20],
        };
        let mut ceiling = 0.0f64;
        let mut worst_witness = f64::INFINITY;
        let mut ok = true;
        for eps in &eps_list {
            for &d in d_list {
                let space = match build_atom_space(eps.clone(), d, Rational::dyadic(d as u64 + 1)) {
                    Ok(sp) => sp,
                    Err(e) => {
                        ok = false;
                        s.check("configuration", false, e.to_string());
                        continue;
                    }
                };
                let e = eps.to_f64();
                let single = indicator_q1::<f64>(&space).expect("enumerated layout");
                let center = indicator_q0::<f64>(&space);
                let r1 = endpoint_upper_check(&space, &single, 0.5);
                let r0 = endpoint_upper_check(&space, &center, e / 2.0);
                match (r1, r0) {
                    (Ok(a), Ok(b)) => {
                        ceiling = ceiling.max(a).max(b);
                        worst_witness = worst_witness.min(a.max(b));
                    }
                    _ => ok = false,
                }
                let corpus_space = if d > 12 {
                    space.clone().with_symmetric(true).expect("valid")
                } else {
                    space.clone()
                };
                for _ in 0..per_config {
                    let f = random_step(&corpus_space, &mut rng);
                    let top = f.max_value();
                    if top <= 0.0 {
                        continue;
                    }
                    let lambda = top * 10f64.powf(-3.0 * rng.random::<f64>());
                    match endpoint_upper_check(&corpus_space, &f, lambda) {
                        Ok(r) if r.is_finite() => ceiling = ceiling.max(r),
                        Ok(_) => ok = false,
                        Err(crate::Error::DivisionByZero(_)) => {}
                        Err(_) => ok = false,
                    }
                }
            }
        }
        let k3 = 1.0 / worst_witness;
        s.constants.insert("endpoint_ratio_ceiling".into(), ceiling);
        s.constants.insert("K3".into(), k3);
        s.check("endpoint ratios finite", ok && ceiling.is_finite(), "");
        s.check(
            "endpoint ratio ceiling within bound",
            ceiling <= ceilings.endpoint_ratio,
            format!("max ratio {ceiling}"),
        );
        s.check(
            "witnesses reach ratio >= 1/K3",
            k3 <= ceilings.k3,
            format!("K3 = {k3}"),
        );

        let mut phi_k = 0.0f64;
        let mut phi_ok = true;
        for a in 1..=10u64 {
            let eps = Rational::dyadic(a);
            let e = eps.to_f64();
            for d in [1u64, 4, 64, 4096, 1 << 20] {
                let c = endpoint_machinery(&eps, d).c;
                for i in 0..40 {
                    let x = 10.0 / e * 1.6f64.powi(i);
                    let phi = legendre_phi(x, e, c);
                    phi_ok &= phi <= x / c * (x / e).ln();
                    phi_k = phi_k.max(phi / (x / c * (std::f64::consts::E + x).ln()));
                }
            }
        }
        s.constants.insert("phi_K".into(), phi_k);
        s.check("phi(x) <= (x/c) log(x/eps)", phi_ok, "x >= 10/eps");
        s.check(
            "phi(x) <= K (x/c) log(e+x)",
            phi_k <= ceilings.phi_k,
            format!("K = {phi_k}"),
        );
    })
}

/// Closed and open corollary families with `p0 = 2`.
pub fn suite_family() -> Suite {
    timed("family", |s| {
        let p0 = 2.0;
        let checkpoints = [100u64, 1000, 10_000];
        let closed = corollary_family(FamilyRule::Closed, p0, 10_000);
        let mut sups_p0 = Vec::new();
        let mut sups_low = Vec::new();
        for &j in &checkpoints {
            let rep = family_analysis(&closed[..j as usize], &[p0, 1.5]).expect("nonempty");
            sups_p0.push(rep.per_p[0].a_p.sup);
            sups_low.push(rep.per_p[1].a_p.sup);
        }
        let full = family_analysis(&closed, &[p0, 1.5]).expect("nonempty");
        s.check(
            "closed rule: sup A_p0 <= 2",
            sups_p0.iter().all(|v| *v <= 2.0) && !full.per_p[0].a_p.divergent,
            format!("{sups_p0:?}"),
        );
        let growing = sups_low.windows(2).all(|w| w[1] >= 1.5 * w[0]);
        s.check(
            "closed rule: sup A_1.5 grows without bound",
            growing && full.per_p[1].a_p.divergent,
            format!("{sups_low:?}"),
        );
        let open = corollary_family(FamilyRule::Open, p0, 10_000);
        let rep = family_analysis(&open, &[p0, 3.0]).expect("nonempty");
        s.check(
            "open rule: A_p0 flagged divergent, A_3 bounded",
            rep.per_p[0].a_p.divergent && !rep.per_p[1].a_p.divergent,
            format!("sup A_p0 = {}", rep.per_p[0].a_p.sup),
        );
        s.constants.insert("closed_sup_A_p0".into(), full.per_p[0].a_p.sup);
    })
}

fn atom_for_mask(mask: u64) -> Option<AtomId> {
    if mask & 1 == 1 {
        Some(AtomId::Inner(mask >> 1))
    } else if mask == 0 {
        Some(AtomId::Remainder)
    } else if (mask >> 1).count_ones() == 1 {
        Some(AtomId::OuterSlab((mask >> 1).trailing_zeros() + 1))
    } else {
        None
    }
}

/// Exact agreement between the atom model and the grid oracle.
pub fn suite_oracle(seed: u64, translations: usize, functions: usize) -> Suite {
    timed("oracle", |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for eps in [Rational::new(1, 2), Rational::new(1, 4), Rational::new(1, 8)] {
            for d in 1..=4u32 {
                let base = make_config(eps.clone(), d).expect("valid");
                let space = config_to_atom_space(&base).expect("valid");
                let mut ok = true;
                let mut detail = String::new();
                for t in 0..=translations {
                    let mut cfg = base.clone();
                    if t > 0 {
                        let l = &cfg.level.sidelength_exponents;
                        let b = eps.denom().to_u64().expect("small denominator");
                        cfg.translation = l
                            .iter()
                            .map(|li| {
                                let n = (1u64 << li) * b;
                                Rational::new(rng.random_range(0..n), n)
                            })
                            .collect();
                    }
                    let gm = match build_grid(&cfg) {
                        Ok(g) => g,
                        Err(e) => {
                            ok = false;
                            detail = e.to_string();
                            continue;
                        }
                    };
                    // every atom measure, both directions
                    let mut seen = 0usize;
                    for (expr, m) in oracle_measures(&gm) {
                        if let SetExpr::Atom(mask) = expr {
                            match atom_for_mask(mask) {
                                Some(a) if space.measure(&a) == m => seen += 1,
                                _ => {
                                    ok = false;
                                    detail = format!("atom {mask:#b}");
                                }
                            }
                        }
                    }
                    let positive = space.atoms().filter(|a| !space.measure(a).is_zero()).count();
                    ok &= seen == positive;

                    let masks = gm.cell_masks();
                    let mut fs = vec![cell_indicator(&gm, 0), cell_indicator(&gm, 1)];
                    for _ in 0..functions {
                        fs.push(
                            (0..masks.len())
                                .map(|_| if rng.random::<f64>() < 0.4 { 0 } else { rng.random_range(0..10u64) })
                                .collect(),
                        );
                    }
                    for f in &fs {
                        // condition f on the atoms
                        let mut sums = vec![0u64; 1 << (d + 1)];
                        let mut counts = vec![0u64; 1 << (d + 1)];
                        for (i, m) in masks.iter().enumerate() {
                            sums[*m as usize] += f[i];
                            counts[*m as usize] += 1;
                        }
                        let cond = StepFunction::<Rational>::from_fn(&space, |a| {
                            let mask = match a {
                                AtomId::Inner(e) => (e << 1) | 1,
                                AtomId::OuterSlab(k) => 1 << k,
                                AtomId::Remainder => 0,
                            } as usize;
                            if counts[mask] == 0 {
                                Rational::zero()
                            } else {
                                Rational::new(sums[mask], counts[mask])
                            }
                        })
                        .expect("nonnegative");
                        let atom = apply_maximal(&space, &cond).expect("same space");
                        let top = *f.iter().max().unwrap_or(&0);
                        let lambdas = [
                            Rational::new(rng.random_range(0..=4 * top.max(1)), 4),
                            Rational::new(1, 2),
                            &eps / &Rational::from_integer(2),
                        ];
                        for lambda in lambdas {
                            let grid = oracle_maximal(&gm, f, &lambda).expect("sized");
                            let avg_ok = (1..=d).all(|k| {
                                grid.averages[k as usize - 1] == atom.averages[k as usize - 1]
                            });
                            let lvl = superlevel_measure(&atom.mf, &lambda);
                            if !avg_ok || lvl != grid.superlevel {
                                ok = false;
                                detail = format!("lambda {lambda}");
                            }
                        }
                    }
                }
                s.check(&format!("eps = {eps}, d = {d}"), ok, detail);
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub grid: GridSize,
    pub oracle: bool,
    pub seed: u64,
    pub ceilings: Ceilings,
    pub threads: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            grid: GridSize::Small,
            oracle: false,
            seed: 20240601,
            ceilings: Ceilings::default(),
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub grid: GridSize,
    pub suites: Vec<Suite>,
    pub ceilings: Ceilings,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(Suite::passed)
    }

    /// Every measured constant, prefixed by its suite.
    pub fn manifest(&self) -> BTreeMap<String, f64> {
        self.suites
            .iter()
            .flat_map(|s| s.constants.iter().map(move |(k, v)| (format!("{}.{k}", s.name), *v)))
            .collect()
    }
}

pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let (max_d, max_d_exp) = match opts.grid {
        GridSize::Small => (10, 20),
        GridSize::Full => (12, 24),
    };
    let mut suites = vec![
        suite_table(),
        suite_identities(max_d, max_d_exp),
        suite_eta(opts.grid, &opts.ceilings),
        suite_conformance(opts.grid, &opts.ceilings, opts.threads),
        suite_regime_cases(),
        suite_endpoint(opts.grid, &opts.ceilings, opts.seed),
        suite_family(),
    ];
    if opts.oracle {
        suites.push(suite_oracle(opts.seed, 3, 3));
    }
    VerifyReport {
        schema: "v1".into(),
        grid: opts.grid,
        suites,
        ceilings: opts.ceilings.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        for s in [suite_table(), suite_identities(6, 10), suite_regime_cases(), suite_family()] {
            assert!(s.passed(), "{}: {:?}", s.name, s.failures());
        }
    }

    #[test]
    fn mask_to_atom() {
        assert_eq!(atom_for_mask(0b101), Some(AtomId::Inner(0b10)));
        assert_eq!(atom_for_mask(0b100), Some(AtomId::OuterSlab(2)));
        assert_eq!(atom_for_mask(0), Some(AtomId::Remainder));
        assert_eq!(atom_for_mask(0b110), None);
    }

    #[test]
    fn bisection_agrees() {
        for (e, d, q) in [(0.5, 1, 2.0), (0.125, 300, 4.0 / 3.0), (0.01, 1 << 20, 4.0)] {
            let a = latala_eta(e, d, q);
            assert!((a - eta_by_bisection(e, d, q)).abs() < 1e-10 * a);
        }
    }
}
