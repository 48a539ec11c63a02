//! Per-point norm analysis and grid sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::default_atom_space;
use crate::bounds::{classify_regime, height_q_moment_exact, latala_eta, upper_bound_weak_norm};
use crate::error::{Error, Result};
use crate::maximal::lower_bound_weak_norm;
use crate::measure::{check_epsilon, shadow_ratio, AtomSpace};
use crate::rational::Rational;

/// Environment variable overriding the sweep worker count.
pub const THREADS_ENV: &str = "TORUSLAB_THREADS";

/// Largest `d` for which exact binomial moments are summed in exact mode.
pub const EXACT_MOMENT_LIMIT: u64 = 1000;

pub const CSV_COLUMNS: [&str; 14] = [
    "eps", "d", "p", "q", "A_p", "regime", "B", "lower", "upper", "lower/B", "upper/B", "eta",
    "C_pow_inv_q", "status",
];

/// Formats with 12 significant digits and then prints the shortest
/// representation of the rounded value.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("own formatting");
    let mag = rounded.abs();
    if mag != 0.0 && !(1e-5..1e16).contains(&mag) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    #[default]
    Float,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot_dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default = "schema_v1")]
    pub schema: String,
    pub eps_grid: Vec<Rational>,
    pub d_grid: Vec<u64>,
    pub p_grid: Vec<f64>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub mode: Mode,
}

fn schema_v1() -> String {
    "v1".into()
}

/// `n` integers from `lo` to `hi`, geometrically spaced, deduplicated.
pub fn log_spaced(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut v: Vec<u64> = (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            (a + t * (b - a)).exp().round() as u64
        })
        .collect();
    v.dedup();
    v
}

impl SweepSpec {
    /// `eps = 2^-1 .. 2^-10`, `d` at the powers of two up to `2^20`,
    /// `q in {4/3, 2, 4}`.
    pub fn full() -> Self {
        SweepSpec {
            schema: schema_v1(),
            eps_grid: (1..=10).map(Rational::dyadic).collect(),
            d_grid: (0..=20).map(|k| 1u64 << k).collect(),
            p_grid: vec![4.0, 2.0, 4.0 / 3.0],
            outputs: Outputs::default(),
            mode: Mode::Float,
        }
    }

    pub fn small() -> Self {
        SweepSpec {
            eps_grid: (1..=6).map(Rational::dyadic).collect(),
            d_grid: (0..=12).step_by(2).map(|k| 1u64 << k).collect(),
            ..Self::full()
        }
    }

    /// Twice the density in `eps` and `d` over the same ranges: adds
    /// `3/2^{k+2}` between `2^-k` and `2^-{k+1}`, and the rounded geometric
    /// midpoint between consecutive `d`.
    pub fn refined(&self) -> Self {
        let mut eps = Vec::new();
        for (i, e) in self.eps_grid.iter().enumerate() {
            eps.push(e.clone());
            if let Some(next) = self.eps_grid.get(i + 1) {
                eps.push(&(e + next) / &Rational::from_integer(2));
            }
        }
        let mut ds = Vec::new();
        for (i, d) in self.d_grid.iter().enumerate() {
            ds.push(*d);
            if let Some(next) = self.d_grid.get(i + 1) {
                let mid = ((*d as f64) * (*next as f64)).sqrt().round() as u64;
                if mid > *d && mid < *next {
                    ds.push(mid);
                }
            }
        }
        SweepSpec {
            eps_grid: eps,
            d_grid: ds,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() || self.d_grid.is_empty() || self.p_grid.is_empty() {
            return Err(Error::Parse("sweep grids must be nonempty".into()));
        }
        for e in &self.eps_grid {
            check_epsilon(e)?;
        }
        if self.d_grid.iter().any(|&d| d == 0 || d > u32::MAX as u64) {
            return Err(Error::BadDimension);
        }
        for &p in &self.p_grid {
            crate::maximal::conjugate_exponent(p)?;
        }
        Ok(())
    }

    /// Grid points in spec order: `eps` outermost, then `d`, then `p`.
    pub fn points(&self) -> Vec<(Rational, u64, f64)> {
        let mut out = Vec::new();
        for e in &self.eps_grid {
            for &d in &self.d_grid {
                for &p in &self.p_grid {
                    out.push((e.clone(), d, p));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub schema: String,
    pub eps: Rational,
    pub d: u64,
    pub p: f64,
    pub q: f64,
    #[serde(rename = "A_p")]
    pub a_p: f64,
    pub regime: String,
    #[serde(rename = "B")]
    pub b: f64,
    pub lower: f64,
    pub witness: String,
    /// Ratio achieved by each witness, keyed by name.
    pub witness_ratios: BTreeMap<String, f64>,
    pub upper: f64,
    #[serde(rename = "lower/B")]
    pub lower_over_b: f64,
    #[serde(rename = "upper/B")]
    pub upper_over_b: f64,
    pub eta: f64,
    #[serde(rename = "C_pow_inv_q")]
    pub c_pow_inv_q: f64,
}

/// Largest `d` a single analysis point accepts.
pub const MAX_ANALYSIS_D: u64 = 1 << 26;

/// Symmetric space used for the analysis of `(eps, d)`.
pub fn analysis_space(eps: &Rational, d: u64) -> Result<AtomSpace> {
    if d > MAX_ANALYSIS_D {
        return Err(Error::DimensionTooLarge {
            d,
            limit: MAX_ANALYSIS_D,
        });
    }
    let d32 = u32::try_from(d).map_err(|_| Error::BadDimension)?;
    default_atom_space(eps.clone(), d32)?.with_symmetric(true)
}

pub fn analyze_point(eps: &Rational, d: u64, p: f64, mode: Mode) -> Result<NormReport> {
    let space = analysis_space(eps, d)?;
    let e = eps.to_f64();
    let regime = classify_regime(e, d, p)?;
    let q = regime.q;
    let lower = lower_bound_weak_norm(&space, p)?;
    let upper = upper_bound_weak_norm(eps, d, p)?;
    let c_pow_inv_q = match mode {
        Mode::Exact if q.fract() == 0.0 && d <= EXACT_MOMENT_LIMIT => {
            let exact = space_exact_moment(eps, d, q as u32)?;
            (exact / shadow_ratio(eps, d)).powf(1.0 / q)
        }
        _ => upper.full_c_pow_inv_q,
    };
    Ok(NormReport {
        schema: schema_v1(),
        eps: eps.clone(),
        d,
        p,
        q,
        a_p: regime.a,
        regime: regime.regime_label(),
        b: regime.b,
        lower: lower.weak_norm,
        witness: lower.witness.name().into(),
        witness_ratios: lower
            .ratios
            .iter()
            .map(|(w, r)| (w.name().to_string(), *r))
            .collect(),
        upper: upper.value,
        lower_over_b: lower.weak_norm / regime.b,
        upper_over_b: upper.value / regime.b,
        eta: latala_eta(e, d, q),
        c_pow_inv_q,
    })
}

/// Exact `∫ h^q / |Q0|` as binary64.
fn space_exact_moment(eps: &Rational, d: u64, q: u32) -> Result<f64> {
    let d32 = u32::try_from(d).map_err(|_| Error::BadDimension)?;
    let unit = crate::measure::build_atom_space(eps.clone(), d32, Rational::dyadic(64))?
        .with_symmetric(true)?;
    let m = height_q_moment_exact(&unit, q);
    Ok((&m / unit.q0_measure()).to_f64())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: Rational,
    pub d: u64,
    pub p: f64,
    pub outcome: std::result::Result<NormReport, String>,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }

    pub fn csv_line(&self) -> String {
        let head = format!("{},{},{}", self.eps, self.d, fmt_float(self.p));
        match &self.outcome {
            Ok(r) => format!(
                "{head},{},{},{},{},{},{},{},{},{},{},ok",
                fmt_float(r.q),
                fmt_float(r.a_p),
                r.regime,
                fmt_float(r.b),
                fmt_float(r.lower),
                fmt_float(r.upper),
                fmt_float(r.lower_over_b),
                fmt_float(r.upper_over_b),
                fmt_float(r.eta),
                fmt_float(r.c_pow_inv_q),
            ),
            Err(msg) => {
                let clean: String = msg.chars().map(|c| if c == ',' || c == '\n' { ' ' } else { c }).collect();
                format!("{head},,,,,,,,,,,error: {clean}")
            }
        }
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

/// Evaluates every grid point; rows come back in spec order whatever the
/// completion order.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let points = spec.points();
    let work = || -> Vec<SweepRow> {
        points
            .par_iter()
            .map(|(eps, d, p)| SweepRow {
                eps: eps.clone(),
                d: *d,
                p: *p,
                outcome: analyze_point(eps, *d, *p, spec.mode).map_err(|e| e.to_string()),
            })
            .collect()
    };
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Parse(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Two-column `(A_p, upper/B)` data per `p`, keyed by file name, in row order.
pub fn plot_data(rows: &[SweepRow]) -> BTreeMap<String, String> {
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    for r in rows {
        if let Ok(rep) = &r.outcome {
            let name = format!("upper_over_B_p{}.dat", fmt_float(r.p));
            let buf = files
                .entry(name)
                .or_insert_with(|| format!("# p = {}\n# A_p upper/B\n", fmt_float(r.p)));
            let _ = writeln!(buf, "{} {}", fmt_float(rep.a_p), fmt_float(rep.upper_over_b));
        }
    }
    files
}
