//! Rubio de Francia basis levels and concrete `(eps, d)`-configurations.
//!
//! Level `m` is the box `V_m = (0, 2^-l_1) x ... x (0, 2^-l_n) x T^{n,ω}`,
//! stored as its sidelength exponents. The first ten levels are tabulated in
//! the literature; further levels follow the block rule that generates them:
//! from the uniform state `(k, ..., k)` with `k` coordinates (reached at
//! `m = k^2`), append a coordinate and raise it `1, 2, ..., k`, then raise
//! coordinates `1..=k+1` from `k` to `k+1` left to right. Each step halves
//! `|V_m|`, so `|V_m| = 2^-m`.
//!
//! The continuation beyond `m = 10` is an inference from the tabulated rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{build_atom_space, check_epsilon, AtomSpace, ENUMERATION_LIMIT};
use crate::rational::Rational;

/// Deepest level whose `|V_m| = 2^-m` is materialized as an exact rational.
pub const MAX_EXACT_LEVEL: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisLevel {
    pub m: u64,
    pub sidelength_exponents: Vec<u32>,
}

impl BasisLevel {
    pub fn coordinates(&self) -> usize {
        self.sidelength_exponents.len()
    }

    /// Sum of the exponents; `|V_m| = 2^-total`.
    pub fn total_exponent(&self) -> u64 {
        self.sidelength_exponents.iter().map(|&l| l as u64).sum()
    }

    pub fn measure(&self) -> Result<Rational> {
        let t = self.total_exponent();
        if t > MAX_EXACT_LEVEL {
            return Err(Error::LevelTooDeep(self.m));
        }
        Ok(Rational::dyadic(t))
    }

    /// `ln |V_m|`, available at any depth.
    pub fn ln_measure(&self) -> f64 {
        -(self.total_exponent() as f64) * std::f64::consts::LN_2
    }
}

pub fn basis_level(m: u64) -> BasisLevel {
    assert!(m >= 1, "basis levels start at m = 1");
    // largest k with k^2 <= m
    let mut k = (m as f64).sqrt() as u64;
    while k * k > m {
        k -= 1;
    }
    while (k + 1) * (k + 1) <= m {
        k += 1;
    }
    let s = m - k * k;
    let exps: Vec<u32> = if s == 0 {
        vec![k as u32; k as usize]
    } else if s <= k {
        // appending phase: new coordinate carries exponent s
        let mut v = vec![k as u32; k as usize];
        v.push(s as u32);
        v
    } else {
        // raising phase: first r coordinates already at k + 1
        let r = s - k;
        (0..=k)
            .map(|i| if i < r { (k + 1) as u32 } else { k as u32 })
            .collect()
    };
    BasisLevel {
        m,
        sidelength_exponents: exps,
    }
}

/// Smallest level with at least `d` coordinates: `m = (d-1)^2 + 1`.
pub fn first_level_with(d: u32) -> u64 {
    let d = d as u64;
    (d - 1) * (d - 1) + 1
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConfigSpec {
    pub eps: Rational,
    pub d: u32,
    pub level: BasisLevel,
    /// A point of `H_m`, one entry per active coordinate.
    pub translation: Vec<Rational>,
}

impl ConfigSpec {
    /// `T_k`, nonzero only in coordinate `k` where it equals
    /// `(1 - eps) 2^-l_k`.
    pub fn shift(&self, k: u32) -> Vec<Rational> {
        assert!(k >= 1 && k <= self.d);
        let one_m = Rational::one().checked_sub(&self.eps).expect("eps <= 1/2");
        (0..self.level.coordinates())
            .map(|i| {
                if i + 1 == k as usize {
                    &one_m * &Rational::dyadic(self.level.sidelength_exponents[i] as u64)
                } else {
                    Rational::zero()
                }
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigRepr {
    #[serde(default = "schema_v1")]
    schema: String,
    eps: Rational,
    d: u32,
    m: u64,
    exponents: Vec<u32>,
    translation: Vec<Rational>,
}

fn schema_v1() -> String {
    "v1".into()
}

impl Serialize for ConfigSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConfigRepr {
            schema: schema_v1(),
            eps: self.eps.clone(),
            d: self.d,
            m: self.level.m,
            exponents: self.level.sidelength_exponents.clone(),
            translation: self.translation.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConfigSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ConfigRepr::deserialize(de)?;
        let cfg = make_config_at(r.eps, r.d, r.m).map_err(D::Error::custom)?;
        if cfg.level.sidelength_exponents != r.exponents {
            return Err(D::Error::custom(format!(
                "exponents {:?} do not match basis level m = {}",
                r.exponents, r.m
            )));
        }
        if r.translation.len() != cfg.level.coordinates()
            || r.translation.iter().any(|t| *t >= 1u64)
        {
            return Err(D::Error::custom("translation must have one entry in [0,1) per coordinate"));
        }
        Ok(ConfigSpec {
            translation: r.translation,
            ..cfg
        })
    }
}

pub fn make_config(eps: Rational, d: u32) -> Result<ConfigSpec> {
    if d == 0 {
        return Err(Error::BadDimension);
    }
    make_config_at(eps, d, first_level_with(d))
}

/// Configuration on an explicitly chosen level `m`, which must carry at least
/// `d` coordinates.
pub fn make_config_at(eps: Rational, d: u32, m: u64) -> Result<ConfigSpec> {
    check_epsilon(&eps)?;
    if d == 0 {
        return Err(Error::BadDimension);
    }
    if m == 0 {
        return Err(Error::Parse("basis level m must be >= 1".into()));
    }
    let level = basis_level(m);
    if level.coordinates() < d as usize {
        return Err(Error::Parse(format!(
            "level m = {m} has {} coordinates, fewer than d = {d}",
            level.coordinates()
        )));
    }
    let translation = vec![Rational::zero(); level.coordinates()];
    Ok(ConfigSpec {
        eps,
        d,
        level,
        translation,
    })
}

pub fn config_to_atom_space(cfg: &ConfigSpec) -> Result<AtomSpace> {
    build_atom_space(cfg.eps.clone(), cfg.d, cfg.level.measure()?)
}

/// Atom space with the default central measure: `|V_m|` for the configuration
/// level while `d` is within the enumeration limit, otherwise the largest feasible
/// dyadic `2^-j` with `2^-j (1 + d(1-eps)) <= 1`. Every quantity compared
/// across configurations is homogeneous in `|Q0|`.
pub fn default_atom_space(eps: Rational, d: u32) -> Result<AtomSpace> {
    check_epsilon(&eps)?;
    if d == 0 {
        return Err(Error::BadDimension);
    }
    if d <= ENUMERATION_LIMIT {
        return config_to_atom_space(&make_config(eps, d)?);
    }
    let need = (1.0 + d as f64 * (1.0 - eps.to_f64())).log2().ceil() as u64;
    let mut j = need.saturating_sub(1);
    loop {
        if let Ok(space) = build_atom_space(eps.clone(), d, Rational::dyadic(j)) {
            return Ok(space);
        }
        j += 1;
    }
}
