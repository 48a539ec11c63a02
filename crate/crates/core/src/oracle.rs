//! Brute-force realization of a configuration as literal rectangles on a
//! rational grid over the active torus coordinates.
//!
//! Axis `i` of level `m` is cut into `N_i = 2^{l_i} b` cells for `eps = a/b`,
//! so `Q` spans `b` cells per axis and the shift of `Q_k` is `b - a` cells
//! along axis `k`. Every membership question reduces to per-axis bitmasks
//! (bit 0 for `Q0`, bit `k` for `Q_k`) ANDed across axes.

use std::fmt;
use std::io::{self, Write};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::basis::ConfigSpec;
use crate::error::{Error, Result};
use crate::rational::Rational;

/// Cap on the number of grid cells.
pub const CELL_CAP: u128 = 100_000_000;

/// Half-open cell index ranges of one rectangle along one axis; at most two
/// after splitting at the wraparound point.
pub type AxisRanges = Vec<(u64, u64)>;

#[derive(Clone, Debug)]
pub struct GridModel {
    pub eps: Rational,
    pub d: u32,
    pub resolution: Vec<u64>,
    /// `rectangles[j][i]`: ranges of `Q_j` (`j = 0` is `Q0`) on axis `i`.
    pub rectangles: Vec<Vec<AxisRanges>>,
    axis_masks: Vec<Vec<u64>>,
}

fn to_u64(r: &Rational, what: &str) -> Result<u64> {
    if !r.denom().is_one() {
        return Err(Error::NonAlignable(format!("{what} = {r} is not a whole number of cells")));
    }
    r.numer()
        .to_u64()
        .ok_or_else(|| Error::NonAlignable(format!("{what} = {r} is out of range")))
}

fn interval(start: u64, len: u64, n: u64) -> AxisRanges {
    let start = start % n;
    if start + len <= n {
        vec![(start, start + len)]
    } else {
        vec![(start, n), (0, start + len - n)]
    }
}

pub fn build_grid(cfg: &ConfigSpec) -> Result<GridModel> {
    if cfg.d > 62 {
        return Err(Error::ResolutionOverflow {
            cells: u128::MAX,
            cap: CELL_CAP,
        });
    }
    let (a, b) = match (cfg.eps.numer().to_u64(), cfg.eps.denom().to_u64()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NonAlignable(format!("eps = {} is too fine for a grid", cfg.eps))),
    };
    let n = cfg.level.coordinates();
    let mut cells: u128 = 1;
    let mut resolution = Vec::with_capacity(n);
    for &l in &cfg.level.sidelength_exponents {
        let ni = 1u128
            .checked_shl(l)
            .and_then(|x| x.checked_mul(b as u128))
            .unwrap_or(u128::MAX);
        cells = cells.saturating_mul(ni);
        if cells > CELL_CAP {
            return Err(Error::ResolutionOverflow { cells, cap: CELL_CAP });
        }
        resolution.push(ni as u64);
    }
    let mut offsets = Vec::with_capacity(n);
    for (i, t) in cfg.translation.iter().enumerate() {
        let cells_at = t.scale(resolution[i]);
        offsets.push(to_u64(&cells_at, &format!("translation[{i}]"))?);
    }
    let mut rectangles = Vec::with_capacity(cfg.d as usize + 1);
    for j in 0..=cfg.d as usize {
        let axes: Vec<AxisRanges> = (0..n)
            .map(|i| {
                let shift = if j == i + 1 { b - a } else { 0 };
                interval(offsets[i] + shift, b, resolution[i])
            })
            .collect();
        rectangles.push(axes);
    }
    let axis_masks = (0..n)
        .map(|i| {
            let mut m = vec![0u64; resolution[i] as usize];
            for (j, rect) in rectangles.iter().enumerate() {
                for &(s, e) in &rect[i] {
                    for c in s..e {
                        m[c as usize] |= 1 << j;
                    }
                }
            }
            m
        })
        .collect();
    Ok(GridModel {
        eps: cfg.eps.clone(),
        d: cfg.d,
        resolution,
        rectangles,
        axis_masks,
    })
}

impl GridModel {
    pub fn dims(&self) -> usize {
        self.resolution.len()
    }

    pub fn cell_count(&self) -> u64 {
        self.resolution.iter().product()
    }

    pub fn cell_measure(&self) -> Rational {
        Rational::new(1, self.cell_count())
    }

    /// Calls `visit(index, mask)` for every cell in row-major order (last
    /// axis fastest).
    pub fn for_each_cell(&self, mut visit: impl FnMut(usize, u64)) {
        let full = if self.d >= 63 { u64::MAX } else { (1u64 << (self.d + 1)) - 1 };
        let mut idx = 0usize;
        self.walk(0, full, &mut idx, &mut visit);
    }

    fn walk(&self, axis: usize, mask: u64, idx: &mut usize, visit: &mut impl FnMut(usize, u64)) {
        let masks = &self.axis_masks[axis];
        if axis + 1 == self.dims() {
            for m in masks {
                visit(*idx, mask & m);
                *idx += 1;
            }
        } else {
            for m in masks {
                self.walk(axis + 1, mask & m, idx, visit);
            }
        }
    }

    /// Membership masks of all cells.
    pub fn cell_masks(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.cell_count() as usize];
        self.for_each_cell(|i, m| out[i] = m);
        out
    }

    /// Cell counts per membership mask.
    pub fn mask_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; 1 << (self.d + 1)];
        self.for_each_cell(|_, m| counts[m as usize] += 1);
        counts
    }

    /// Flat little-endian dump: `u32` axis count, `u64` per-axis cell
    /// counts, then one `u32` membership mask per cell in row-major order.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.dims() as u32).to_le_bytes())?;
        for n in &self.resolution {
            w.write_all(&n.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(1 << 16);
        let mut err = Ok(());
        self.for_each_cell(|_, m| {
            buf.extend_from_slice(&(m as u32).to_le_bytes());
            if buf.len() >= 1 << 16 && err.is_ok() {
                err = w.write_all(&buf);
                buf.clear();
            }
        });
        err?;
        w.write_all(&buf)
    }
}

/// Labels of the sets measured by [`oracle_measures`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SetExpr {
    Q0,
    Q(u32),
    QAndQ0(u32),
    Pair(u32, u32),
    /// `(Q_j \ Q0) ∩ (Q_k \ Q0)`.
    OuterPair(u32, u32),
    Union,
    /// Atom of the generated algebra, by membership mask (bit 0 for `Q0`).
    Atom(u64),
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Q0 => write!(f, "Q0"),
            SetExpr::Q(k) => write!(f, "Q{k}"),
            SetExpr::QAndQ0(k) => write!(f, "Q{k}&Q0"),
            SetExpr::Pair(j, k) => write!(f, "Q{j}&Q{k}"),
            SetExpr::OuterPair(j, k) => write!(f, "(Q{j}\\Q0)&(Q{k}\\Q0)"),
            SetExpr::Union => write!(f, "union"),
            SetExpr::Atom(m) => write!(f, "atom[{m:#b}]"),
        }
    }
}

/// Exact measures of the basic sets and of every nonempty atom.
pub fn oracle_measures(gm: &GridModel) -> Vec<(SetExpr, Rational)> {
    let counts = gm.mask_counts();
    let cell = gm.cell_measure();
    let sum = |pred: &dyn Fn(u64) -> bool| -> Rational {
        let n: u64 = counts
            .iter()
            .enumerate()
            .filter(|(m, _)| pred(*m as u64))
            .map(|(_, c)| *c)
            .sum();
        cell.scale(n)
    };
    let bit = |k: u32| 1u64 << k;
    let mut out = vec![(SetExpr::Q0, sum(&|m| m & 1 != 0))];
    for k in 1..=gm.d {
        out.push((SetExpr::Q(k), sum(&|m| m & bit(k) != 0)));
        out.push((SetExpr::QAndQ0(k), sum(&|m| m & bit(k) != 0 && m & 1 != 0)));
    }
    for j in 1..=gm.d {
        for k in j + 1..=gm.d {
            let both = bit(j) | bit(k);
            out.push((SetExpr::Pair(j, k), sum(&|m| m & both == both)));
            out.push((SetExpr::OuterPair(j, k), sum(&|m| m & both == both && m & 1 == 0)));
        }
    }
    out.push((SetExpr::Union, sum(&|m| m & !1 != 0)));
    for (m, c) in counts.iter().enumerate() {
        if *c > 0 {
            out.push((SetExpr::Atom(m as u64), cell.scale(*c)));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleMaximal {
    /// `|{M f > λ}|`.
    pub superlevel: Rational,
    /// `⟨f⟩_{Q_k}` for `k = 1..=d`.
    pub averages: Vec<Rational>,
}

/// Maximal function over `Q_1..Q_d` of a cell-valued `f` (one value per
/// cell in row-major order), by direct cell sums.
pub fn oracle_maximal(gm: &GridModel, f: &[u64], lambda: &Rational) -> Result<OracleMaximal> {
    if f.len() as u64 != gm.cell_count() {
        return Err(Error::SpaceMismatch);
    }
    let d = gm.d as usize;
    let mut sums = vec![0u128; d + 1];
    let mut sizes = vec![0u64; d + 1];
    let mut mask_counts = vec![0u64; 1 << (d + 1)];
    gm.for_each_cell(|i, m| {
        mask_counts[m as usize] += 1;
        for k in 1..=d {
            if m & (1 << k) != 0 {
                sums[k] += f[i] as u128;
                sizes[k] += 1;
            }
        }
    });
    let averages: Vec<Rational> = (1..=d)
        .map(|k| {
            let s = Rational::from_big_uint(&BigUint::from(sums[k]));
            &s / &Rational::from_integer(sizes[k])
        })
        .collect();
    let mut above = 0u64;
    for (m, c) in mask_counts.iter().enumerate() {
        let mf = (1..=d)
            .filter(|k| m & (1 << k) != 0)
            .map(|k| &averages[k - 1])
            .max_by(|a, b| a.partial_cmp(b).expect("rationals are ordered"));
        if mf.is_some_and(|v| v > lambda) {
            above += c;
        }
    }
    Ok(OracleMaximal {
        superlevel: gm.cell_measure().scale(above),
        averages,
    })
}

/// Indicator of `Q_j` as a cell function.
pub fn cell_indicator(gm: &GridModel, j: u32) -> Vec<u64> {
    let mut f = vec![0u64; gm.cell_count() as usize];
    gm.for_each_cell(|i, m| f[i] = (m >> j) & 1);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_config, make_config_at};
    use crate::measure::shadow_ratio;

    fn measure_of(list: &[(SetExpr, Rational)], e: SetExpr) -> Rational {
        list.iter().find(|(x, _)| *x == e).unwrap().1.clone()
    }

    #[test]
    fn grid_examples() {
        let gm = build_grid(&make_config(Rational::new(1, 2), 2).unwrap()).unwrap();
        assert_eq!(gm.resolution, vec![4, 4]);
        let ms = oracle_measures(&gm);
        assert_eq!(measure_of(&ms, SetExpr::Q0), Rational::new(4, 16));

        let gm = build_grid(&make_config(Rational::new(1, 4), 3).unwrap()).unwrap();
        assert_eq!(gm.resolution, vec![16, 16, 8]);

        let gm = build_grid(&make_config(Rational::new(1, 3), 1).unwrap()).unwrap();
        assert_eq!(gm.resolution, vec![6]);
        assert_eq!(gm.rectangles[1][0], vec![(2, 5)]);
    }

    #[test]
    fn configuration_properties() {
        for eps in [Rational::new(1, 2), Rational::new(1, 4), Rational::new(1, 3)] {
            let gm = build_grid(&make_config(eps.clone(), 3).unwrap()).unwrap();
            let ms = oracle_measures(&gm);
            let q0 = measure_of(&ms, SetExpr::Q0);
            for k in 1..=3 {
                assert_eq!(measure_of(&ms, SetExpr::QAndQ0(k)), &eps * &q0);
                assert_eq!(measure_of(&ms, SetExpr::Q(k)), q0);
            }
            for j in 1..=3 {
                for k in j + 1..=3 {
                    assert!(measure_of(&ms, SetExpr::OuterPair(j, k)).is_zero());
                }
            }
            let pair = measure_of(&ms, SetExpr::Atom(0b0111)) + measure_of(&ms, SetExpr::Atom(0b1111));
            assert_eq!(pair, &(&eps * &eps) * &q0);
            let sh = measure_of(&ms, SetExpr::Union).to_f64() / q0.to_f64();
            assert!((sh - shadow_ratio(&eps, 3)).abs() < 1e-12);
        }
    }

    #[test]
    fn maximal_examples() {
        let eps = Rational::new(1, 4);
        let gm = build_grid(&make_config(eps.clone(), 3).unwrap()).unwrap();
        let ms = oracle_measures(&gm);
        let f0 = cell_indicator(&gm, 0);
        let r = oracle_maximal(&gm, &f0, &Rational::new(1, 8)).unwrap();
        assert_eq!(r.superlevel, measure_of(&ms, SetExpr::Union));
        assert!(r.averages.iter().all(|a| *a == eps));
        let f1 = cell_indicator(&gm, 1);
        let r = oracle_maximal(&gm, &f1, &Rational::new(1, 2)).unwrap();
        assert_eq!(r.superlevel, measure_of(&ms, SetExpr::Q(1)));
    }

    #[test]
    fn wraparound_and_alignment() {
        let mut cfg = make_config(Rational::new(1, 2), 2).unwrap();
        cfg.translation = vec![Rational::new(3, 4), Rational::new(1, 2)];
        let gm = build_grid(&cfg).unwrap();
        assert_eq!(gm.rectangles[1][0], vec![(0, 2)]);
        assert_eq!(gm.rectangles[0][0], vec![(3, 4), (0, 1)]);
        cfg.translation = vec![Rational::new(1, 8), Rational::zero()];
        assert!(matches!(build_grid(&cfg), Err(Error::NonAlignable(_))));
    }

    #[test]
    fn overflow_cap() {
        let cfg = make_config_at(Rational::new(1, 8), 4, 16).unwrap();
        assert!(matches!(build_grid(&cfg), Err(Error::ResolutionOverflow { .. })));
    }

    #[test]
    fn dump_layout() {
        let gm = build_grid(&make_config(Rational::new(1, 2), 2).unwrap()).unwrap();
        let mut buf = Vec::new();
        gm.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 2 * 8 + 16 * 4);
        assert_eq!(&buf[..4], &2u32.to_le_bytes());
    }
}
