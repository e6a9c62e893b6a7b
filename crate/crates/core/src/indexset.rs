//! Hierarchy multi-indices: enumeration, truncation, adjacency and the
//! fermionic sign factors.
//!
//! Indices are enumerated graded-lexicographically: by total order `|k|`, and
//! within one order with the first component largest first, so
//! `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)`. A depth truncation is therefore
//! a prefix of any deeper one.
//!
//! Density-operator hierarchies use pair indices `(m, n)` stored as one
//! [`MultiIndex`] of length `2J`; see [`IndexSpace::paired`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::system::Statistics;
use crate::C64;

/// Largest index space we are willing to build.
pub const MAX_INDICES: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u16>);

impl MultiIndex {
    pub fn zero(j: usize) -> Self {
        Self(vec![0; j])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&x| x as usize).sum()
    }

    pub fn get(&self, j: usize) -> u16 {
        self.0[j]
    }

    /// `k . w`
    pub fn dot(&self, w: &[C64]) -> C64 {
        self.0.iter().zip(w).map(|(&k, &w)| w * k as f64).sum()
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }
}

impl From<Vec<u16>> for MultiIndex {
    fn from(v: Vec<u16>) -> Self {
        Self(v)
    }
}

/// Truncation criterion.
#[derive(Debug, Clone, PartialEq)]
pub enum Truncation {
    /// Every index allowed by the statistics (fermionic only).
    Full,
    /// `|k| <= K`.
    Depth(usize),
    /// `|k . w| <= W`.
    Energy { max: f64, w: Vec<C64> },
    /// Intersection of `Depth` and `Energy`. Experimental.
    Combined { depth: usize, max: f64, w: Vec<C64> },
}

impl Truncation {
    fn depth(&self) -> Option<usize> {
        match self {
            Truncation::Depth(k) | Truncation::Combined { depth: k, .. } => Some(*k),
            _ => None,
        }
    }

    fn energy(&self) -> Option<(f64, &[C64])> {
        match self {
            Truncation::Energy { max, w } | Truncation::Combined { max, w, .. } => {
                Some((*max, w.as_slice()))
            }
            _ => None,
        }
    }

    fn accepts(&self, k: &MultiIndex) -> bool {
        if let Some(d) = self.depth() {
            if k.order() > d {
                return false;
            }
        }
        if let Some((max, w)) = self.energy() {
            if k.dot(w).norm() > max * (1.0 + 1e-12) {
                return false;
            }
        }
        true
    }
}

/// Direction of a hierarchy neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// An immutable, enumerated hierarchy index set with adjacency tables.
#[derive(Debug, Clone)]
pub struct IndexSpace {
    pub statistics: Statistics,
    channels: usize,
    /// `Some(J)` for a pair space of `2J` channels.
    half: Option<usize>,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    up: Vec<Option<usize>>,
    down: Vec<Option<usize>>,
}

/// Builds the index space of `j` channels.
pub fn build_index_space(
    j: usize,
    statistics: Statistics,
    truncation: &Truncation,
) -> Result<IndexSpace> {
    IndexSpace::build(j, statistics, truncation, None)
}

impl IndexSpace {
    /// Pair space for density hierarchies: `(m, n)` with `m` in slots `0..J`
    /// and `n` in slots `J..2J`. Depth applies to `|m| + |n|`; an energy
    /// truncation must supply `2J` rates (`w` then `conj(w)`).
    pub fn paired(j: usize, statistics: Statistics, truncation: &Truncation) -> Result<Self> {
        Self::build(2 * j, statistics, truncation, Some(j))
    }

    fn build(
        j: usize,
        statistics: Statistics,
        truncation: &Truncation,
        half: Option<usize>,
    ) -> Result<Self> {
        if let Some((_, w)) = truncation.energy() {
            if w.len() != j {
                return Err(Error::LengthMismatch(w.len(), j));
            }
        }
        let fermionic = statistics == Statistics::Fermionic;
        // per-component upper bounds and the largest order worth enumerating
        let (bounds, max_order) = if fermionic {
            if j > 24 {
                return Err(Error::SpaceTooLarge(1usize.checked_shl(j as u32).unwrap_or(usize::MAX)));
            }
            (vec![1usize; j], truncation.depth().map_or(j, |d| d.min(j)))
        } else {
            if matches!(truncation, Truncation::Full) {
                return Err(Error::BosonicUntruncated);
            }
            let depth = truncation.depth();
            let mut b = vec![depth.unwrap_or(usize::MAX); j];
            if let Some((max, w)) = truncation.energy() {
                // |k.w| >= Re(k.w) = sum k_j gamma_j bounds every component
                for (bj, wj) in b.iter_mut().zip(w) {
                    if wj.re > 0.0 {
                        *bj = (*bj).min((max / wj.re * (1.0 + 1e-12)).floor() as usize);
                    }
                }
            }
            if b.contains(&usize::MAX) {
                return Err(Error::BosonicUntruncated);
            }
            let total = b.iter().fold(0usize, |acc, &x| acc.saturating_add(x));
            let m = depth.map_or(total, |d| d.min(total));
            (b, m)
        };

        let mut indices = Vec::new();
        let mut cur = vec![0u16; j];
        for order in 0..=max_order {
            compositions(&bounds, order, 0, &mut cur, &mut |k| {
                let k = MultiIndex(k.to_vec());
                if truncation.accepts(&k) {
                    indices.push(k);
                }
                indices.len() <= MAX_INDICES
            });
            if indices.len() > MAX_INDICES {
                return Err(Error::SpaceTooLarge(indices.len()));
            }
        }
        if indices.first() != Some(&MultiIndex::zero(j)) {
            return Err(Error::InvalidTruncation(
                "truncation excludes the zero index".into(),
            ));
        }

        let lookup: HashMap<MultiIndex, usize> =
            indices.iter().cloned().enumerate().map(|(p, k)| (k, p)).collect();
        let mut up = vec![None; indices.len() * j];
        let mut down = vec![None; indices.len() * j];
        let mut probe = MultiIndex::zero(j);
        for (p, k) in indices.iter().enumerate() {
            for c in 0..j {
                probe.0.copy_from_slice(&k.0);
                if (k.0[c] as usize) < bounds[c] {
                    probe.0[c] += 1;
                    up[p * j + c] = lookup.get(&probe).copied();
                    probe.0[c] -= 1;
                }
                if k.0[c] > 0 {
                    probe.0[c] -= 1;
                    down[p * j + c] = lookup.get(&probe).copied();
                }
            }
        }
        Ok(Self {
            statistics,
            channels: j,
            half,
            indices,
            lookup,
            up,
            down,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of slots per index (`2J` for a pair space).
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `Some(J)` for a pair space.
    pub fn half(&self) -> Option<usize> {
        self.half
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index(&self, p: usize) -> &MultiIndex {
        &self.indices[p]
    }

    pub fn position(&self, k: &MultiIndex) -> Option<usize> {
        self.lookup.get(k).copied()
    }

    /// Position of `k +- e_j`, or `None` outside the space.
    pub fn neighbor(&self, p: usize, j: usize, dir: Direction) -> Option<usize> {
        match dir {
            Direction::Up => self.up[p * self.channels + j],
            Direction::Down => self.down[p * self.channels + j],
        }
    }

    /// Sign factors of slot `j` (0-based) of index `p`; for a pair space the
    /// sums run over the half containing `j` only.
    pub fn signs(&self, p: usize, j: usize) -> (i8, i8) {
        let k = &self.indices[p].0;
        match self.half {
            Some(h) if j >= h => sign_factors(&k[h..], j - h),
            Some(h) => sign_factors(&k[..h], j),
            None => sign_factors(k, j),
        }
    }
}

/// Calls `f` for every vector with `sum = order`, `cur[i] <= bounds[i]`,
/// first component largest first. `f` returns false to stop early.
fn compositions(
    bounds: &[usize],
    order: usize,
    pos: usize,
    cur: &mut [u16],
    f: &mut impl FnMut(&[u16]) -> bool,
) -> bool {
    if pos == cur.len() {
        return if order == 0 { f(cur) } else { true };
    }
    let rest: usize = bounds[pos + 1..]
        .iter()
        .fold(0usize, |a, &b| a.saturating_add(b));
    let hi = bounds[pos].min(order);
    let lo = order.saturating_sub(rest);
    if lo > hi {
        return true;
    }
    for v in (lo..=hi).rev() {
        cur[pos] = v as u16;
        if !compositions(bounds, order - v, pos + 1, cur, f) {
            cur[pos] = 0;
            return false;
        }
    }
    cur[pos] = 0;
    true
}

/// `(s_total, s_partial)` for channel `j` (0-based):
/// `s_total = (-1)^|k|`, `s_partial = (-1)^(k_{j+1} + ... + k_{J-1})`,
/// i.e. the parity of the components strictly after `j`.
pub fn sign_factors(k: &[u16], j: usize) -> (i8, i8) {
    let total: usize = k.iter().map(|&x| x as usize).sum();
    let after: usize = k[j + 1..].iter().map(|&x| x as usize).sum();
    (parity(total), parity(after))
}

/// `(-1)^(k_0 + ... + k_{j-1})`, the parity of the components before `j`.
pub fn parity_before(k: &[u16], j: usize) -> i8 {
    parity(k[..j].iter().map(|&x| x as usize).sum())
}

fn parity(n: usize) -> i8 {
    if n.is_multiple_of(2) {
        1
    } else {
        -1
    }
}
