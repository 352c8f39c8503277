//! Cluster layouts `(q; d_1..d_q)` and convex-combination shifts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative gap used to split sorted eigenvalue guesses.
pub const DEFAULT_REL_GAP: f64 = 0.05;

/// `q` clusters with multiplicities `d_i`; flat index `k` maps to the pair
/// `(i, j)` with `k = offsets[i] + j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLayout")]
pub struct ClusterLayout {
    q: usize,
    d: Vec<usize>,
    offsets: Vec<usize>,
}

#[derive(Deserialize)]
struct RawLayout {
    d: Vec<usize>,
}

impl TryFrom<RawLayout> for ClusterLayout {
    type Error = Error;

    fn try_from(raw: RawLayout) -> Result<Self> {
        ClusterLayout::new(raw.d)
    }
}

impl ClusterLayout {
    pub fn new(d: Vec<usize>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Empty("cluster layout"));
        }
        if d.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "multiplicities must be >= 1, got {d:?}"
            )));
        }
        let mut offsets = Vec::with_capacity(d.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &di in &d {
            acc += di;
            offsets.push(acc);
        }
        Ok(Self {
            q: d.len(),
            d,
            offsets,
        })
    }

    /// `n` clusters of multiplicity one.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::new(vec![1; n])
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.d
    }

    pub fn multiplicity(&self, i: usize) -> usize {
        self.d[i]
    }

    /// Prefix sums, length `q + 1`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// `N = Σ d_i`.
    pub fn total(&self) -> usize {
        self.offsets[self.q]
    }

    pub fn max_multiplicity(&self) -> usize {
        self.d.iter().copied().max().unwrap_or(0)
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        assert!(
            i < self.q && j < self.d[i],
            "pair ({i}, {j}) outside layout"
        );
        self.offsets[i] + j
    }

    pub fn pair_index(&self, k: usize) -> (usize, usize) {
        assert!(k < self.total(), "flat index {k} outside layout");
        // offsets is strictly increasing; find the last offset <= k
        let i = self.offsets.partition_point(|&o| o <= k) - 1;
        (i, k - self.offsets[i])
    }

    pub fn cluster_of(&self, k: usize) -> usize {
        self.pair_index(k).0
    }
}

impl fmt::Display for ClusterLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.d.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for ClusterLayout {
    type Err = Error;

    /// Parses a comma-separated multiplicity list such as `1,2,1`.
    fn from_str(s: &str) -> Result<Self> {
        let d = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad multiplicity '{t}' in layout")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d)
    }
}

/// Groups ascending values, splitting where
/// `λ_{k+1} − λ_k > rel_gap · max(1, |λ_{k+1}|)`.
pub fn cluster_by_gap(values: &[f64], rel_gap: f64) -> Result<ClusterLayout> {
    if values.is_empty() {
        return Err(Error::Empty("eigenvalue guesses"));
    }
    if !(rel_gap > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "rel_gap must be > 0, got {rel_gap}"
        )));
    }
    let mut d = vec![1];
    for w in values.windows(2) {
        if w[1] - w[0] > rel_gap * w[1].abs().max(1.0) {
            d.push(1);
        } else {
            *d.last_mut().unwrap() += 1;
        }
    }
    ClusterLayout::new(d)
}

/// Arithmetic mean of a cluster's values, clamped to `[min, max]`.
pub fn convex_shift(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("cluster values"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(mean.clamp(min, max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Combinator {
    #[default]
    Mean,
}

/// One shift per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftState {
    pub shifts: Vec<f64>,
    pub combinator: Combinator,
}

impl ShiftState {
    /// Shifts from flat values ordered by the layout.
    pub fn from_values(layout: &ClusterLayout, values: &[f64]) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a layout of {}",
                values.len(),
                layout.total()
            )));
        }
        let shifts = (0..layout.q())
            .map(|i| convex_shift(&values[layout.range(i)]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shifts,
            combinator: Combinator::Mean,
        })
    }
}
