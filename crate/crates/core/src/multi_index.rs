//! Multi-indices `[alpha, beta]` and downward-closed index sets.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Spatial levels `alpha` (length `D`) followed by stochastic levels `beta`
/// (length `N`). Ordering is lexicographic on the concatenation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    levels: Vec<u32>,
    spatial: usize,
}

impl MultiIndex {
    pub fn new(alpha: &[u32], beta: &[u32]) -> Self {
        let mut levels = Vec::with_capacity(alpha.len() + beta.len());
        levels.extend_from_slice(alpha);
        levels.extend_from_slice(beta);
        Self {
            levels,
            spatial: alpha.len(),
        }
    }

    pub fn from_levels(levels: Vec<u32>, spatial: usize) -> Self {
        assert!(spatial <= levels.len());
        Self { levels, spatial }
    }

    /// The root `[1, ..., 1]`.
    pub fn ones(spatial: usize, stochastic: usize) -> Self {
        Self {
            levels: vec![1; spatial + stochastic],
            spatial,
        }
    }

    pub fn alpha(&self) -> &[u32] {
        &self.levels[..self.spatial]
    }

    pub fn beta(&self) -> &[u32] {
        &self.levels[self.spatial..]
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial
    }

    pub fn stochastic_dim(&self) -> usize {
        self.levels.len() - self.spatial
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// All components are at least one.
    pub fn is_valid(&self) -> bool {
        self.levels.iter().all(|&l| l >= 1)
    }

    pub fn is_root(&self) -> bool {
        self.levels.iter().all(|&l| l == 1)
    }

    /// `|beta|`.
    pub fn beta_sum(&self) -> u32 {
        self.beta().iter().sum()
    }

    /// `self + e_k`.
    pub fn forward(&self, k: usize) -> Self {
        let mut next = self.clone();
        next.levels[k] += 1;
        next
    }

    /// `self - e_k`, or `None` when component `k` is already one.
    pub fn backward(&self, k: usize) -> Option<Self> {
        (self.levels[k] > 1).then(|| {
            let mut prev = self.clone();
            prev.levels[k] -= 1;
            prev
        })
    }

    /// Existing backward neighbors.
    pub fn backward_neighbors(&self) -> impl Iterator<Item = Self> + '_ {
        (0..self.len()).filter_map(move |k| self.backward(k))
    }

    /// `self - j` for a bit mask `j` over all components; `None` when a
    /// component would reach zero.
    pub fn minus_mask(&self, mask: u64) -> Option<Self> {
        let mut out = self.clone();
        for (k, l) in out.levels.iter_mut().enumerate() {
            if mask >> k & 1 == 1 {
                if *l <= 1 {
                    return None;
                }
                *l -= 1;
            }
        }
        Some(out)
    }

    /// `self + j` for a bit mask `j` over all components.
    pub fn plus_mask(&self, mask: u64) -> Self {
        let mut out = self.clone();
        for (k, l) in out.levels.iter_mut().enumerate() {
            *l += (mask >> k & 1) as u32;
        }
        out
    }

    /// Component-wise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.levels.len() == other.levels.len()
            && self.levels.iter().zip(&other.levels).all(|(a, b)| a <= b)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[u32]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "({};{})", join(self.alpha()), join(self.beta()))
    }
}

/// Finite set of multi-indices of fixed dimensions `(D, N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    spatial: usize,
    stochastic: usize,
    members: BTreeSet<MultiIndex>,
}

impl IndexSet {
    pub fn new(spatial: usize, stochastic: usize) -> Self {
        Self {
            spatial,
            stochastic,
            members: BTreeSet::new(),
        }
    }

    /// The set `{[1, ..., 1]}`.
    pub fn root(spatial: usize, stochastic: usize) -> Self {
        let mut set = Self::new(spatial, stochastic);
        set.members.insert(MultiIndex::ones(spatial, stochastic));
        set
    }

    /// Build from members and check downward closedness.
    pub fn from_members(
        spatial: usize,
        stochastic: usize,
        members: impl IntoIterator<Item = MultiIndex>,
    ) -> Result<Self> {
        let mut set = Self::new(spatial, stochastic);
        for m in members {
            set.insert(m)?;
        }
        set.check_downward_closed()?;
        Ok(set)
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial
    }

    pub fn stochastic_dim(&self) -> usize {
        self.stochastic
    }

    pub fn dim(&self) -> usize {
        self.spatial + self.stochastic
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, idx: &MultiIndex) -> bool {
        self.members.contains(idx)
    }

    /// Members in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> + '_ {
        self.members.iter()
    }

    /// Insert without a closedness check. Returns whether it was new.
    pub fn insert(&mut self, idx: MultiIndex) -> Result<bool> {
        if idx.spatial_dim() != self.spatial || idx.stochastic_dim() != self.stochastic {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: idx.len(),
            });
        }
        if !idx.is_valid() {
            return Err(Error::InvalidArgument(format!(
                "multi-index {idx} has a zero component"
            )));
        }
        Ok(self.members.insert(idx))
    }

    pub fn is_downward_closed(&self) -> bool {
        self.check_downward_closed().is_ok()
    }

    pub fn check_downward_closed(&self) -> Result<()> {
        for m in &self.members {
            for b in m.backward_neighbors() {
                if !self.members.contains(&b) {
                    return Err(Error::NotDownwardClosed {
                        index: m.to_string(),
                        missing: b.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Indices outside the set whose backward neighbors all lie inside; adding
    /// any of them keeps the set downward closed.
    pub fn frontier(&self) -> Vec<MultiIndex> {
        let mut out = BTreeSet::new();
        if self.members.is_empty() {
            out.insert(MultiIndex::ones(self.spatial, self.stochastic));
        }
        for m in &self.members {
            for k in 0..self.dim() {
                let f = m.forward(k);
                if !self.members.contains(&f) && f.backward_neighbors().all(|b| self.members.contains(&b)) {
                    out.insert(f);
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.members.is_subset(&other.members)
    }

    /// Largest level reached in every component.
    pub fn max_levels(&self) -> Vec<u32> {
        let mut top = vec![0; self.dim()];
        for m in &self.members {
            for (t, &l) in top.iter_mut().zip(m.levels()) {
                *t = (*t).max(l);
            }
        }
        top
    }

    /// Full box `{idx : 1 <= idx <= corner}`.
    pub fn full_box(corner: &MultiIndex) -> Self {
        let mut set = Self::new(corner.spatial_dim(), corner.stochastic_dim());
        let mut cur = MultiIndex::ones(corner.spatial_dim(), corner.stochastic_dim());
        loop {
            set.members.insert(cur.clone());
            let mut k = 0;
            loop {
                if k == cur.len() {
                    return set;
                }
                if cur.levels[k] < corner.levels[k] {
                    cur.levels[k] += 1;
                    break;
                }
                cur.levels[k] = 1;
                k += 1;
            }
        }
    }
}

impl<'a> IntoIterator for &'a IndexSet {
    type Item = &'a MultiIndex;
    type IntoIter = alloc::collections::btree_set::Iter<'a, MultiIndex>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

/// Smallest downward-closed superset of `candidates`.
pub fn downward_closure(
    spatial: usize,
    stochastic: usize,
    candidates: impl IntoIterator<Item = MultiIndex>,
) -> Result<IndexSet> {
    let mut set = IndexSet::new(spatial, stochastic);
    let mut stack: Vec<MultiIndex> = candidates.into_iter().collect();
    while let Some(idx) = stack.pop() {
        if set.contains(&idx) {
            continue;
        }
        stack.extend(idx.backward_neighbors());
        set.insert(idx)?;
    }
    Ok(set)
}
