//! Graph environments and action profiles shared by all other modules.
//!
//! Networks are undirected, unweighted, and capped at 16 positions so the
//! exact solvers can enumerate every action profile and edge state.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Exact enumeration guard: solvers walk 2^n profiles and 2^|E| edge states.
pub const MAX_POSITIONS: usize = 16;

/// Undirected unweighted interaction structure over agent positions.
///
/// Adjacency is stored as one neighbor bitmask per position; the diagonal is
/// always empty and the relation is kept symmetric by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    n: usize,
    adj: Vec<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvironmentKind {
    /// Complete graph: everyone interacts with everyone.
    Homogeneous,
    /// Star graph with the hub at position 0.
    Superspreader,
}

impl EnvironmentKind {
    pub fn label(&self) -> &'static str {
        match self {
            EnvironmentKind::Homogeneous => "complete",
            EnvironmentKind::Superspreader => "star",
        }
    }
}

/// Hub position in superspreader networks, by convention.
pub const HUB: usize = 0;

impl Network {
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_POSITIONS {
            return Err(Error::BadPositionCount(n));
        }
        Ok(Network { n, adj: vec![0; n] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        self.check_position(i)?;
        self.check_position(j)?;
        if i == j {
            return Err(Error::Other(format!("self-link at position {i}")));
        }
        self.adj[i] |= 1 << j;
        self.adj[j] |= 1 << i;
        Ok(())
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.adj[i] & (1 << j) != 0
    }

    pub fn check_position(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::PositionOutOfRange {
                position: i,
                n: self.n,
            });
        }
        Ok(())
    }

    /// Neighbor set of `i` as a bitmask.
    pub fn neighbor_mask(&self, i: usize) -> Result<u16> {
        self.check_position(i)?;
        Ok(self.adj[i])
    }

    /// Edges as (i, j) pairs with i < j, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|m| m.count_ones() as usize).sum::<usize>() / 2
    }

    /// Serializes as the edge-list text block: `n=<int>` then one `i j` pair
    /// per line, 0-indexed, i < j.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n={}\n", self.n);
        for (i, j) in self.edges() {
            s.push_str(&format!("{} {}\n", i, j));
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Other("empty edge list".into()))?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .ok_or_else(|| Error::Other(format!("bad edge-list header {header:?}")))?
            .parse()
            .map_err(|_| Error::Other(format!("bad edge-list header {header:?}")))?;
        let mut net = Network::empty(n)?;
        for line in lines {
            let mut it = line.split_whitespace();
            let (i, j) = match (it.next(), it.next()) {
                (Some(a), Some(b)) => (
                    a.parse::<usize>()
                        .map_err(|_| Error::Other(format!("bad edge line {line:?}")))?,
                    b.parse::<usize>()
                        .map_err(|_| Error::Other(format!("bad edge line {line:?}")))?,
                ),
                _ => return Err(Error::Other(format!("bad edge line {line:?}"))),
            };
            net.add_edge(i, j)?;
        }
        Ok(net)
    }

    /// Relabels positions: position `i` of the result is position `perm[i]`
    /// of the original.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Other("permutation length mismatch".into()));
        }
        let mut net = Network::empty(self.n)?;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(perm[i], perm[j]) {
                    net.add_edge(i, j)?;
                }
            }
        }
        Ok(net)
    }
}

/// Per-position binary distancing decision; bit i set means position i
/// practices social distancing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionProfile {
    n: usize,
    bits: u32,
}

impl ActionProfile {
    pub fn from_bits(n: usize, bits: u32) -> Result<Self> {
        if n == 0 || n > MAX_POSITIONS {
            return Err(Error::BadPositionCount(n));
        }
        if bits >= 1u32 << n {
            return Err(Error::Other(format!(
                "profile bits {bits:#b} exceed {n} positions"
            )));
        }
        Ok(ActionProfile { n, bits })
    }

    pub fn uniform(n: usize, distancing: bool) -> Result<Self> {
        let bits = if distancing { (1u32 << n) - 1 } else { 0 };
        Self::from_bits(n, bits)
    }

    pub fn from_actions(actions: &[bool]) -> Result<Self> {
        let mut bits = 0u32;
        for (i, &a) in actions.iter().enumerate() {
            if a {
                bits |= 1 << i;
            }
        }
        Self::from_bits(actions.len(), bits)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn distances(&self, i: usize) -> bool {
        self.bits & (1 << i) != 0
    }

    pub fn with(&self, i: usize, distancing: bool) -> Self {
        let bits = if distancing {
            self.bits | (1 << i)
        } else {
            self.bits & !(1 << i)
        };
        ActionProfile { n: self.n, bits }
    }

    /// Number of distancing positions |S|.
    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn actions(&self) -> Vec<bool> {
        (0..self.n).map(|i| self.distances(i)).collect()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.distances(i))
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Other("permutation length mismatch".into()));
        }
        let mut bits = 0u32;
        for (i, &p) in perm.iter().enumerate() {
            if self.distances(p) {
                bits |= 1 << i;
            }
        }
        Self::from_bits(self.n, bits)
    }
}

impl std::fmt::Display for ActionProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.n {
            write!(f, "{}", if self.distances(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Builds the complete graph K_n or the star S_n with hub at position 0.
pub fn make_environment(kind: EnvironmentKind, n: usize) -> Result<Network> {
    let mut net = Network::empty(n)?;
    match kind {
        EnvironmentKind::Homogeneous => {
            for i in 0..n {
                for j in (i + 1)..n {
                    net.add_edge(i, j)?;
                }
            }
        }
        EnvironmentKind::Superspreader => {
            if n < 2 {
                return Err(Error::DegenerateStar(n));
            }
            for j in 1..n {
                net.add_edge(HUB, j)?;
            }
        }
    }
    Ok(net)
}

/// Subgraph restricted to non-distancing positions. Distancing positions are
/// retained as isolated vertices so indices stay stable.
pub fn induced_contact_graph(net: &Network, profile: &ActionProfile) -> Result<Network> {
    if profile.n() != net.n() {
        return Err(Error::ProfileLengthMismatch {
            profile_len: profile.n(),
            n: net.n(),
        });
    }
    let mut out = Network::empty(net.n())?;
    for (i, j) in net.edges() {
        if !profile.distances(i) && !profile.distances(j) {
            out.add_edge(i, j)?;
        }
    }
    Ok(out)
}

/// All j adjacent to i.
pub fn neighbors(net: &Network, i: usize) -> Result<Vec<usize>> {
    let mask = net.neighbor_mask(i)?;
    Ok((0..net.n()).filter(|&j| mask & (1 << j) != 0).collect())
}
