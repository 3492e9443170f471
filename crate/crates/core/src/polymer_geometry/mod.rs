//! Blocks and polymers on the periodic lattice: centered pavings by j-blocks,
//! nearest-neighbor connectivity, small sets, closures and neighborhoods,
//! the closure sums k_s/k_l, the reblocking inequality, the extraction
//! identities in exact arithmetic, and the field regulators.

mod enumerate;
mod extraction;
mod regulator;

pub use enumerate::{closure_counts, connected_polymers, count_small, reblock_scan, shape_report, write_shape_csv, ClosureCounts, ReblockScan, ShapeRow};
pub use extraction::{j_extraction_check, random_assignment, JReport};
pub use regulator::{kappa_l, FieldOnTorus, RegulatorConsts, RegulatorContext};

use std::collections::VecDeque;

use thiserror::Error;

use crate::lattice_covariance::TorusLattice;

#[derive(Debug, Error)]
pub enum PolymerError {
    #[error("scale {j} outside 0..={r}")]
    Scale { j: usize, r: usize },
    #[error("polymer is at scale {got}, paving at scale {want}")]
    ScaleMismatch { got: usize, want: usize },
    #[error("block grid of side {side} is too small (need {need}); wrap-around changes local counts")]
    TooSmall { side: usize, need: usize },
    #[error("polymer is not connected")]
    NotConnected,
    #[error("enumeration exceeds the budget: more than {budget} sets")]
    Budget { budget: u64 },
    #[error("extraction identity violated: {0}")]
    Identity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type PolymerResult<T> = Result<T, PolymerError>;

/// Largest number of blocks in a small polymer.
pub const SMALL_MAX: usize = 4;

/// The j-blocks of a torus: squares of side L^j, one centered at the origin.
/// Block (i₀, i₁) is centered at (i₀ L^j, i₁ L^j); its index is i₀ n + i₁.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPaving {
    lattice: TorusLattice,
    j: usize,
    /// blocks per side, L^{R−j}
    n: usize,
    /// sites per block side, L^j
    b: usize,
}

impl BlockPaving {
    pub fn new(lattice: &TorusLattice, j: usize) -> PolymerResult<BlockPaving> {
        let r = lattice.r() as usize;
        if j > r {
            return Err(PolymerError::Scale { j, r });
        }
        let l = lattice.l() as usize;
        Ok(BlockPaving { lattice: *lattice, j, n: l.pow((r - j) as u32), b: l.pow(j as u32) })
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }
    pub fn j(&self) -> usize {
        self.j
    }
    /// Blocks per side.
    pub fn grid_side(&self) -> usize {
        self.n
    }
    /// Sites per block side.
    pub fn block_side(&self) -> usize {
        self.b
    }
    pub fn block_count(&self) -> usize {
        self.n * self.n
    }
    fn side(&self) -> usize {
        self.lattice.side() as usize
    }

    /// The paving one scale up.
    pub fn coarser(&self) -> PolymerResult<BlockPaving> {
        BlockPaving::new(&self.lattice, self.j + 1)
    }

    pub fn block_of(&self, x: [i64; 2]) -> usize {
        let h = (self.b as i64 - 1) / 2;
        let c = |v: i64| ((v + h).div_euclid(self.b as i64)).rem_euclid(self.n as i64) as usize;
        c(x[0]) * self.n + c(x[1])
    }

    pub fn coords(&self, block: usize) -> [usize; 2] {
        [block / self.n, block % self.n]
    }

    pub fn index(&self, c: [i64; 2]) -> usize {
        let n = self.n as i64;
        (c[0].rem_euclid(n) * n + c[1].rem_euclid(n)) as usize
    }

    /// Sites of a block as torus coordinates in [0, side).
    pub fn sites(&self, block: usize) -> impl Iterator<Item = [usize; 2]> + '_ {
        let [i0, i1] = self.coords(block);
        let side = self.side() as i64;
        let h = (self.b as i64 - 1) / 2;
        let (c0, c1) = ((i0 * self.b) as i64, (i1 * self.b) as i64);
        (0..self.b * self.b).map(move |k| {
            let (d0, d1) = ((k / self.b) as i64 - h, (k % self.b) as i64 - h);
            [(c0 + d0).rem_euclid(side) as usize, (c1 + d1).rem_euclid(side) as usize]
        })
    }

    /// Distinct nearest-neighbor blocks, excluding the block itself.
    pub fn neighbors(&self, block: usize) -> Vec<usize> {
        let [i0, i1] = self.coords(block);
        let (i0, i1) = (i0 as i64, i1 as i64);
        let mut out: Vec<usize> = DIRS.iter().map(|d| self.index([i0 + d[0], i1 + d[1]])).filter(|&k| k != block).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Index of the (j+1)-block containing a j-block.
    pub fn parent(&self, block: usize) -> usize {
        let l = self.lattice.l() as usize;
        let m = self.n / l;
        let half = (l - 1) / 2;
        let [i0, i1] = self.coords(block);
        let up = |i: usize| ((i + half) / l) % m;
        up(i0) * m + up(i1)
    }

    pub fn polymer(&self, blocks: impl IntoIterator<Item = usize>) -> Polymer {
        Polymer::new(self.j, blocks)
    }

    fn check(&self, x: &Polymer) -> PolymerResult<()> {
        if x.j != self.j {
            return Err(PolymerError::ScaleMismatch { got: x.j, want: self.j });
        }
        Ok(())
    }

    /// Maximal connected parts, in order of their smallest block.
    pub fn components(&self, x: &Polymer) -> Vec<Polymer> {
        let mut seen = vec![false; x.blocks.len()];
        let mut out = Vec::new();
        for start in 0..x.blocks.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut part = vec![x.blocks[start]];
            let mut queue = VecDeque::from([x.blocks[start]]);
            while let Some(b) = queue.pop_front() {
                for nb in self.neighbors(b) {
                    if let Ok(k) = x.blocks.binary_search(&nb) {
                        if !seen[k] {
                            seen[k] = true;
                            part.push(nb);
                            queue.push_back(nb);
                        }
                    }
                }
            }
            out.push(Polymer::new(self.j, part));
        }
        out
    }

    pub fn is_connected(&self, x: &Polymer) -> bool {
        !x.is_empty() && self.components(x).len() == 1
    }

    /// True if some block of the connected polymer is reached along two
    /// paths whose unrolled displacements differ, i.e. it winds around the torus.
    pub fn wraps(&self, x: &Polymer) -> bool {
        wraps_raw(self, &x.blocks)
    }

    /// Connected, at most four blocks, and not winding around the torus.
    pub fn is_small(&self, x: &Polymer) -> bool {
        x.len() <= SMALL_MAX && self.is_connected(x) && !self.wraps(x)
    }

    /// X̄: the union of the (j+1)-blocks meeting X.
    pub fn closure(&self, x: &Polymer) -> PolymerResult<Polymer> {
        self.check(x)?;
        let r = self.lattice.r() as usize;
        if self.j >= r {
            return Err(PolymerError::Scale { j: self.j + 1, r });
        }
        Ok(Polymer::new(self.j + 1, x.blocks.iter().map(|&b| self.parent(b))))
    }

    /// X*: the union of the small polymers meeting X.
    pub fn neighborhood(&self, x: &Polymer) -> PolymerResult<Polymer> {
        self.check(x)?;
        let mut all = Vec::new();
        for &b in &x.blocks {
            enumerate::for_each_connected(self, b, SMALL_MAX, &|_| true, false, &mut |set| {
                if !wraps_raw(self, set) {
                    all.extend_from_slice(set);
                }
                true
            });
        }
        Ok(Polymer::new(self.j, all))
    }

    /// ∂X: sites of X with a nearest neighbor outside X.
    pub fn boundary_sites(&self, x: &Polymer) -> Vec<[usize; 2]> {
        let side = self.side() as i64;
        let mut out = Vec::new();
        for &b in &x.blocks {
            for s in self.sites(b) {
                let outside = DIRS.iter().any(|d| {
                    let y = [(s[0] as i64 + d[0]).rem_euclid(side), (s[1] as i64 + d[1]).rem_euclid(side)];
                    !x.contains(self.block_of(y))
                });
                if outside {
                    out.push(s);
                }
            }
        }
        out
    }
}

pub(crate) const DIRS: [[i64; 2]; 4] = [[1, 0], [0, 1], [-1, 0], [0, -1]];

pub(crate) fn wraps_raw(p: &BlockPaving, blocks: &[usize]) -> bool {
    if blocks.is_empty() {
        return false;
    }
    let n = p.n as i64;
    let mut lift: Vec<Option<[i64; 2]>> = vec![None; blocks.len()];
    let pos = |b: usize| blocks.iter().position(|&c| c == b);
    lift[0] = Some({
        let c = p.coords(blocks[0]);
        [c[0] as i64, c[1] as i64]
    });
    let mut queue = VecDeque::from([0usize]);
    while let Some(k) = queue.pop_front() {
        let here = lift[k].expect("visited");
        for d in DIRS {
            let there = [here[0] + d[0], here[1] + d[1]];
            let nb = (there[0].rem_euclid(n) * n + there[1].rem_euclid(n)) as usize;
            if let Some(m) = pos(nb) {
                match lift[m] {
                    None => {
                        lift[m] = Some(there);
                        queue.push_back(m);
                    }
                    Some(l) if l != there => return true,
                    Some(_) => {}
                }
            }
        }
    }
    false
}

/// A union of j-blocks, stored as sorted block indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Polymer {
    j: usize,
    blocks: Vec<usize>,
}

impl Polymer {
    pub fn new(j: usize, blocks: impl IntoIterator<Item = usize>) -> Polymer {
        let mut blocks: Vec<usize> = blocks.into_iter().collect();
        blocks.sort_unstable();
        blocks.dedup();
        Polymer { j, blocks }
    }
    pub fn j(&self) -> usize {
        self.j
    }
    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }
    /// |X|_j
    pub fn len(&self) -> usize {
        self.blocks.len()
    }
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
    pub fn contains(&self, block: usize) -> bool {
        self.blocks.binary_search(&block).is_ok()
    }
    pub fn is_subset(&self, other: &Polymer) -> bool {
        self.blocks.iter().all(|&b| other.contains(b))
    }
    pub fn union(&self, other: &Polymer) -> Polymer {
        Polymer::new(self.j, self.blocks.iter().chain(&other.blocks).copied())
    }
}

/// (1 + 2η)|X̄|_{j+1} ≤ |X|_j + 8(1 + 2η)|C_j(X)|.
pub fn reblock_inequality(paving: &BlockPaving, x: &Polymer, eta: f64) -> PolymerResult<bool> {
    let (size, closure, comps) = reblock_counts(paving, x)?;
    let k = 1.0 + 2.0 * eta;
    Ok(k * closure as f64 <= size as f64 + 8.0 * k * comps as f64)
}

/// Largest η for which the reblocking inequality holds on X (∞ if every η does,
/// negative if none does).
pub fn reblock_max_eta(paving: &BlockPaving, x: &Polymer) -> PolymerResult<f64> {
    let (size, closure, comps) = reblock_counts(paving, x)?;
    Ok(max_eta_counts(size, closure, comps))
}

pub(crate) fn max_eta_counts(size: usize, closure: usize, comps: usize) -> f64 {
    if closure <= 8 * comps {
        f64::INFINITY
    } else {
        (size as f64 / (closure - 8 * comps) as f64 - 1.0) / 2.0
    }
}

fn reblock_counts(paving: &BlockPaving, x: &Polymer) -> PolymerResult<(usize, usize, usize)> {
    let closure = paving.closure(x)?.len();
    Ok((x.len(), closure, paving.components(x).len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pav(l: u32, r: u32, j: usize) -> BlockPaving {
        BlockPaving::new(&TorusLattice::with_l(l, r, 0.0).unwrap(), j).unwrap()
    }

    #[test]
    fn pavings_partition_the_torus() {
        let p = pav(3, 2, 1);
        assert_eq!((p.block_count(), p.block_side()), (9, 3));
        assert_eq!(pav(3, 2, 0).block_count(), 81);
        assert_eq!(pav(3, 2, 2).block_count(), 1);
        for j in 0..=3 {
            let p = pav(3, 3, j);
            let mut hits = vec![0u32; p.block_count()];
            let mut owner = vec![usize::MAX; 27 * 27];
            for b in 0..p.block_count() {
                for s in p.sites(b) {
                    assert_eq!(p.block_of([s[0] as i64, s[1] as i64]), b);
                    assert_eq!(owner[s[0] * 27 + s[1]], usize::MAX);
                    owner[s[0] * 27 + s[1]] = b;
                    hits[b] += 1;
                }
            }
            assert!(owner.iter().all(|&o| o != usize::MAX));
            assert!(hits.iter().all(|&h| h as usize == p.block_side().pow(2)));
        }
        // the central block is |x| ≤ L^j/2
        let p = pav(3, 3, 2);
        for x0 in -6i64..=6 {
            for x1 in -6i64..=6 {
                assert_eq!(p.block_of([x0, x1]) == 0, x0.abs() <= 4 && x1.abs() <= 4);
            }
        }
        assert!(BlockPaving::new(&TorusLattice::with_l(3, 2, 0.0).unwrap(), 3).is_err());
    }

    #[test]
    fn blocks_nest() {
        let fine = pav(3, 3, 1);
        let coarse = fine.coarser().unwrap();
        for b in 0..fine.block_count() {
            let parent = fine.parent(b);
            for s in fine.sites(b) {
                assert_eq!(coarse.block_of([s[0] as i64, s[1] as i64]), parent);
            }
        }
    }

    #[test]
    fn connectivity_and_smallness() {
        let p = pav(3, 3, 1); // 9×9 blocks
        let at = |c: [i64; 2]| p.index(c);
        let single = p.polymer([at([4, 4])]);
        assert_eq!(p.components(&single), vec![single.clone()]);
        assert!(p.is_small(&single));
        let star = p.neighborhood(&single).unwrap();
        assert!(single.is_subset(&star) && star.len() > 1);
        // ℓ¹ ball of radius 3
        assert_eq!(star.len(), 25);
        let apart = p.polymer([at([0, 0]), at([0, 2])]);
        assert_eq!(p.components(&apart).len(), 2);
        let diag = p.polymer([at([0, 0]), at([1, 1])]);
        assert_eq!(p.components(&diag).len(), 2);
        let line5 = p.polymer((0..5).map(|k| at([2, k])));
        assert!(p.is_connected(&line5) && !p.is_small(&line5));
        // periodic adjacency
        let across = p.polymer([at([0, 0]), at([0, 8])]);
        assert!(p.is_connected(&across) && p.is_small(&across));
        let ring = p.polymer((0..9).map(|k| at([3, k])));
        assert!(p.wraps(&ring) && !p.wraps(&line5));
    }

    #[test]
    fn closures() {
        let fine = pav(3, 3, 1);
        let one = fine.polymer([fine.index([4, 4])]);
        assert_eq!(fine.closure(&one).unwrap().len(), 1);
        // blocks 4 and 5 straddle the boundary between coarse blocks 1 and 2
        let two = fine.polymer([fine.index([4, 4]), fine.index([4, 5])]);
        assert_eq!(fine.closure(&two).unwrap().len(), 2);
        assert!(fine.coarser().unwrap().coarser().unwrap().closure(&Polymer::new(3, [0])).is_err());
    }

    #[test]
    fn reblocking_on_single_blocks() {
        let p = pav(3, 2, 0);
        let x = p.polymer([5]);
        for eta in [0.01, 0.5, 1.0] {
            assert!(reblock_inequality(&p, &x, eta).unwrap());
        }
        assert_eq!(reblock_max_eta(&p, &x).unwrap(), f64::INFINITY);
    }
}
