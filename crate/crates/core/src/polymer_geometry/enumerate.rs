//! Exhaustive enumeration of connected block sets (Redelmeier's scheme: every
//! connected set containing the root is produced exactly once).

use std::io::Write;

use super::{max_eta_counts, wraps_raw, BlockPaving, Polymer, PolymerError, PolymerResult, SMALL_MAX};

/// Calls `visit` on every connected set of at most `max` blocks that contains
/// `root` and whose other blocks pass `allowed`; with `root_min` only blocks
/// above `root` are admitted, so each set is met once across all roots.
/// `visit` returning false stops the walk.
pub(crate) fn for_each_connected(
    p: &BlockPaving,
    root: usize,
    max: usize,
    allowed: &dyn Fn(usize) -> bool,
    root_min: bool,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    let mut current = Vec::with_capacity(max);
    let mut border = vec![root];
    grow(p, max, allowed, root_min, root, &mut current, vec![root], &mut border, visit)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    p: &BlockPaving,
    max: usize,
    allowed: &dyn Fn(usize) -> bool,
    root_min: bool,
    root: usize,
    current: &mut Vec<usize>,
    mut untried: Vec<usize>,
    border: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    while let Some(v) = untried.pop() {
        current.push(v);
        let mut sorted = current.clone();
        sorted.sort_unstable();
        if !visit(&sorted) {
            return false;
        }
        if current.len() < max {
            let mark = border.len();
            let mut next = untried.clone();
            for nb in p.neighbors(v) {
                if (root_min && nb < root) || !allowed(nb) || border.contains(&nb) {
                    continue;
                }
                border.push(nb);
                next.push(nb);
            }
            let go_on = grow(p, max, allowed, root_min, root, current, next, border, visit);
            border.truncate(mark);
            if !go_on {
                return false;
            }
        }
        current.pop();
    }
    true
}

/// S: the number of small polymers containing `block`.
pub fn count_small(p: &BlockPaving, block: usize) -> PolymerResult<u64> {
    if p.grid_side() < SMALL_MAX + 1 {
        return Err(PolymerError::TooSmall { side: p.grid_side(), need: SMALL_MAX + 1 });
    }
    let mut count = 0u64;
    for_each_connected(p, block, SMALL_MAX, &|_| true, false, &mut |set| {
        if !wraps_raw(p, set) {
            count += 1;
        }
        true
    });
    Ok(count)
}

/// Numbers of connected j-polymers Y with Ȳ = V, by size, split into small and
/// non-small.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosureCounts {
    /// |V|_{j+1}
    pub v_size: usize,
    /// entry k: small Y with |Y|_j = k
    pub small: Vec<u64>,
    /// entry k: non-small Y with |Y|_j = k (empty unless requested)
    pub large: Vec<u64>,
}

impl ClosureCounts {
    /// A^{|V|} Σ_Y (λA)^{−|Y|} over the small and the non-small Y.
    pub fn k_values(&self, a: f64, lambda: f64) -> (f64, f64) {
        let sum = |c: &[u64]| c.iter().enumerate().map(|(k, &n)| n as f64 * (lambda * a).powi(-(k as i32))).sum::<f64>();
        let pre = a.powi(self.v_size as i32);
        (pre * sum(&self.small), pre * sum(&self.large))
    }

    /// The same sums in exact rational arithmetic.
    pub fn k_exact(&self, a: &num_rational::BigRational, lambda: &num_rational::BigRational) -> (num_rational::BigRational, num_rational::BigRational) {
        use num_traits::{One, Zero};
        let inv = (lambda * a).recip();
        let pre = num_traits::pow(a.clone(), self.v_size);
        let sum = |c: &[u64]| {
            let mut acc = num_rational::BigRational::zero();
            let mut w = num_rational::BigRational::one();
            for &n in c {
                acc += &w * num_rational::BigRational::from_integer(n.into());
                w *= &inv;
            }
            acc
        };
        (&pre * sum(&self.small), &pre * sum(&self.large))
    }
}

/// Enumerates the connected j-polymers Y with closure V (a connected
/// (j+1)-polymer). With `with_large` false only sets of at most four blocks are
/// visited. Fails if more than `budget` sets would be visited.
pub fn closure_counts(fine: &BlockPaving, v: &Polymer, with_large: bool, budget: u64) -> PolymerResult<ClosureCounts> {
    let coarse = fine.coarser()?;
    if v.j() != coarse.j() {
        return Err(PolymerError::ScaleMismatch { got: v.j(), want: coarse.j() });
    }
    if !coarse.is_connected(v) {
        return Err(PolymerError::NotConnected);
    }
    let inside: Vec<usize> = (0..fine.block_count()).filter(|&b| v.contains(fine.parent(b))).collect();
    let max = if with_large { inside.len() } else { SMALL_MAX };
    let mut small = vec![0u64; SMALL_MAX + 1];
    let mut large = vec![0u64; if with_large { max + 1 } else { 0 }];
    let mut visited = 0u64;
    let allowed = |b: usize| v.contains(fine.parent(b));
    for &root in &inside {
        let ok = for_each_connected(fine, root, max, &allowed, true, &mut |set| {
            visited += 1;
            if visited > budget {
                return false;
            }
            let parents = Polymer::new(coarse.j(), set.iter().map(|&b| fine.parent(b)));
            if parents.len() == v.len() {
                if set.len() <= SMALL_MAX && !wraps_raw(fine, set) {
                    small[set.len()] += 1;
                } else if with_large {
                    large[set.len()] += 1;
                }
            }
            true
        });
        if !ok {
            return Err(PolymerError::Budget { budget });
        }
    }
    Ok(ClosureCounts { v_size: v.len(), small, large })
}

/// Every connected polymer of at most `max` blocks, once each, sorted.
pub fn connected_polymers(p: &BlockPaving, max: usize) -> Vec<Polymer> {
    let mut out = Vec::new();
    for root in 0..p.block_count() {
        for_each_connected(p, root, max, &|_| true, true, &mut |set| {
            out.push(Polymer::new(p.j(), set.iter().copied()));
            true
        });
    }
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReblockScan {
    pub polymers: u64,
    /// smallest per-polymer maximal η over the family (∞ if never binding)
    pub max_eta: f64,
    /// a polymer attaining it, if binding
    pub binding: Option<Polymer>,
}

/// All connected polymers of at most `max` blocks, each visited once.
pub fn reblock_scan(p: &BlockPaving, max: usize) -> PolymerResult<ReblockScan> {
    p.coarser()?;
    let mut polymers = 0u64;
    let mut best = f64::INFINITY;
    let mut binding = None;
    for root in 0..p.block_count() {
        for_each_connected(p, root, max, &|_| true, true, &mut |set| {
            polymers += 1;
            let closure = Polymer::new(p.j() + 1, set.iter().map(|&b| p.parent(b))).len();
            let eta = max_eta_counts(set.len(), closure, 1);
            if eta < best {
                best = eta;
                binding = Some(Polymer::new(p.j(), set.iter().copied()));
            }
            true
        });
    }
    Ok(ReblockScan { polymers, max_eta: best, binding })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeRow {
    /// block offsets from the lowest block, "d0:d1" joined by ';'
    pub shape: String,
    pub blocks: usize,
    pub small: bool,
    pub closure: usize,
}

/// The connected polymers of at most `max` blocks containing `root`, in
/// lexicographic order of their block lists.
pub fn shape_report(p: &BlockPaving, root: usize, max: usize) -> PolymerResult<Vec<ShapeRow>> {
    let coarse = p.coarser().ok();
    let mut sets = Vec::new();
    for_each_connected(p, root, max, &|_| true, false, &mut |set| {
        sets.push(set.to_vec());
        true
    });
    sets.sort();
    let n = p.grid_side() as i64;
    Ok(sets
        .into_iter()
        .map(|set| {
            let poly = Polymer::new(p.j(), set.iter().copied());
            let r = p.coords(root);
            let offs: Vec<String> = set
                .iter()
                .map(|&b| {
                    let c = p.coords(b);
                    let wrap = |d: i64| if d > n / 2 { d - n } else { d };
                    format!("{}:{}", wrap((c[0] as i64 - r[0] as i64).rem_euclid(n)), wrap((c[1] as i64 - r[1] as i64).rem_euclid(n)))
                })
                .collect();
            ShapeRow {
                shape: offs.join(";"),
                blocks: set.len(),
                small: p.is_small(&poly),
                closure: coarse.as_ref().map_or(0, |_| p.closure(&poly).map_or(0, |c| c.len())),
            }
        })
        .collect())
}

pub fn write_shape_csv<W: Write>(rows: &[ShapeRow], out: W) -> PolymerResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let err = |e: csv::Error| PolymerError::Io(std::io::Error::other(e.to_string()));
    w.write_record(["shape", "blocks", "small", "closure"]).map_err(err)?;
    for r in rows {
        w.write_record(&[r.shape.clone(), r.blocks.to_string(), r.small.to_string(), r.closure.to_string()]).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}
