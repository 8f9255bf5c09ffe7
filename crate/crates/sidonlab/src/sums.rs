//! Signed-sum search kernels shared by the combinatorial modules.
//!
//! Crate-internal plumbing: depth-first walks over ε-vectors with a
//! running group product, meet-in-the-middle height tables keyed by
//! half products, and bounded-window breadth-first reachability over
//! integer sums with parent links for witness reconstruction.  All
//! walks are deterministic (fixed lexicographic order) so that every
//! search result — witnesses, decompositions, counts — is reproducible
//! bit for bit.

use crate::characters::{Character, Family};
use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::ControlFlow;

/// Sentinel distance for states never reached by a BFS.
pub(crate) const UNREACHED: u32 = u32::MAX;

// ---------------------------------------------------------------------
// Running products
// ---------------------------------------------------------------------

/// Running product ∏ γᵢ^{εᵢ} maintained incrementally during a walk,
/// with O(|support|) push/undo per factor.
#[derive(Debug, Clone)]
pub(crate) enum ProductAcc {
    Int(i128),
    Free(BTreeMap<u32, i64>),
    Bool(BTreeSet<u32>),
}

impl ProductAcc {
    pub(crate) fn identity(family: Family) -> Self {
        match family {
            Family::Z => ProductAcc::Int(0),
            Family::ZoplusN => ProductAcc::Free(BTreeMap::new()),
            Family::Walsh => ProductAcc::Bool(BTreeSet::new()),
        }
    }

    /// Multiply by `ch^sign`.  Overflow is a hard error.
    pub(crate) fn apply(&mut self, ch: &Character, sign: i8) -> Result<()> {
        match (self, ch) {
            (ProductAcc::Int(acc), Character::Z { n }) => {
                let term = n
                    .checked_mul(sign as i128)
                    .ok_or_else(|| Error::domain("signed sum overflow"))?;
                *acc = acc
                    .checked_add(term)
                    .ok_or_else(|| Error::domain("signed sum overflow"))?;
                Ok(())
            }
            (ProductAcc::Free(acc), Character::ZoplusN { coords }) => {
                for (&k, &e) in coords {
                    let term = e
                        .checked_mul(sign as i64)
                        .ok_or_else(|| Error::domain("coordinate sum overflow"))?;
                    let slot = acc.entry(k).or_insert(0);
                    *slot = slot
                        .checked_add(term)
                        .ok_or_else(|| Error::domain("coordinate sum overflow"))?;
                    if *slot == 0 {
                        acc.remove(&k);
                    }
                }
                Ok(())
            }
            (ProductAcc::Bool(acc), Character::Walsh { indices }) => {
                if sign % 2 != 0 {
                    for &k in indices {
                        if !acc.remove(&k) {
                            acc.insert(k);
                        }
                    }
                }
                Ok(())
            }
            _ => Err(Error::Internal(
                "product accumulator applied to a foreign family".into(),
            )),
        }
    }

    /// Undo a previously successful `apply(ch, sign)`.
    pub(crate) fn unapply(&mut self, ch: &Character, sign: i8) {
        self.apply(ch, -sign)
            .expect("undoing a successful product update cannot overflow");
    }

    pub(crate) fn is_identity(&self) -> bool {
        match self {
            ProductAcc::Int(n) => *n == 0,
            ProductAcc::Free(m) => m.is_empty(),
            ProductAcc::Bool(s) => s.is_empty(),
        }
    }

    pub(crate) fn snapshot(&self) -> Character {
        match self {
            ProductAcc::Int(n) => Character::Z { n: *n },
            ProductAcc::Free(m) => Character::ZoplusN { coords: m.clone() },
            ProductAcc::Bool(s) => Character::Walsh { indices: s.clone() },
        }
    }
}

/// The ε alphabet of a family: {0,+1} on order-2 characters (ε=−1 is
/// redundant there), {−1,0,+1} otherwise, in lexicographic order.
pub(crate) fn sign_choices(family: Family) -> &'static [i8] {
    match family {
        Family::Walsh => &[0, 1],
        _ => &[-1, 0, 1],
    }
}

/// Number of ε-vectors over `n` elements of `family`, saturating.
pub(crate) fn leaf_count(family: Family, n: usize) -> u128 {
    let base = sign_choices(family).len() as u128;
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = acc.saturating_mul(base);
    }
    acc
}

/// Gate an enumeration: error unless its leaf count fits the budget.
pub(crate) fn gate_leaves(family: Family, n: usize, budget: u64) -> Result<()> {
    let leaves = leaf_count(family, n);
    if leaves > budget as u128 {
        return Err(Error::capacity(format!(
            "ε-enumeration over {n} elements needs {leaves} leaves, budget is {budget}"
        )));
    }
    Ok(())
}

/// Walk every ε-vector over `base` in lexicographic order (−1 < 0 < +1
/// componentwise, {0,+1} on the Boolean family), carrying the running
/// product.  The callback sees the full ε slice and the product at each
/// leaf and may break off the walk.  The leaf count is gated against
/// `budget` before anything runs.
pub(crate) fn foreach_eps_products(
    base: &[Character],
    family: Family,
    budget: u64,
    f: &mut dyn FnMut(&[i8], &ProductAcc) -> ControlFlow<()>,
) -> Result<()> {
    gate_leaves(family, base.len(), budget)?;
    let mut eps = vec![0i8; base.len()];
    let mut acc = ProductAcc::identity(family);
    let _ = walk_products(base, sign_choices(family), 0, &mut eps, &mut acc, f)?;
    Ok(())
}

fn walk_products(
    base: &[Character],
    choices: &[i8],
    i: usize,
    eps: &mut Vec<i8>,
    acc: &mut ProductAcc,
    f: &mut dyn FnMut(&[i8], &ProductAcc) -> ControlFlow<()>,
) -> Result<ControlFlow<()>> {
    if i == base.len() {
        return Ok(f(eps, acc));
    }
    for &s in choices {
        eps[i] = s;
        if s != 0 {
            acc.apply(&base[i], s)?;
        }
        let flow = walk_products(base, choices, i + 1, eps, acc, f)?;
        if s != 0 {
            acc.unapply(&base[i], s);
        }
        if matches!(flow, ControlFlow::Break(())) {
            eps[i] = 0;
            return Ok(flow);
        }
    }
    eps[i] = 0;
    Ok(ControlFlow::Continue(()))
}

// ---------------------------------------------------------------------
// Meet-in-the-middle tables
// ---------------------------------------------------------------------

/// Achievable-height bitmask per half product: bit h of `map[γ]` is set
/// iff some ε over `half` with Σ|ε| = h has product γ.  The empty word
/// contributes bit 0 at the identity.
pub(crate) fn half_masks(
    half: &[Character],
    family: Family,
    budget: u64,
) -> Result<HashMap<Character, u32>> {
    let mut map: HashMap<Character, u32> = HashMap::new();
    foreach_eps_products(half, family, budget, &mut |eps, acc| {
        let h: u32 = eps.iter().map(|&e| e.unsigned_abs() as u32).sum();
        *map.entry(acc.snapshot()).or_insert(0) |= 1 << h;
        ControlFlow::Continue(())
    })?;
    Ok(map)
}

/// Exact (product, height) → multiplicity table for one half, sorted by
/// key for binary-search lookups.
pub(crate) fn half_counts(
    half: &[Character],
    family: Family,
    budget: u64,
) -> Result<Vec<((Character, u8), u64)>> {
    let mut map: BTreeMap<(Character, u8), u64> = BTreeMap::new();
    foreach_eps_products(half, family, budget, &mut |eps, acc| {
        let h: u8 = eps.iter().map(|&e| e.unsigned_abs()).sum();
        *map.entry((acc.snapshot(), h)).or_insert(0) += 1;
        ControlFlow::Continue(())
    })?;
    Ok(map.into_iter().collect())
}

/// All (height, count) rows of a sorted `half_counts` table whose
/// product equals `key`.
pub(crate) fn counts_for<'a>(
    table: &'a [((Character, u8), u64)],
    key: &'a Character,
) -> impl Iterator<Item = (u8, u64)> + 'a {
    let lo = table.partition_point(|((c, _), _)| c < key);
    table[lo..]
        .iter()
        .take_while(move |((c, _), _)| c == key)
        .map(|((_, h), n)| (*h, *n))
}

// ---------------------------------------------------------------------
// Windowed reachability over integer sums
// ---------------------------------------------------------------------

/// How a BFS state was first reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Origin {
    /// Never reached.
    Unreached,
    /// Present at layer 0 (sum 0 for the first stage, a reachable sum
    /// of the previous stage otherwise).
    Carried,
    /// First reached by stepping ±values[elem] from `prev` (an offset
    /// into the same stage's window).
    Step { prev: u32, elem: u16, sign: i8 },
}

/// Reachable sums after processing the blocks up to some stage, over
/// the window [−half_width, half_width].
pub(crate) struct StageReach {
    pub(crate) half_width: i128,
    pub(crate) dist: Vec<u32>,
    pub(crate) origin: Vec<Origin>,
}

impl StageReach {
    fn offset(&self, sum: i128) -> Option<usize> {
        if sum < -self.half_width || sum > self.half_width {
            return None;
        }
        Some((sum + self.half_width) as usize)
    }

    fn value(&self, offset: usize) -> i128 {
        offset as i128 - self.half_width
    }

    pub(crate) fn reachable(&self, sum: i128) -> bool {
        self.offset(sum)
            .map(|o| self.dist[o] != UNREACHED)
            .unwrap_or(false)
    }
}

/// Exact reachability of ∏ₖ ρₖ over integer blocks, where ρₖ is a word
/// on block k of height ≤ capₖ.  Built stage by stage: stage k's
/// sources are stage k−1's reachable sums, expanded by capₖ layers of
/// ±value steps.  Any word respecting the caps has all its per-stage
/// prefix sums inside the cumulative windows, so the reach sets are
/// exact, not approximations.  Parent links allow decomposing any
/// reachable sum back into per-block words.
pub(crate) struct MultiReach {
    blocks: Vec<(Vec<i128>, u32)>,
    stages: Vec<StageReach>,
}

impl MultiReach {
    pub(crate) fn build(blocks: Vec<(Vec<i128>, u32)>, budget_states: u64) -> Result<MultiReach> {
        // Gate the total number of window states first.  Windows are
        // rejected as soon as a cumulative half-width alone exceeds the
        // budget, which also keeps all later arithmetic comfortably in
        // range.
        let mut width: u128 = 0;
        let mut total_states: u128 = 0;
        for (values, cap) in &blocks {
            let max_abs = values.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
            width = (*cap as u128)
                .checked_mul(max_abs)
                .and_then(|g| width.checked_add(g))
                .filter(|&w| w <= budget_states as u128)
                .ok_or_else(|| {
                    Error::capacity(format!(
                        "reachability window exceeds the {budget_states}-state budget"
                    ))
                })?;
            total_states += 2 * width + 1;
        }
        if total_states > budget_states as u128 {
            return Err(Error::capacity(format!(
                "reachability windows need {total_states} states, budget is {budget_states}"
            )));
        }

        let mut stages: Vec<StageReach> = Vec::with_capacity(blocks.len());
        let mut half_width: i128 = 0;
        for (values, cap) in &blocks {
            let max_abs = values.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as i128;
            half_width += (*cap as i128) * max_abs;
            let size = (2 * half_width + 1) as usize;
            let mut stage = StageReach {
                half_width,
                dist: vec![UNREACHED; size],
                origin: vec![Origin::Unreached; size],
            };

            // Sources: previous stage's reachable sums (or just 0).
            let mut frontier: Vec<usize> = Vec::new();
            match stages.last() {
                None => {
                    let o = stage.offset(0).expect("0 is always inside the window");
                    stage.dist[o] = 0;
                    stage.origin[o] = Origin::Carried;
                    frontier.push(o);
                }
                Some(prev) => {
                    for po in 0..prev.dist.len() {
                        if prev.dist[po] != UNREACHED {
                            let o = stage.offset(prev.value(po)).expect("windows are nested");
                            stage.dist[o] = 0;
                            stage.origin[o] = Origin::Carried;
                            frontier.push(o);
                        }
                    }
                }
            }

            // Layered BFS with this block's ± steps.
            for layer in 1..=*cap {
                let mut next: Vec<usize> = Vec::new();
                for &off in &frontier {
                    let v = stage.value(off);
                    for (ei, &val) in values.iter().enumerate() {
                        for sign in [1i8, -1i8] {
                            let ns = v + (sign as i128) * val;
                            let Some(no) = stage.offset(ns) else {
                                // Only possible when val = 0 never, or at the rim:
                                // steps from layer < cap stay inside by construction,
                                // but guard anyway.
                                continue;
                            };
                            if stage.dist[no] == UNREACHED {
                                stage.dist[no] = layer;
                                stage.origin[no] = Origin::Step {
                                    prev: off as u32,
                                    elem: ei as u16,
                                    sign,
                                };
                                next.push(no);
                            }
                        }
                    }
                }
                frontier = next;
                if frontier.is_empty() {
                    break;
                }
            }

            stages.push(stage);
        }

        Ok(MultiReach { blocks, stages })
    }

    /// Is `sum` = ∏ρₖ achievable within the caps?  With no blocks only
    /// the empty product (sum 0) is achievable.
    pub(crate) fn contains(&self, sum: i128) -> bool {
        match self.stages.last() {
            None => sum == 0,
            Some(stage) => stage.reachable(sum),
        }
    }

    /// Decompose a reachable `sum` into per-block exponent lists
    /// [(element index, exponent)], one list per block, heights within
    /// the caps.  Deterministic: follows the BFS parent links.
    pub(crate) fn decompose(&self, sum: i128) -> Option<Vec<Vec<(usize, i64)>>> {
        if !self.contains(sum) {
            return None;
        }
        let mut words: Vec<BTreeMap<usize, i64>> = vec![BTreeMap::new(); self.blocks.len()];
        let mut value = sum;
        for k in (0..self.stages.len()).rev() {
            let stage = &self.stages[k];
            let mut off = stage.offset(value).expect("reachable sums are in-window");
            loop {
                match stage.origin[off] {
                    Origin::Carried => break,
                    Origin::Step { prev, elem, sign } => {
                        let slot = words[k].entry(elem as usize).or_insert(0);
                        *slot += sign as i64;
                        if *slot == 0 {
                            words[k].remove(&(elem as usize));
                        }
                        off = prev as usize;
                    }
                    Origin::Unreached => unreachable!("parent chain hit an unreached state"),
                }
            }
            value = stage.value(off);
        }
        debug_assert_eq!(
            value, 0,
            "decomposition must terminate at the empty product"
        );
        Some(words.into_iter().map(|m| m.into_iter().collect()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(n: i128) -> Character {
        Character::z(n)
    }

    #[test]
    fn walk_visits_all_leaves_in_lex_order() {
        let base = vec![z(1), z(2)];
        let mut seen: Vec<(Vec<i8>, i128)> = Vec::new();
        foreach_eps_products(&base, Family::Z, 1_000, &mut |eps, acc| {
            let ProductAcc::Int(s) = acc else { panic!() };
            seen.push((eps.to_vec(), *s));
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[0], (vec![-1, -1], -3));
        assert_eq!(seen[4], (vec![0, 0], 0));
        assert_eq!(seen[8], (vec![1, 1], 3));
        // lexicographic order throughout
        for w in seen.windows(2) {
            assert!(w[0].0 < w[1].0);
        }
    }

    #[test]
    fn walk_budget_is_enforced() {
        let base: Vec<Character> = (1..=10).map(z).collect();
        let r = foreach_eps_products(&base, Family::Z, 100, &mut |_, _| ControlFlow::Continue(()));
        assert!(matches!(r, Err(Error::Capacity(_))));
    }

    #[test]
    fn boolean_walk_uses_two_signs() {
        let base = vec![Character::walsh([0]), Character::walsh([1])];
        let mut n = 0;
        foreach_eps_products(&base, Family::Walsh, 100, &mut |eps, _| {
            assert!(eps.iter().all(|&e| e == 0 || e == 1));
            n += 1;
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(n, 4);
    }

    #[test]
    fn masks_record_achievable_heights() {
        let map = half_masks(&[z(1), z(2)], Family::Z, 1_000).unwrap();
        // identity reachable as empty word (bit 0) and nothing else sums to 0
        assert_eq!(map[&z(0)], 1);
        // 3 = 1+2 at height 2
        assert_eq!(map[&z(3)], 1 << 2);
        // 1 = +1 (height 1) = −2+... no; also 1 = 2−1 height 2
        assert_eq!(map[&z(1)], (1 << 1) | (1 << 2));
    }

    #[test]
    fn counts_table_is_exact() {
        let table = half_counts(&[z(1), z(2)], Family::Z, 1_000).unwrap();
        let rows: Vec<(u8, u64)> = counts_for(&table, &z(1)).collect();
        assert_eq!(rows, vec![(1, 1), (2, 1)]);
        let total: u64 = table.iter().map(|(_, n)| n).sum();
        assert_eq!(total, 9);
    }

    #[test]
    fn multi_reach_finds_and_decomposes() {
        // blocks ({3,5}, cap 2), ({7}, cap 1); 15 = 3+5+7
        let mr = MultiReach::build(vec![(vec![3, 5], 2), (vec![7], 1)], 10_000).unwrap();
        assert!(mr.contains(15));
        assert!(mr.contains(0));
        assert!(!mr.contains(24)); // 3+5+7+... beyond caps
        let words = mr.decompose(15).unwrap();
        assert_eq!(words.len(), 2);
        let h0: i64 = words[0].iter().map(|(_, e)| e.abs()).sum();
        let h1: i64 = words[1].iter().map(|(_, e)| e.abs()).sum();
        assert!(h0 <= 2 && h1 <= 1);
        let sum: i128 = words[0]
            .iter()
            .map(|&(i, e)| [3i128, 5][i] * e as i128)
            .sum::<i128>()
            + words[1]
                .iter()
                .map(|&(i, e)| [7i128][i] * e as i128)
                .sum::<i128>();
        assert_eq!(sum, 15);
    }

    #[test]
    fn multi_reach_respects_caps() {
        let mr = MultiReach::build(vec![(vec![5], 1)], 1_000).unwrap();
        assert!(!mr.contains(10));
        let mr2 = MultiReach::build(vec![(vec![5], 2)], 1_000).unwrap();
        assert!(mr2.contains(10));
        assert_eq!(mr2.decompose(10).unwrap()[0], vec![(0usize, 2i64)]);
    }

    #[test]
    fn multi_reach_zero_cap_blocks_carry_only() {
        let mr = MultiReach::build(vec![(vec![1i128 << 100], 0), (vec![2], 3)], 1_000).unwrap();
        assert!(mr.contains(-6));
        assert!(!mr.contains(1));
        let words = mr.decompose(-6).unwrap();
        assert!(words[0].is_empty());
        assert_eq!(words[1], vec![(0usize, -3i64)]);
    }

    #[test]
    fn multi_reach_budget() {
        let r = MultiReach::build(vec![(vec![1_000_000], 1_000)], 1_000);
        assert!(matches!(r, Err(Error::Capacity(_))));
    }

    #[test]
    fn empty_multi_reach_is_the_empty_product() {
        let mr = MultiReach::build(vec![], 10).unwrap();
        assert!(mr.contains(0));
        assert!(!mr.contains(1));
        assert_eq!(mr.decompose(0).unwrap(), Vec::<Vec<(usize, i64)>>::new());
    }
}
