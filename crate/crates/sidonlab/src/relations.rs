//! Relation combinatorics: quasi-independence with witnesses, relation
//! enumeration and counting by height, maximal relations, and
//! cap-constrained word search.
//!
//! A finite set Λ of characters is *quasi-independent* (qi) when the
//! only solution of ∏_{λ∈Λ} λ^{ε_λ} = 1 with ε ∈ {−1,0,+1}^Λ is ε ≡ 0.
//! A nontrivial solution is a *relation*; its height is Σ|ε_λ|.  On
//! order-2 characters (Walsh family) ε = −1 and ε = +1 act identically,
//! so relations there are normalized to ε ∈ {0,+1}.
//!
//! Decision strategies, tried in order:
//!
//! 1. the identity character in Λ gives an immediate height-1 witness;
//! 2. integer sets whose absolute values grow by ratios ≥ 2 are qi
//!    (the largest participating term dominates the rest strictly);
//! 3. |Λ| ≤ 14: exhaustive 3ⁿ walk;
//! 4. |Λ| ≤ 28: meet-in-the-middle over half products;
//! 5. integer sets with Σ|λ| within the DP budget: pseudo-polynomial
//!    dynamic programming over reachable signed sums;
//! 6. otherwise an explicit capacity error — never a heuristic answer.
//!
//! Determinism: all searches use a fixed lexicographic order on
//! ε-vectors over the canonically sorted base set (−1 < 0 < +1).
//! Minimal-height witnesses are reported sign-normalized (the smallest
//! support element carries ε = +1; relations come in ± pairs, so this
//! picks a canonical representative).  `max_height_relation` instead
//! returns the raw lexicographically least ε-vector among the maximal
//! ones, ties included, without sign normalization.

use crate::capacity::{Capacity, MITM_MAX, NAIVE_MAX};
use crate::characters::{canonical_set, word_product, z_values, Character, Family};
use crate::error::{Error, Result};
use crate::sums::{
    counts_for, foreach_eps_products, half_counts, half_masks, MultiReach, UNREACHED,
};
use num_bigint::BigUint;
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::ControlFlow;

// ---------------------------------------------------------------------
// EpsilonRelation
// ---------------------------------------------------------------------

/// A verified relation: coefficients ε ∈ {−1,+1} on a finite support
/// with ∏ λ^{ε_λ} = 1.  Construction re-checks the product, so a value
/// of this type is always a valid witness.  On the Walsh family the
/// coefficients are normalized to +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsilonRelation {
    family: Family,
    eps: BTreeMap<Character, i8>,
}

impl EpsilonRelation {
    /// Validate and build a relation from its nonzero coefficients.
    /// Zero entries are dropped; the remaining ones must be ±1, share a
    /// family, be nonempty, and multiply to the identity.
    pub fn new(eps: BTreeMap<Character, i8>) -> Result<Self> {
        let eps: BTreeMap<Character, i8> = eps.into_iter().filter(|&(_, e)| e != 0).collect();
        let Some(first) = eps.keys().next() else {
            return Err(Error::domain(
                "a relation needs at least one nonzero coefficient",
            ));
        };
        let family = first.family();
        if eps.keys().any(|g| g.family() != family) {
            return Err(Error::domain("relation mixes character families"));
        }
        if eps.values().any(|&e| e != 1 && e != -1) {
            return Err(Error::domain("relation coefficients must lie in {−1,0,+1}"));
        }
        let eps: BTreeMap<Character, i8> = if family == Family::Walsh {
            eps.into_iter().map(|(g, _)| (g, 1)).collect()
        } else {
            eps
        };
        let factors: Vec<(Character, i64)> =
            eps.iter().map(|(g, &e)| (g.clone(), e as i64)).collect();
        if !word_product(&factors)?.is_identity() {
            return Err(Error::domain("coefficients do not satisfy ∏ λ^ε = 1"));
        }
        Ok(EpsilonRelation { family, eps })
    }

    /// Build from a sorted base and a parallel ε slice (internal).
    pub(crate) fn from_base_eps(base: &[Character], eps: &[i8]) -> Result<Self> {
        let map: BTreeMap<Character, i8> = base
            .iter()
            .zip(eps.iter())
            .filter(|&(_, &e)| e != 0)
            .map(|(g, &e)| (g.clone(), e))
            .collect();
        EpsilonRelation::new(map)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Height Σ|ε_λ| (the number of nonzero coefficients).
    pub fn height(&self) -> u32 {
        self.eps.len() as u32
    }

    /// The coefficient attached to `ch` (0 if absent).
    pub fn coefficient(&self, ch: &Character) -> i8 {
        self.eps.get(ch).copied().unwrap_or(0)
    }

    /// The nonzero coefficient map.
    pub fn eps(&self) -> &BTreeMap<Character, i8> {
        &self.eps
    }

    /// The characters participating in the relation.
    pub fn support(&self) -> impl Iterator<Item = &Character> + '_ {
        self.eps.keys()
    }

    /// ε ↦ −ε (the identity map on the Walsh family).
    pub fn negated(&self) -> EpsilonRelation {
        if self.family == Family::Walsh {
            return self.clone();
        }
        EpsilonRelation {
            family: self.family,
            eps: self.eps.iter().map(|(g, &e)| (g.clone(), -e)).collect(),
        }
    }

    /// Canonical representative of {ε, −ε}: the smallest support
    /// element carries ε = +1.
    pub fn normalized(&self) -> EpsilonRelation {
        match self.eps.values().next() {
            Some(-1) => self.negated(),
            _ => self.clone(),
        }
    }
}

// ---------------------------------------------------------------------
// SignedWord
// ---------------------------------------------------------------------

/// A word ∏ λ^{n_λ} with arbitrary integer exponents and height
/// d = Σ|n_λ|.  Unlike a relation, a word carries no product
/// constraint; it is the ρ/σ object of the extraction pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedWord {
    family: Family,
    exponents: BTreeMap<Character, i64>,
}

impl SignedWord {
    /// Build a word over `family`; zero exponents are dropped, keys
    /// must belong to the family.  The empty word is allowed.
    pub fn new(family: Family, exponents: BTreeMap<Character, i64>) -> Result<Self> {
        let exponents: BTreeMap<Character, i64> =
            exponents.into_iter().filter(|&(_, e)| e != 0).collect();
        if exponents.keys().any(|g| g.family() != family) {
            return Err(Error::domain("word exponent keyed by a foreign family"));
        }
        Ok(SignedWord { family, exponents })
    }

    pub fn empty(family: Family) -> Self {
        SignedWord {
            family,
            exponents: BTreeMap::new(),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn exponents(&self) -> &BTreeMap<Character, i64> {
        &self.exponents
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Height d = Σ|n_λ|.
    pub fn height(&self) -> u64 {
        self.exponents
            .values()
            .map(|e| e.unsigned_abs())
            .fold(0u64, u64::saturating_add)
    }

    /// The normalized product ∏ λ^{n_λ} (identity for the empty word).
    pub fn product(&self) -> Result<Character> {
        if self.exponents.is_empty() {
            return Ok(Character::identity(self.family));
        }
        let factors: Vec<(Character, i64)> = self
            .exponents
            .iter()
            .map(|(g, &e)| (g.clone(), e))
            .collect();
        word_product(&factors)
    }
}

// ---------------------------------------------------------------------
// Wire format for relations and words
// ---------------------------------------------------------------------
//
// {"eps":{"1":1,"2":1,"3":-1},"height":3}
// {"family":"Z","exponents":{"5":2},"height":2}
//
// Relation keys use the canonical text form of each character (decimal
// for ℤ, "e0^1*e3^-2" for ℤ^{(ℕ)}, "r0*r2" for Walsh).  On parse the
// family is inferred from the key syntax across the whole map: any '^'
// means ℤ^{(ℕ)}, any "r<digit>" prefix means Walsh, otherwise integers.
// The bare key "1" is the identity of the inferred family (and the
// integer 1 when all keys are numeric); a map consisting only of "1"
// keys reads as the ℤ^{(ℕ)} identity relation, since the integer 1
// alone never satisfies one.

fn infer_family(keys: &BTreeMap<String, i8>) -> Family {
    if keys.keys().any(|k| k.contains('^')) {
        return Family::ZoplusN;
    }
    if keys.keys().any(|k| {
        k.strip_prefix('r')
            .and_then(|r| r.chars().next())
            .is_some_and(|c| c.is_ascii_digit())
    }) {
        return Family::Walsh;
    }
    Family::Z
}

/// Parse a character from its canonical text key (the inverse of
/// [`Character::key_string`]): decimal for ℤ, `e0^1*e3^-2` for ℤ^{(ℕ)},
/// `r0*r2` for Walsh, and `"1"` for the identity of the non-integer
/// families.
pub fn parse_character(key: &str, family: Family) -> crate::error::Result<Character> {
    parse_key(key, family).map_err(Error::domain)
}

pub(crate) fn parse_key(key: &str, family: Family) -> std::result::Result<Character, String> {
    if key == "1" && family != Family::Z {
        return Ok(Character::identity(family));
    }
    match family {
        Family::Z => key
            .parse::<i128>()
            .map(Character::z)
            .map_err(|_| format!("unrecognized integer character key {key:?}")),
        Family::Walsh => {
            let mut indices = Vec::new();
            for part in key.split('*') {
                let idx = part
                    .strip_prefix('r')
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| format!("bad Walsh key segment {part:?}"))?;
                indices.push(idx);
            }
            Ok(Character::walsh(indices))
        }
        Family::ZoplusN => {
            let mut coords = Vec::new();
            for part in key.split('*') {
                let body = part
                    .strip_prefix('e')
                    .ok_or_else(|| format!("bad coordinate key segment {part:?}"))?;
                let (idx, exp) = body
                    .split_once('^')
                    .ok_or_else(|| format!("bad coordinate key segment {part:?}"))?;
                let idx: u32 = idx.parse().map_err(|_| format!("bad index in {part:?}"))?;
                let exp: i64 = exp
                    .parse()
                    .map_err(|_| format!("bad exponent in {part:?}"))?;
                coords.push((idx, exp));
            }
            Ok(Character::free(coords))
        }
    }
}

fn parse_relation_keys(
    raw: &BTreeMap<String, i8>,
) -> std::result::Result<BTreeMap<Character, i8>, String> {
    let family = if !raw.is_empty() && raw.keys().all(|k| k == "1") {
        Family::ZoplusN
    } else {
        infer_family(raw)
    };
    let mut map = BTreeMap::new();
    for (k, &e) in raw {
        map.insert(parse_key(k, family)?, e);
    }
    Ok(map)
}

fn coeff_object<V: Copy + Into<i64>>(map: &BTreeMap<Character, V>) -> BTreeMap<String, i64> {
    map.iter()
        .map(|(g, &e)| (g.key_string(), e.into()))
        .collect()
}

impl Serialize for EpsilonRelation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("eps", &coeff_object(&self.eps))?;
        map.serialize_entry("height", &self.height())?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for EpsilonRelation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct RelVisitor;
        impl<'de> Visitor<'de> for RelVisitor {
            type Value = EpsilonRelation;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a relation object {\"eps\": {...}, \"height\": n}")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<EpsilonRelation, A::Error> {
                let mut eps: Option<BTreeMap<String, i8>> = None;
                let mut height: Option<u32> = None;
                while let Some(key) = access.next_key::<String>()? {
                    match key.as_str() {
                        "eps" => eps = Some(access.next_value()?),
                        "height" => height = Some(access.next_value()?),
                        other => return Err(de::Error::unknown_field(other, &["eps", "height"])),
                    }
                }
                let eps = eps.ok_or_else(|| de::Error::missing_field("eps"))?;
                let map = parse_relation_keys(&eps).map_err(de::Error::custom)?;
                let rel =
                    EpsilonRelation::new(map).map_err(|e| de::Error::custom(e.to_string()))?;
                if let Some(h) = height {
                    if h != rel.height() {
                        return Err(de::Error::custom(format!(
                            "height field {h} disagrees with the {} coefficients",
                            rel.height()
                        )));
                    }
                }
                Ok(rel)
            }
        }
        deserializer.deserialize_map(RelVisitor)
    }
}

impl Serialize for SignedWord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(3))?;
        map.serialize_entry(
            "family",
            match self.family {
                Family::Z => "Z",
                Family::ZoplusN => "ZoplusN",
                Family::Walsh => "Walsh",
            },
        )?;
        map.serialize_entry("exponents", &coeff_object(&self.exponents))?;
        map.serialize_entry("height", &self.height())?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for SignedWord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct WordVisitor;
        impl<'de> Visitor<'de> for WordVisitor {
            type Value = SignedWord;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a word object {\"family\": ..., \"exponents\": {...}}")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<SignedWord, A::Error> {
                let mut family: Option<Family> = None;
                let mut exps: Option<BTreeMap<String, i64>> = None;
                let mut height: Option<u64> = None;
                while let Some(key) = access.next_key::<String>()? {
                    match key.as_str() {
                        "family" => family = Some(access.next_value()?),
                        "exponents" => exps = Some(access.next_value()?),
                        "height" => height = Some(access.next_value()?),
                        other => {
                            return Err(de::Error::unknown_field(
                                other,
                                &["family", "exponents", "height"],
                            ))
                        }
                    }
                }
                let family = family.ok_or_else(|| de::Error::missing_field("family"))?;
                let exps = exps.ok_or_else(|| de::Error::missing_field("exponents"))?;
                let mut map = BTreeMap::new();
                for (k, e) in exps {
                    map.insert(parse_key(&k, family).map_err(de::Error::custom)?, e);
                }
                let word =
                    SignedWord::new(family, map).map_err(|e| de::Error::custom(e.to_string()))?;
                if let Some(h) = height {
                    if h != word.height() {
                        return Err(de::Error::custom(format!(
                            "height field {h} disagrees with the exponents (height {})",
                            word.height()
                        )));
                    }
                }
                Ok(word)
            }
        }
        deserializer.deserialize_map(WordVisitor)
    }
}

// ---------------------------------------------------------------------
// Quasi-independence decision
// ---------------------------------------------------------------------

/// Which strategy settled a quasi-independence query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionMethod {
    /// The empty set is vacuously quasi-independent.
    EmptySet,
    /// The identity character is a member: witness of height 1.
    IdentityMember,
    /// Integer absolute values grow by ratios ≥ 2 — always qi.
    Lacunarity,
    /// Exhaustive 3ⁿ walk.
    Exhaustive,
    /// Meet-in-the-middle over half products.
    MeetInMiddle,
    /// Pseudo-polynomial DP over signed sums (integer family).
    SignedSumDp,
}

/// Outcome of a quasi-independence decision.
#[derive(Debug, Clone, PartialEq)]
pub enum QiOutcome {
    QuasiIndependent {
        method: DecisionMethod,
    },
    Dependent {
        /// A verified relation of minimal height, sign-normalized.
        witness: EpsilonRelation,
        method: DecisionMethod,
    },
}

impl QiOutcome {
    pub fn is_qi(&self) -> bool {
        matches!(self, QiOutcome::QuasiIndependent { .. })
    }

    pub fn witness(&self) -> Option<&EpsilonRelation> {
        match self {
            QiOutcome::QuasiIndependent { .. } => None,
            QiOutcome::Dependent { witness, .. } => Some(witness),
        }
    }

    pub fn method(&self) -> DecisionMethod {
        match self {
            QiOutcome::QuasiIndependent { method } => *method,
            QiOutcome::Dependent { method, .. } => *method,
        }
    }
}

/// Decide whether Λ is quasi-independent.  On a dependent set the
/// returned witness has minimal height; among minimal-height relations
/// it is the lexicographically least ε-vector over the sorted base,
/// reported sign-normalized.
pub fn is_quasi_independent(set: &[Character], capacity: &Capacity) -> Result<QiOutcome> {
    if set.is_empty() {
        return Ok(QiOutcome::QuasiIndependent {
            method: DecisionMethod::EmptySet,
        });
    }
    let base = canonical_set(set)?;
    if let Some(id) = base.iter().find(|g| g.is_identity()) {
        let witness = EpsilonRelation::new(BTreeMap::from([(id.clone(), 1)]))?;
        return Ok(QiOutcome::Dependent {
            witness,
            method: DecisionMethod::IdentityMember,
        });
    }
    let family = base[0].family();
    if family == Family::Z && is_lacunary_ratio2(&z_values(&base)?) {
        return Ok(QiOutcome::QuasiIndependent {
            method: DecisionMethod::Lacunarity,
        });
    }
    let n = base.len();
    if n <= NAIVE_MAX {
        return decide_extremal(&base, family, Goal::Min, capacity, Strategy::Naive)
            .map(|out| finish_decision(&base, out, DecisionMethod::Exhaustive));
    }
    if n <= MITM_MAX {
        return decide_extremal(&base, family, Goal::Min, capacity, Strategy::Mitm)
            .map(|out| finish_decision(&base, out, DecisionMethod::MeetInMiddle));
    }
    if family == Family::Z {
        let found = dp_relation_z(&z_values(&base)?, Objective::Min, capacity)?;
        return Ok(finish_decision(&base, found, DecisionMethod::SignedSumDp));
    }
    Err(Error::capacity(format!(
        "{n} elements exceed every exact decision strategy for this family"
    )))
}

/// Pseudo-polynomial decision for integer sets, independent of the
/// strategy ladder: a nontrivial ε with Σ ε_λ λ = 0 exists iff two
/// disjoint subsets of Λ have equal sums, found by DP over reachable
/// signed sums.  Same contract as [`is_quasi_independent`]; used as an
/// independent cross-check oracle.
pub fn qi_decide_fast_z(set: &[Character], capacity: &Capacity) -> Result<QiOutcome> {
    if set.is_empty() {
        return Ok(QiOutcome::QuasiIndependent {
            method: DecisionMethod::EmptySet,
        });
    }
    let base = canonical_set(set)?;
    let values = z_values(&base)?;
    if let Some(pos) = values.iter().position(|&v| v == 0) {
        let witness = EpsilonRelation::new(BTreeMap::from([(base[pos].clone(), 1)]))?;
        return Ok(QiOutcome::Dependent {
            witness,
            method: DecisionMethod::IdentityMember,
        });
    }
    let found = dp_relation_z(&values, Objective::Min, capacity)?;
    Ok(finish_decision(&base, found, DecisionMethod::SignedSumDp))
}

fn finish_decision(
    base: &[Character],
    found: Option<(u32, Vec<i8>)>,
    method: DecisionMethod,
) -> QiOutcome {
    match found {
        None => QiOutcome::QuasiIndependent { method },
        Some((_, eps)) => {
            let witness = EpsilonRelation::from_base_eps(base, &eps)
                .expect("searched relations re-validate by construction")
                .normalized();
            QiOutcome::Dependent { witness, method }
        }
    }
}

/// Sorted-by-absolute-value integers with every consecutive ratio ≥ 2
/// are quasi-independent: if k is the largest index with ε_k ≠ 0 then
/// |Σ ε_j λ_j| ≥ |λ_k| − Σ_{j<k}|λ_j| ≥ |λ_k|(1 − ½ − ¼ − …) > 0.
/// This only ever *accepts*; anything else falls through to the exact
/// strategies (sums saturate, so the test stays sound near the i128
/// range limit).
fn is_lacunary_ratio2(values: &[i128]) -> bool {
    let mut abs: Vec<u128> = values.iter().map(|v| v.unsigned_abs()).collect();
    abs.sort_unstable();
    if abs.first() == Some(&0) {
        return false;
    }
    abs.windows(2)
        .all(|w| w[1].checked_div(2).is_some() && w[0].saturating_mul(2) <= w[1])
}

// ---------------------------------------------------------------------
// Extremal relation search (shared by witness and maximal queries)
// ---------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Goal {
    Min,
    /// Maximal height, optionally restricted to heights ≤ cap.
    Max {
        cap: Option<u32>,
    },
}

#[derive(Clone, Copy)]
enum Strategy {
    Naive,
    Mitm,
}

fn better(goal: Goal, candidate: u32, incumbent: u32) -> bool {
    match goal {
        Goal::Min => candidate < incumbent,
        Goal::Max { .. } => candidate > incumbent,
    }
}

fn admissible(goal: Goal, h: u32) -> bool {
    match goal {
        Goal::Min => h >= 1,
        Goal::Max { cap } => h >= 1 && cap.map_or(true, |c| h <= c),
    }
}

/// Single driver for "find the extremal-height relation, lex-least
/// among ties" over the naive and meet-in-the-middle strategies.
/// Returns the raw ε-vector over the given base order.
fn decide_extremal(
    base: &[Character],
    family: Family,
    goal: Goal,
    capacity: &Capacity,
    strategy: Strategy,
) -> Result<Option<(u32, Vec<i8>)>> {
    match strategy {
        Strategy::Naive => naive_extremal(base, family, goal, capacity),
        Strategy::Mitm => mitm_extremal(base, family, goal, capacity),
    }
}

/// One lexicographic walk: whenever a strictly better admissible height
/// appears, record the ε-vector.  Because the walk is lex-ascending,
/// the final record is the lex-least vector among those of the extremal
/// height.
fn naive_extremal(
    base: &[Character],
    family: Family,
    goal: Goal,
    capacity: &Capacity,
) -> Result<Option<(u32, Vec<i8>)>> {
    let mut best: Option<(u32, Vec<i8>)> = None;
    foreach_eps_products(base, family, capacity.enum_leaves, &mut |eps, acc| {
        if acc.is_identity() {
            let h: u32 = eps.iter().map(|&e| e.unsigned_abs() as u32).sum();
            if admissible(goal, h) && best.as_ref().map_or(true, |(b, _)| better(goal, h, *b)) {
                best = Some((h, eps.to_vec()));
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok(best)
}

fn low_bits(k: u32) -> u32 {
    if k >= 32 {
        u32::MAX
    } else {
        (1u32 << k) - 1
    }
}

/// Meet-in-the-middle: achievable-height bitmasks for the second half,
/// then one walk over the first half to find the extremal total height,
/// and two more lex walks to reconstruct the lex-least witness.
fn mitm_extremal(
    base: &[Character],
    family: Family,
    goal: Goal,
    capacity: &Capacity,
) -> Result<Option<(u32, Vec<i8>)>> {
    let split = base.len() / 2;
    let (first, second) = base.split_at(split);
    let masks = half_masks(second, family, capacity.enum_leaves)?;

    // Admissible completion heights for a first-half height h1 against
    // a second-half mask: drop the (0,0) trivial pair.
    let effective = |h1: u32, m: u32| -> u32 {
        let m = match goal {
            Goal::Min => m,
            Goal::Max { cap } => match cap {
                Some(c) if h1 > c => 0,
                Some(c) => m & low_bits(c - h1 + 1),
                None => m,
            },
        };
        if h1 == 0 {
            m & !1
        } else {
            m
        }
    };

    // Pass 1: extremal height.
    let mut best: Option<u32> = None;
    foreach_eps_products(first, family, capacity.enum_leaves, &mut |eps, acc| {
        let h1: u32 = eps.iter().map(|&e| e.unsigned_abs() as u32).sum();
        let inv = acc
            .snapshot()
            .inverse()
            .expect("half products of valid sets negate without overflow");
        if let Some(&m) = masks.get(&inv) {
            let m = effective(h1, m);
            if m != 0 {
                let h2 = match goal {
                    Goal::Min => m.trailing_zeros(),
                    Goal::Max { .. } => 31 - m.leading_zeros(),
                };
                let total = h1 + h2;
                if admissible(goal, total) && best.map_or(true, |b| better(goal, total, b)) {
                    best = Some(total);
                }
            }
        }
        ControlFlow::Continue(())
    })?;
    let Some(target) = best else {
        return Ok(None);
    };

    // Pass 2: lex-least first half admitting an exact completion.
    let mut chosen: Option<(Vec<i8>, Character, u32)> = None;
    foreach_eps_products(first, family, capacity.enum_leaves, &mut |eps, acc| {
        let h1: u32 = eps.iter().map(|&e| e.unsigned_abs() as u32).sum();
        if h1 > target {
            return ControlFlow::Continue(());
        }
        let need = target - h1;
        if need > 31 {
            return ControlFlow::Continue(());
        }
        let inv = acc
            .snapshot()
            .inverse()
            .expect("half products of valid sets negate without overflow");
        if let Some(&m) = masks.get(&inv) {
            if (effective(h1, m) >> need) & 1 == 1 {
                chosen = Some((eps.to_vec(), inv, need));
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    let (eps1, want, need) = chosen.ok_or_else(|| {
        Error::Internal("extremal height found but no first half reproduces it".into())
    })?;

    // Pass 3: lex-least second half with the exact height and product.
    let mut eps2: Option<Vec<i8>> = None;
    foreach_eps_products(second, family, capacity.enum_leaves, &mut |eps, acc| {
        let h2: u32 = eps.iter().map(|&e| e.unsigned_abs() as u32).sum();
        if h2 == need && acc.snapshot() == want {
            eps2 = Some(eps.to_vec());
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })?;
    let eps2 = eps2
        .ok_or_else(|| Error::Internal("second half completion vanished between passes".into()))?;

    let mut eps = eps1;
    eps.extend_from_slice(&eps2);
    Ok(Some((target, eps)))
}

// ---------------------------------------------------------------------
// Signed-sum dynamic programming (integer family)
// ---------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Objective {
    Min,
    Max,
}

/// Find the extremal-height nontrivial relation Σ ε_i v_i = 0 by DP
/// over suffix-reachable sums in the window [−Σ|v|, Σ|v|].  Returns the
/// raw lex-least ε at the extremal height, or `None` when the set is
/// quasi-independent.
///
/// The decision pass keeps two rolling layers (2·(2T+1) states must fit
/// the `dp_states` budget, T = Σ|v|).  Witness reconstruction stores
/// one layer per element and is gated at 4·`dp_states` table entries.
fn dp_relation_z(
    values: &[i128],
    objective: Objective,
    capacity: &Capacity,
) -> Result<Option<(u32, Vec<i8>)>> {
    let n = values.len();
    let mut t_u: u128 = 0;
    for &v in values {
        t_u = t_u
            .checked_add(v.unsigned_abs())
            .ok_or_else(|| Error::capacity("Σ|λ| overflows the DP window"))?;
    }
    let states = t_u
        .checked_mul(2)
        .and_then(|s| s.checked_add(1))
        .ok_or_else(|| Error::capacity("Σ|λ| overflows the DP window"))?;
    if states.saturating_mul(2) > capacity.dp_states as u128 {
        return Err(Error::capacity(format!(
            "signed-sum DP needs 2×{states} states, budget is {}",
            capacity.dp_states
        )));
    }
    let t = t_u as i128;
    let size = states as usize;
    let offset = |s: i128| -> Option<usize> {
        if s < -t || s > t {
            None
        } else {
            Some((s + t) as usize)
        }
    };

    let improves = |a: u32, b: u32| match objective {
        Objective::Min => a < b,
        Objective::Max => a > b,
    };

    // Suffix layer S_i[s] = extremal Σ_{j≥i}|ε_j| with Σ_{j≥i} ε_j v_j = s
    // (the all-zero suffix is allowed: S[0] ∋ height 0).
    let fold = |suf: &[u32], v: i128| -> Vec<u32> {
        let mut new = suf.to_vec(); // ε_i = 0
        for off in 0..suf.len() {
            let h = suf[off];
            if h == UNREACHED {
                continue;
            }
            let s = off as i128 - t;
            for sv in [v, -v] {
                if let Some(no) = offset(s + sv) {
                    if new[no] == UNREACHED || improves(h + 1, new[no]) {
                        new[no] = h + 1;
                    }
                }
            }
        }
        new
    };

    // Decision pass: every nontrivial relation has a first nonzero
    // position i, giving height 1 + S_{i+1}[∓v_i].  best_from[i] is the
    // extremal height over relations supported entirely in positions
    // ≥ i (UNREACHED when none exists).
    let mut base_layer = vec![UNREACHED; size];
    base_layer[offset(0).expect("0 is in the window")] = 0;
    let mut suf = base_layer.clone(); // S_n
    let mut best_from = vec![UNREACHED; n + 1];
    for i in (0..n).rev() {
        best_from[i] = best_from[i + 1];
        for sign in [1i128, -1] {
            if let Some(off) = offset(-sign * values[i]) {
                if suf[off] != UNREACHED {
                    let h = 1 + suf[off];
                    if best_from[i] == UNREACHED || improves(h, best_from[i]) {
                        best_from[i] = h;
                    }
                }
            }
        }
        if i > 0 {
            suf = fold(&suf, values[i]);
        }
    }
    let target = best_from[0];
    if target == UNREACHED {
        return Ok(None);
    }

    // Witness pass: store S_{i+1} for every position i, then pick the
    // raw lex-least ε greedily.  The exact-height test is sound: once
    // the prefix holds a nonzero sign, a completion of total height
    // exactly `target` through sum s exists iff S_{i+1}[s] equals the
    // remaining height — otherwise swapping in the extremal suffix
    // would produce a nontrivial relation beating the global extremum.
    // While the prefix is still all zeros, choosing 0 is valid iff a
    // full extremal relation lives in the strict suffix (best_from).
    let table_entries = (n as u128).saturating_mul(states);
    if table_entries > 4 * capacity.dp_states as u128 {
        return Err(Error::capacity(format!(
            "witness reconstruction needs {table_entries} DP entries; raise dp_states"
        )));
    }
    // layers[i] = S_{i+1}
    let mut layers: Vec<Vec<u32>> = vec![Vec::new(); n];
    layers[n - 1] = base_layer;
    for i in (0..n - 1).rev() {
        layers[i] = fold(&layers[i + 1], values[i + 1]);
    }

    let mut eps = vec![0i8; n];
    let mut prefix: i128 = 0;
    let mut used: u32 = 0;
    for i in 0..n {
        let mut picked = false;
        for cand in [-1i8, 0, 1] {
            let valid = if used == 0 && cand == 0 {
                best_from[i + 1] == target
            } else {
                let p2 = prefix + (cand as i128) * values[i];
                let need = used + cand.unsigned_abs() as u32;
                match offset(-p2) {
                    Some(off) => layers[i][off] != UNREACHED && need + layers[i][off] == target,
                    None => false,
                }
            };
            if valid {
                eps[i] = cand;
                prefix += (cand as i128) * values[i];
                used += cand.unsigned_abs() as u32;
                picked = true;
                break;
            }
        }
        if !picked {
            return Err(Error::Internal(
                "extremal relation failed to decompose during DP backtrack".into(),
            ));
        }
    }
    debug_assert_eq!(prefix, 0);
    debug_assert_eq!(used, target);
    Ok(Some((target, eps)))
}

// ---------------------------------------------------------------------
// Enumeration, counting, maximal relations
// ---------------------------------------------------------------------

/// All relations of height exactly `d`, in lexicographic ε order.  For
/// families with inverses each relation and its negation are both
/// listed; on the Walsh family every relation appears once in its
/// normalized {0,+1} form.
pub fn enumerate_relations(
    set: &[Character],
    d: u32,
    capacity: &Capacity,
) -> Result<Vec<EpsilonRelation>> {
    if d == 0 {
        return Err(Error::domain("relation height must be ≥ 1"));
    }
    if set.is_empty() {
        return Ok(Vec::new());
    }
    let base = canonical_set(set)?;
    let family = base[0].family();
    if base.len() > NAIVE_MAX {
        return Err(Error::capacity(format!(
            "relation enumeration is exhaustive only up to {NAIVE_MAX} elements (got {})",
            base.len()
        )));
    }
    let mut out = Vec::new();
    foreach_eps_products(&base, family, capacity.enum_leaves, &mut |eps, acc| {
        let h: u32 = eps.iter().map(|&e| e.unsigned_abs() as u32).sum();
        if h == d && acc.is_identity() {
            out.push(
                EpsilonRelation::from_base_eps(&base, eps)
                    .expect("enumerated relations re-validate by construction"),
            );
        }
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// Number of relations of height > `l` (counting ε and −ε separately
/// on families with inverses, once on the Walsh family).
pub fn count_relations_height_gt(set: &[Character], l: u32, capacity: &Capacity) -> Result<u64> {
    if set.is_empty() {
        return Ok(0);
    }
    let base = canonical_set(set)?;
    let family = base[0].family();
    let n = base.len();
    if n <= NAIVE_MAX {
        let mut count = 0u64;
        foreach_eps_products(&base, family, capacity.enum_leaves, &mut |eps, acc| {
            let h: u32 = eps.iter().map(|&e| e.unsigned_abs() as u32).sum();
            if h > l && acc.is_identity() {
                count += 1;
            }
            ControlFlow::Continue(())
        })?;
        return Ok(count);
    }
    if n <= MITM_MAX {
        let split = n / 2;
        let (first, second) = base.split_at(split);
        let table = half_counts(second, family, capacity.enum_leaves)?;
        let mut count = 0u64;
        foreach_eps_products(first, family, capacity.enum_leaves, &mut |eps, acc| {
            let h1: u32 = eps.iter().map(|&e| e.unsigned_abs() as u32).sum();
            let inv = acc
                .snapshot()
                .inverse()
                .expect("half products of valid sets negate without overflow");
            for (h2, c) in counts_for(&table, &inv) {
                if h1 + h2 as u32 > l {
                    count += c;
                }
            }
            ControlFlow::Continue(())
        })?;
        return Ok(count);
    }
    Err(Error::capacity(format!(
        "relation counting supports at most {MITM_MAX} elements (got {n})"
    )))
}

/// A relation of maximal height (≤ `cap` when given), or `None` when
/// the set is quasi-independent.  Ties are broken by the lexicographic
/// order of the raw ε-vector over the sorted base (−1 < 0 < +1); no
/// sign normalization is applied, so the answer is exactly the first
/// maximal-height relation in ε order.
pub fn max_height_relation(
    set: &[Character],
    cap: Option<u32>,
    capacity: &Capacity,
) -> Result<Option<EpsilonRelation>> {
    if set.is_empty() {
        return Ok(None);
    }
    if let Some(0) = cap {
        return Ok(None);
    }
    let base = canonical_set(set)?;
    let family = base[0].family();
    let n = base.len();
    let goal = Goal::Max { cap };
    let found = if n <= NAIVE_MAX {
        decide_extremal(&base, family, goal, capacity, Strategy::Naive)?
    } else if n <= MITM_MAX {
        decide_extremal(&base, family, goal, capacity, Strategy::Mitm)?
    } else if family == Family::Z {
        let found = dp_relation_z(&z_values(&base)?, Objective::Max, capacity)?;
        if let (Some((h, _)), Some(c)) = (&found, cap) {
            if *h > c {
                return Err(Error::capacity(
                    "height-capped maximal search beyond the enumeration range needs \
                     the unconstrained maximum to fit the cap",
                ));
            }
        }
        found
    } else {
        return Err(Error::capacity(format!(
            "maximal relation search supports at most {MITM_MAX} elements for this family (got {n})"
        )));
    };
    Ok(found.map(|(_, eps)| {
        EpsilonRelation::from_base_eps(&base, &eps)
            .expect("searched relations re-validate by construction")
    }))
}

// ---------------------------------------------------------------------
// Constrained word search
// ---------------------------------------------------------------------

/// Find words ρ_k over the blocks Λ_k with heights d(ρ_k) ≤ cap_k and
/// ∏ ρ_k = target, or `None` if no such system exists.  Exact: built on
/// windowed BFS reachability over signed sums (integer family only).
pub fn constrained_word_search(
    blocks: &[(Vec<Character>, u32)],
    target: &Character,
    capacity: &Capacity,
) -> Result<Option<Vec<SignedWord>>> {
    let Character::Z { n: target_sum } = target else {
        return Err(Error::domain(
            "constrained word search supports the integer family",
        ));
    };
    let mut reach_blocks: Vec<(Vec<i128>, u32)> = Vec::with_capacity(blocks.len());
    let mut bases: Vec<Vec<Character>> = Vec::with_capacity(blocks.len());
    for (set, cap) in blocks {
        let base = canonical_set(set)?;
        let values = z_values(&base)?;
        reach_blocks.push((values, *cap));
        bases.push(base);
    }
    let reach = MultiReach::build(reach_blocks, capacity.dp_states)?;
    let Some(decomposed) = reach.decompose(*target_sum) else {
        return Ok(None);
    };
    let mut words = Vec::with_capacity(bases.len());
    for (k, word) in decomposed.into_iter().enumerate() {
        let map: BTreeMap<Character, i64> = word
            .into_iter()
            .map(|(idx, e)| (bases[k][idx].clone(), e))
            .collect();
        words.push(SignedWord::new(Family::Z, map)?);
    }
    Ok(Some(words))
}

// ---------------------------------------------------------------------
// Word-count bound
// ---------------------------------------------------------------------

/// The bound N(d,q) ≤ 2^{min(d,q)}·binom(d+q, q) on the number of words
/// of height d over q characters, exactly, in arbitrary precision.
pub fn n_bound(d: u64, q: u64) -> BigUint {
    let mut result = BigUint::from(1u32) << d.min(q);
    // binom(d+q, q) = ∏_{i=1..q} (d+i)/i, exact at every step
    for i in 1..=q {
        result = result * BigUint::from(d + i) / BigUint::from(i);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps() -> Capacity {
        Capacity::default()
    }

    fn zs(values: &[i128]) -> Vec<Character> {
        values.iter().map(|&v| Character::z(v)).collect()
    }

    fn rel(pairs: &[(i128, i8)]) -> EpsilonRelation {
        EpsilonRelation::new(
            pairs
                .iter()
                .map(|&(v, e)| (Character::z(v), e))
                .collect::<BTreeMap<_, _>>(),
        )
        .unwrap()
    }

    #[test]
    fn empty_set_is_vacuously_qi() {
        assert!(is_quasi_independent(&[], &caps()).unwrap().is_qi());
        assert!(qi_decide_fast_z(&[], &caps()).unwrap().is_qi());
    }

    #[test]
    fn identity_member_is_a_height_one_witness() {
        let out = is_quasi_independent(&zs(&[0, 5]), &caps()).unwrap();
        assert_eq!(out.method(), DecisionMethod::IdentityMember);
        let w = out.witness().unwrap();
        assert_eq!(w.height(), 1);
        assert_eq!(w.coefficient(&Character::z(0)), 1);
    }

    #[test]
    fn one_two_three_has_the_canonical_witness() {
        let out = is_quasi_independent(&zs(&[1, 2, 3]), &caps()).unwrap();
        assert!(!out.is_qi());
        let w = out.witness().unwrap();
        assert_eq!(w.height(), 3);
        assert_eq!(*w, rel(&[(1, 1), (2, 1), (3, -1)]));
    }

    #[test]
    fn ratio_two_sets_decide_by_lacunarity() {
        let out = is_quasi_independent(&zs(&[1, 2, 4]), &caps()).unwrap();
        assert!(out.is_qi());
        assert_eq!(out.method(), DecisionMethod::Lacunarity);
        // negative payloads and unsorted input work too
        let out = is_quasi_independent(&zs(&[-8, 2, -1, 4]), &caps()).unwrap();
        assert!(out.is_qi());
    }

    #[test]
    fn lacunarity_requires_distinct_absolute_values() {
        // {n, −n} has the relation λ₁λ₂ = 1; must not be called lacunary
        let out = is_quasi_independent(&zs(&[3, -3]), &caps()).unwrap();
        assert!(!out.is_qi());
        assert_eq!(out.witness().unwrap().height(), 2);
    }

    #[test]
    fn enumerate_and_count_small_sets() {
        let d3 = enumerate_relations(&zs(&[1, 2, 3]), 3, &caps()).unwrap();
        assert_eq!(d3.len(), 2);
        assert_eq!(d3[0], rel(&[(1, -1), (2, -1), (3, 1)]));
        assert_eq!(d3[1], rel(&[(1, 1), (2, 1), (3, -1)]));
        assert!(enumerate_relations(&zs(&[1, 2, 3]), 2, &caps())
            .unwrap()
            .is_empty());
        assert_eq!(
            count_relations_height_gt(&zs(&[1, 2, 3]), 2, &caps()).unwrap(),
            2
        );
        assert_eq!(
            count_relations_height_gt(&zs(&[1, 2, 3]), 3, &caps()).unwrap(),
            0
        );
        assert_eq!(
            count_relations_height_gt(&zs(&[1, 2, 4]), 0, &caps()).unwrap(),
            0
        );
        assert!(enumerate_relations(&zs(&[1, 2, 3]), 0, &caps()).is_err());
    }

    #[test]
    fn max_height_relation_breaks_ties_lexicographically() {
        let m = max_height_relation(&zs(&[1, 2, 3, 6]), None, &caps())
            .unwrap()
            .unwrap();
        assert_eq!(m.height(), 4);
        assert_eq!(m, rel(&[(1, -1), (2, -1), (3, -1), (6, 1)]));
        assert!(max_height_relation(&zs(&[1, 2, 4, 8]), None, &caps())
            .unwrap()
            .is_none());
        // cap restricts the answer to lower heights
        let m3 = max_height_relation(&zs(&[1, 2, 3, 6]), Some(3), &caps())
            .unwrap()
            .unwrap();
        assert_eq!(m3.height(), 3);
    }

    #[test]
    fn dp_matches_enumeration_on_spec_examples() {
        let out = qi_decide_fast_z(&zs(&[1, 2, 4, 8, 16]), &caps()).unwrap();
        assert!(out.is_qi());
        assert_eq!(out.method(), DecisionMethod::SignedSumDp);

        let big: Vec<Character> = (1..=100).map(|v| Character::z(v)).collect();
        let out = qi_decide_fast_z(&big, &caps()).unwrap();
        let w = out.witness().unwrap();
        assert_eq!(w.height(), 3);
        assert_eq!(*w, rel(&[(1, 1), (2, 1), (3, -1)]));
    }

    #[test]
    fn dp_handles_the_powers_of_two_example() {
        let set: Vec<Character> = (0..20).map(|j| Character::z(1 << j)).collect();
        let out = qi_decide_fast_z(&set, &caps()).unwrap();
        assert!(out.is_qi());
    }

    #[test]
    fn mitm_agrees_with_dp_on_mid_sized_sets() {
        // 16 elements forces the meet-in-the-middle route
        let set: Vec<Character> = (1..=16).map(|v| Character::z(v)).collect();
        let mitm = is_quasi_independent(&set, &caps()).unwrap();
        assert_eq!(mitm.method(), DecisionMethod::MeetInMiddle);
        let dp = qi_decide_fast_z(&set, &caps()).unwrap();
        assert_eq!(mitm.is_qi(), dp.is_qi());
        assert_eq!(mitm.witness(), dp.witness());

        // a qi 16-element set through both routes
        let set: Vec<Character> = (0..16).map(|j| Character::z((1 << j) + 0)).collect();
        let via_ladder = qi_decide_fast_z(&set, &caps()).unwrap();
        assert!(via_ladder.is_qi());
        let direct =
            mitm_extremal(&canonical_set(&set).unwrap(), Family::Z, Goal::Min, &caps()).unwrap();
        assert!(direct.is_none());
    }

    #[test]
    fn walsh_relations_normalize_to_plus_one() {
        let set = vec![
            Character::walsh([0]),
            Character::walsh([1]),
            Character::walsh([0, 1]),
        ];
        let out = is_quasi_independent(&set, &caps()).unwrap();
        let w = out.witness().unwrap();
        assert_eq!(w.height(), 3);
        assert!(w.eps().values().all(|&e| e == 1));
        // each Walsh relation is listed once, not in ± pairs
        let d3 = enumerate_relations(&set, 3, &caps()).unwrap();
        assert_eq!(d3.len(), 1);
    }

    #[test]
    fn steinhaus_relations_work() {
        let set = vec![
            Character::free([(0, 1)]),
            Character::free([(1, 1)]),
            Character::free([(0, 1), (1, 1)]),
        ];
        let out = is_quasi_independent(&set, &caps()).unwrap();
        let w = out.witness().unwrap();
        assert_eq!(w.height(), 3);
        assert!(is_quasi_independent(&set[..2], &caps()).unwrap().is_qi());
    }

    #[test]
    fn curated_prime_block_is_qi() {
        assert!(is_quasi_independent(&zs(&[3, 5, 7, 11]), &caps())
            .unwrap()
            .is_qi());
    }

    #[test]
    fn relation_serde_round_trips() {
        let r = rel(&[(1, 1), (2, 1), (3, -1)]);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"eps":{"1":1,"2":1,"3":-1},"height":3}"#);
        let back: EpsilonRelation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);

        // Walsh and coordinate keys
        let w = EpsilonRelation::new(BTreeMap::from([
            (Character::walsh([0]), 1),
            (Character::walsh([1]), 1),
            (Character::walsh([0, 1]), 1),
        ]))
        .unwrap();
        let json = serde_json::to_string(&w).unwrap();
        let back: EpsilonRelation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);

        let f = EpsilonRelation::new(BTreeMap::from([
            (Character::free([(0, 1)]), 1),
            (Character::free([(1, 1)]), 1),
            (Character::free([(0, 1), (1, 1)]), -1),
        ]))
        .unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let back: EpsilonRelation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);

        // height mismatch is rejected
        let bad = r#"{"eps":{"1":1,"2":1,"3":-1},"height":2}"#;
        assert!(serde_json::from_str::<EpsilonRelation>(bad).is_err());
        // invalid relation is rejected
        let bad = r#"{"eps":{"1":1,"2":1},"height":2}"#;
        assert!(serde_json::from_str::<EpsilonRelation>(bad).is_err());
    }

    #[test]
    fn signed_word_basics_and_serde() {
        let w = SignedWord::new(
            Family::Z,
            BTreeMap::from([(Character::z(5), 2), (Character::z(3), 0)]),
        )
        .unwrap();
        assert_eq!(w.height(), 2);
        assert_eq!(w.product().unwrap(), Character::z(10));
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, r#"{"family":"Z","exponents":{"5":2},"height":2}"#);
        let back: SignedWord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);

        let e = SignedWord::empty(Family::Walsh);
        assert_eq!(e.height(), 0);
        assert!(e.product().unwrap().is_identity());
        let back: SignedWord = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn constrained_search_matches_spec_examples() {
        let found = constrained_word_search(&[(zs(&[5]), 2)], &Character::z(10), &caps())
            .unwrap()
            .unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].exponents()[&Character::z(5)], 2);

        assert!(
            constrained_word_search(&[(zs(&[5]), 1)], &Character::z(10), &caps())
                .unwrap()
                .is_none()
        );

        let found = constrained_word_search(
            &[(zs(&[3, 5]), 2), (zs(&[7]), 1)],
            &Character::z(15),
            &caps(),
        )
        .unwrap()
        .unwrap();
        let total: i128 = found
            .iter()
            .map(|w| {
                let Character::Z { n } = w.product().unwrap() else {
                    panic!()
                };
                n
            })
            .sum();
        assert_eq!(total, 15);
        assert!(found[0].height() <= 2 && found[1].height() <= 1);
    }

    #[test]
    fn n_bound_values() {
        assert_eq!(n_bound(1, 1), BigUint::from(4u32));
        assert_eq!(n_bound(2, 1), BigUint::from(6u32));
        assert_eq!(n_bound(0, 7), BigUint::from(1u32));
        assert_eq!(n_bound(3, 0), BigUint::from(1u32));
        // 2^{min(3,2)}·binom(5,2) = 4·10
        assert_eq!(n_bound(3, 2), BigUint::from(40u32));
    }

    #[test]
    fn n_bound_dominates_exact_word_counts() {
        // exact number of words of height d over q integers, by walk
        for q in 1usize..=4 {
            let base: Vec<i128> = (0..q as i128).map(|i| 10i128.pow(i as u32 + 1)).collect();
            for d in 1u64..=5 {
                let mut exact = 0u64;
                count_words(&base, d, 0, &mut exact);
                assert!(
                    BigUint::from(exact) <= n_bound(d, q as u64),
                    "N({d},{q}): exact {exact} exceeds bound {}",
                    n_bound(d, q as u64)
                );
            }
        }
    }

    // number of exponent vectors (n_1..n_q) with Σ|n_i| = d
    fn count_words(base: &[i128], d: u64, i: usize, acc: &mut u64) {
        if i == base.len() {
            if d == 0 {
                *acc += 1;
            }
            return;
        }
        for e in -(d as i64)..=(d as i64) {
            let used = e.unsigned_abs();
            if used <= d {
                count_words(base, d - used, i + 1, acc);
            }
        }
    }

    #[test]
    fn capacity_errors_are_reported() {
        let tight = Capacity::uniform(10);
        let r = is_quasi_independent(&zs(&[1, 2, 3, 5, 9]), &tight);
        assert!(matches!(r, Err(Error::Capacity(_))));
        let huge: Vec<Character> = (0..40)
            .map(|j| Character::free([(j, 1), (j + 1, 3)]))
            .collect();
        let r = is_quasi_independent(&huge, &caps());
        assert!(matches!(r, Err(Error::Capacity(_))));
    }
}
