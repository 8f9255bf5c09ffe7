//! Randomized extraction of quasi-independent structure.
//!
//! Two algorithms, both Las Vegas: outputs are always certified by
//! exact re-verification, and a failed draw is resampled rather than
//! ever returned.
//!
//! * [`extract_qi_random`] — from a set whose relation counts are
//!   controlled (the regime of a Rudin constant C), Bernoulli selection
//!   at density η = 1/(4Ce) followed by removal of one maximal-height
//!   relation yields a quasi-independent subset of proportional size
//!   (target b = 1/(16Ce)).  Removing a *maximal* relation is what
//!   makes the cleanup sound: two disjoint relations would concatenate
//!   into a taller one.
//! * [`cb_extract`] — the three-stage pipeline turning a proportional
//!   quasi-independence property into a quasi-independent subset
//!   carrying a fixed fraction of an arbitrary weight: dyadic rounding
//!   (½), per-level thinning by the oracle (b), geometric selection of
//!   one level per size grade (1/2R), parity halving (½), then either
//!   termination at the base block or the probabilistic second stage
//!   (density ¼, certified zero forbidden cross-block relations) and
//!   the third-stage removal of maximal permitted systems.  The final
//!   union is re-verified quasi-independent by an exact oracle before
//!   it is returned.
//!
//! Every random draw comes from a ChaCha substream keyed by
//! SHA-256(seed ‖ stage tag ‖ attempt), so traces and certificates are
//! reproducible byte for byte and independent stages never share
//! randomness.

use crate::capacity::Capacity;
use crate::characters::{canonical_set, z_values, Character, Family};
use crate::error::{Error, Result};
use crate::relations::{
    is_quasi_independent, max_height_relation, parse_key, DecisionMethod, EpsilonRelation,
    QiOutcome, SignedWord,
};
use crate::sums::MultiReach;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::ops::ControlFlow;

/// Relative slack when checking the stage inequalities (pure float
/// bookkeeping; the quantities compared are sums of powers of two).
const STAGE_TOL: f64 = 1e-9;

/// A dedicated random stream for one stage attempt: ChaCha8 keyed by
/// SHA-256(seed ‖ tag ‖ index).
fn substream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// A u64 sub-seed derived the same way, for handing to nested
/// extractions.
fn subseed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

// ---------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------

/// Parameters shared by the extraction algorithms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractParams {
    /// Rudin constant hypothesis C > 1/(4e); η = 1/(4Ce) must land in
    /// (0,1).
    pub c_rudin: f64,
    /// Gradation ratio R > 1 for the pipeline.
    pub r: f64,
    /// Target quasi-independent proportion; defaults to 1/(16Ce).
    #[serde(default)]
    pub b: Option<f64>,
    /// Resampling cap for every Las Vegas loop.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    pub seed: u64,
}

fn default_max_attempts() -> u32 {
    64
}

impl ExtractParams {
    pub fn new(c_rudin: f64, r: f64, seed: u64) -> Result<Self> {
        let params = ExtractParams {
            c_rudin,
            r,
            b: None,
            max_attempts: default_max_attempts(),
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.c_rudin.is_finite() || self.c_rudin <= 0.0 {
            return Err(Error::domain("the Rudin constant C must be positive"));
        }
        let eta = self.eta();
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::domain(format!(
                "η = 1/(4Ce) = {eta} must lie in (0,1); C must exceed 1/(4e) ≈ 0.0920"
            )));
        }
        if !self.r.is_finite() || self.r <= 1.0 {
            return Err(Error::domain("the gradation ratio R must exceed 1"));
        }
        if let Some(b) = self.b {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::domain("the proportion b must lie in (0,1]"));
            }
        }
        if self.max_attempts == 0 {
            return Err(Error::domain("max_attempts must be at least 1"));
        }
        Ok(())
    }

    /// Selection density η = 1/(4Ce).
    pub fn eta(&self) -> f64 {
        1.0 / (4.0 * self.c_rudin * std::f64::consts::E)
    }

    /// The proportion b, explicit or the default η/4 = 1/(16Ce).
    pub fn b_value(&self) -> f64 {
        self.b.unwrap_or(self.eta() / 4.0)
    }
}

// ---------------------------------------------------------------------
// (CR) ⇒ (CP): random selection + maximal relation removal
// ---------------------------------------------------------------------

/// A certified quasi-independent extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extraction {
    /// The quasi-independent subset, canonically ordered.
    pub subset: Vec<Character>,
    /// Attempts consumed (1 = first draw accepted).
    pub attempts: u32,
    /// Selection density used.
    pub eta: f64,
    /// Size of the accepted Bernoulli draw D.
    pub sampled: usize,
    /// The maximal-height relation removed from D, if D was not already
    /// quasi-independent.
    pub removed: Option<EpsilonRelation>,
    /// How the final subset was re-verified.
    pub verified_by: DecisionMethod,
}

/// Extract a quasi-independent subset by Bernoulli selection at density
/// η = 1/(4Ce) and removal of one maximal-height relation.
///
/// A draw D is accepted when |D| > η|Λ|/2 and D has no relation of
/// height above ℓ = η|Λ|/4 (exact check).  Removing the support of a
/// *maximal-height* relation then leaves a quasi-independent set: a
/// surviving relation would be disjoint from the removed one, and the
/// two together would form a strictly taller relation.  The result is
/// re-verified; a non-quasi-independent survivor is therefore an
/// internal error, never an output.
pub fn extract_qi_random(
    lambda: &[Character],
    params: &ExtractParams,
    capacity: &Capacity,
) -> Result<Extraction> {
    params.validate()?;
    let base = canonical_set(lambda)?;
    if base[0].family() == Family::Walsh {
        return Err(Error::domain(
            "order-2 characters are excluded from this extraction",
        ));
    }
    if base.iter().any(|g| g.is_identity()) {
        return Err(Error::domain(
            "the identity cannot join a quasi-independent set",
        ));
    }
    let n = base.len();
    let eta = params.eta();
    let ell = eta * n as f64 / 4.0;

    let mut last_reject = String::from("no draw accepted");
    for attempt in 1..=params.max_attempts {
        let mut rng = substream(params.seed, "extract-qi", attempt as u64);
        let sampled: Vec<Character> = base
            .iter()
            .filter(|_| rng.gen::<f64>() < eta)
            .cloned()
            .collect();
        if (sampled.len() as f64) <= eta * n as f64 / 2.0 {
            last_reject = format!("draw of size {} below η|Λ|/2", sampled.len());
            continue;
        }
        let tallest = max_height_relation(&sampled, None, capacity)?;
        let (subset, removed) = match tallest {
            None => (sampled.clone(), None),
            Some(rel) => {
                if rel.height() as f64 > ell {
                    last_reject = format!(
                        "draw of size {} carries a relation of height {} > ℓ = {ell:.3}",
                        sampled.len(),
                        rel.height()
                    );
                    continue;
                }
                let keep: Vec<Character> = sampled
                    .iter()
                    .filter(|g| rel.coefficient(g) == 0)
                    .cloned()
                    .collect();
                (keep, Some(rel))
            }
        };
        let outcome = is_quasi_independent(&subset, capacity)?;
        let QiOutcome::QuasiIndependent { method } = outcome else {
            return Err(Error::Internal(
                "survivor of a maximal-relation removal failed re-verification".into(),
            ));
        };
        return Ok(Extraction {
            subset,
            attempts: attempt,
            eta,
            sampled: sampled.len(),
            removed,
            verified_by: method,
        });
    }
    Err(Error::Extraction {
        attempts: params.max_attempts,
        reason: format!("every draw rejected; last: {last_reject}"),
    })
}

// ---------------------------------------------------------------------
// Weighted sets
// ---------------------------------------------------------------------

/// A finite single-family character set carrying positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSet {
    family: Family,
    elements: BTreeMap<Character, f64>,
}

impl WeightedSet {
    pub fn new(
        family: Family,
        elements: impl IntoIterator<Item = (Character, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (ch, w) in elements {
            if ch.family() != family {
                return Err(Error::domain("weighted element from a foreign family"));
            }
            if ch.is_identity() {
                return Err(Error::domain("the identity cannot carry weight"));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::domain(format!("weight {w} is not positive")));
            }
            if map.insert(ch, w).is_some() {
                return Err(Error::domain("duplicate weighted element"));
            }
        }
        if map.is_empty() {
            return Err(Error::domain("empty weighted set"));
        }
        Ok(WeightedSet {
            family,
            elements: map,
        })
    }

    pub fn from_z(items: impl IntoIterator<Item = (i128, f64)>) -> Result<Self> {
        WeightedSet::new(
            Family::Z,
            items.into_iter().map(|(n, w)| (Character::z(n), w)),
        )
    }

    /// Counting measure on a plain set.
    pub fn counting(set: &[Character]) -> Result<Self> {
        let base = canonical_set(set)?;
        WeightedSet::new(base[0].family(), base.into_iter().map(|g| (g, 1.0)))
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.elements.values().sum()
    }

    pub fn weight(&self, ch: &Character) -> Option<f64> {
        self.elements.get(ch).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Character, f64)> + '_ {
        self.elements.iter().map(|(g, &w)| (g, w))
    }

    pub fn characters(&self) -> Vec<Character> {
        self.elements.keys().cloned().collect()
    }
}

#[derive(Serialize)]
struct WireWeight {
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<i128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    character: Option<String>,
    w: f64,
}

impl Serialize for WeightedSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            family: Family,
            elements: Vec<WireWeight>,
        }
        let elements = self
            .elements
            .iter()
            .map(|(g, &w)| match g {
                Character::Z { n } => WireWeight {
                    n: Some(*n),
                    character: None,
                    w,
                },
                _ => WireWeight {
                    n: None,
                    character: Some(g.key_string()),
                    w,
                },
            })
            .collect();
        Wire {
            family: self.family,
            elements,
        }
        .serialize(s)
    }
}

/// One wire element: either a bare integer (weight 1) or an object with
/// `n`/`character` and `w`.  Hand-written because untagged enums buffer
/// through a representation with no 128-bit integers.
enum WireElement {
    Bare(i128),
    Tagged {
        n: Option<i128>,
        character: Option<String>,
        w: f64,
    },
}

impl<'de> Deserialize<'de> for WireElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> serde::de::Visitor<'de> for V {
            type Value = WireElement;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an integer or a weighted-element object")
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                Ok(WireElement::Bare(v as i128))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(WireElement::Bare(v as i128))
            }

            fn visit_i128<E: serde::de::Error>(
                self,
                v: i128,
            ) -> std::result::Result<Self::Value, E> {
                Ok(WireElement::Bare(v))
            }

            fn visit_u128<E: serde::de::Error>(
                self,
                v: u128,
            ) -> std::result::Result<Self::Value, E> {
                i128::try_from(v)
                    .map(WireElement::Bare)
                    .map_err(|_| E::custom("element exceeds the i128 range"))
            }

            fn visit_f64<E: serde::de::Error>(self, _: f64) -> std::result::Result<Self::Value, E> {
                Err(E::custom(
                    "bare elements beyond 64 bits lose precision; use {\"n\": …, \"w\": …}",
                ))
            }

            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let (mut n, mut character, mut w) = (None, None, None);
                while let Some(key) = map.next_key::<String>()? {
                    match key.as_str() {
                        "n" => n = Some(map.next_value::<i128>()?),
                        "character" => character = Some(map.next_value::<String>()?),
                        "w" => w = Some(map.next_value::<f64>()?),
                        other => {
                            return Err(A::Error::unknown_field(other, &["n", "character", "w"]))
                        }
                    }
                }
                Ok(WireElement::Tagged {
                    n,
                    character,
                    w: w.unwrap_or(1.0),
                })
            }
        }
        d.deserialize_any(V)
    }
}

impl<'de> Deserialize<'de> for WeightedSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            family: Family,
            elements: Vec<WireElement>,
        }
        let wire = Wire::deserialize(d)?;
        let mut items = Vec::with_capacity(wire.elements.len());
        for el in wire.elements {
            let (ch, w) = match el {
                WireElement::Bare(n) => {
                    if wire.family != Family::Z {
                        return Err(D::Error::custom(
                            "bare integer elements are only valid for family Z",
                        ));
                    }
                    (Character::z(n), 1.0)
                }
                WireElement::Tagged { n, character, w } => {
                    let ch = match (n, character) {
                        (Some(n), None) => {
                            if wire.family != Family::Z {
                                return Err(D::Error::custom(
                                    "field \"n\" is only valid for family Z",
                                ));
                            }
                            Character::z(n)
                        }
                        (None, Some(key)) => {
                            parse_key(&key, wire.family).map_err(D::Error::custom)?
                        }
                        _ => {
                            return Err(D::Error::custom(
                                "each element needs exactly one of \"n\" or \"character\"",
                            ))
                        }
                    };
                    (ch, w)
                }
            };
            items.push((ch, w));
        }
        WeightedSet::new(wire.family, items).map_err(D::Error::custom)
    }
}

// ---------------------------------------------------------------------
// Stage 1.1: dyadic rounding
// ---------------------------------------------------------------------

/// Round every weight down to a power of two and bucket the elements by
/// level: level k holds the elements of rounded weight 2^{−k} (k may be
/// negative).  Since 2^{−k} > ϖ(λ)/2 pointwise, the rounded total keeps
/// at least half the mass.
pub fn dyadic_round(w: &WeightedSet) -> Result<(WeightedSet, BTreeMap<i32, Vec<Character>>)> {
    let mut rounded = Vec::with_capacity(w.len());
    let mut buckets: BTreeMap<i32, Vec<Character>> = BTreeMap::new();
    for (ch, weight) in w.iter() {
        let mut e = weight.log2().floor() as i32;
        // float-proof the exponent: enforce 2^e ≤ weight < 2^{e+1}
        while 2.0_f64.powi(e) > weight {
            e -= 1;
        }
        while 2.0_f64.powi(e + 1) <= weight {
            e += 1;
        }
        let level = -e;
        rounded.push((ch.clone(), 2.0_f64.powi(e)));
        buckets.entry(level).or_default().push(ch.clone());
    }
    let w1 = WeightedSet::new(w.family(), rounded)?;
    if w1.total() < 0.5 * w.total() * (1.0 - STAGE_TOL) {
        return Err(Error::Internal(
            "dyadic rounding lost more than half the mass".into(),
        ));
    }
    Ok((w1, buckets))
}

// ---------------------------------------------------------------------
// Stage 1.2: per-bucket quasi-independent thinning
// ---------------------------------------------------------------------

/// How `cp_thin` realizes the proportional quasi-independence property
/// on each bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QiOracle {
    /// Whole bucket if already quasi-independent, else exact maximum
    /// search up to 12 elements, else random extraction.
    Auto,
    /// Exact maximum quasi-independent subset (≤ 12 elements).
    Exact,
    /// `extract_qi_random` with bucket-specific sub-seeds.
    Random,
}

/// One bucket's selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketSelection {
    /// Dyadic level k (unit weight 2^{−k}).
    pub level: i32,
    pub unit_weight: f64,
    pub elements: Vec<Character>,
    pub selected: Vec<Character>,
    /// |selected| / |elements|.
    pub achieved: f64,
    /// Attempts used by the random oracle (0 for deterministic paths).
    pub oracle_attempts: u32,
}

impl BucketSelection {
    pub fn selected_mass(&self) -> f64 {
        self.unit_weight * self.selected.len() as f64
    }

    pub fn bucket_mass(&self) -> f64 {
        self.unit_weight * self.elements.len() as f64
    }
}

const EXACT_QI_MAX: usize = 12;

/// The maximum quasi-independent subset of a small set: subsets are
/// tried by descending size, ascending bitmask, so the answer is
/// deterministic.
fn exact_max_qi_subset(base: &[Character], capacity: &Capacity) -> Result<Vec<Character>> {
    let n = base.len();
    if n > EXACT_QI_MAX {
        return Err(Error::capacity(format!(
            "exact maximum-qi search is capped at {EXACT_QI_MAX} elements (got {n})"
        )));
    }
    for size in (1..=n).rev() {
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let subset: Vec<Character> = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| base[i].clone())
                .collect();
            if is_quasi_independent(&subset, capacity)?.is_qi() {
                return Ok(subset);
            }
        }
    }
    Err(Error::domain(
        "no quasi-independent subset exists (is the identity present?)",
    ))
}

/// Select a quasi-independent subset of every bucket; the reported
/// proportion is the worst achieved ratio, not a theoretical value.
pub fn cp_thin(
    buckets: &BTreeMap<i32, Vec<Character>>,
    oracle: QiOracle,
    params: &ExtractParams,
    capacity: &Capacity,
) -> Result<(Vec<BucketSelection>, f64)> {
    let mut selections = Vec::new();
    let mut b_achieved = 1.0_f64;
    for (&level, raw) in buckets {
        if raw.is_empty() {
            continue;
        }
        let elements = canonical_set(raw)?;
        let whole_qi = is_quasi_independent(&elements, capacity)?.is_qi();
        let (selected, attempts) = if whole_qi {
            (elements.clone(), 0)
        } else {
            match oracle {
                QiOracle::Exact => (exact_max_qi_subset(&elements, capacity)?, 0),
                QiOracle::Auto if elements.len() <= EXACT_QI_MAX => {
                    (exact_max_qi_subset(&elements, capacity)?, 0)
                }
                _ => {
                    let mut sub = params.clone();
                    sub.seed = subseed(params.seed, "cp-thin", level as i64 as u64);
                    let ext = extract_qi_random(&elements, &sub, capacity)?;
                    (ext.subset, ext.attempts)
                }
            }
        };
        let achieved = selected.len() as f64 / elements.len() as f64;
        b_achieved = b_achieved.min(achieved);
        selections.push(BucketSelection {
            level,
            unit_weight: 2.0_f64.powi(-level),
            elements,
            selected,
            achieved,
            oracle_attempts: attempts,
        });
    }
    if selections.is_empty() {
        return Err(Error::domain("no nonempty buckets to thin"));
    }
    Ok((selections, b_achieved))
}

// ---------------------------------------------------------------------
// Stage 1.3: geometric selection of one level per size grade
// ---------------------------------------------------------------------

/// A surviving block: the selection of level `level`, in size grade
/// `grade` (R^grade ≤ size < R^{grade+1}).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeptBlock {
    pub grade: u32,
    pub level: i32,
    pub unit_weight: f64,
    pub elements: Vec<Character>,
}

impl KeptBlock {
    pub fn mass(&self) -> f64 {
        self.unit_weight * self.elements.len() as f64
    }
}

/// The grade of a block of `size` elements: the largest j with
/// R^j ≤ size, computed by exact repeated multiplication.
fn size_grade(size: usize, r: f64) -> u32 {
    let mut grade = 0u32;
    let mut p = 1.0_f64;
    while p * r <= size as f64 {
        p *= r;
        grade += 1;
    }
    grade
}

/// Keep, within each size grade, only the smallest level (the heaviest
/// unit weight).  Grouping sizes by powers of R costs at most a factor
/// 2R of the selected mass.
pub fn geometric_thin(selections: &[BucketSelection], r: f64) -> Result<Vec<KeptBlock>> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::domain("the gradation ratio R must exceed 1"));
    }
    let mut per_grade: BTreeMap<u32, &BucketSelection> = BTreeMap::new();
    for sel in selections {
        if sel.selected.is_empty() {
            continue;
        }
        let grade = size_grade(sel.selected.len(), r);
        per_grade
            .entry(grade)
            .and_modify(|cur| {
                if sel.level < cur.level {
                    *cur = sel;
                }
            })
            .or_insert(sel);
    }
    Ok(per_grade
        .into_iter()
        .map(|(grade, sel)| KeptBlock {
            grade,
            level: sel.level,
            unit_weight: sel.unit_weight,
            elements: sel.selected.clone(),
        })
        .collect())
}

// ---------------------------------------------------------------------
// Stage 1.4: parity split
// ---------------------------------------------------------------------

/// Keep the heavier of the even-grade and odd-grade block classes (ties
/// go to even).  Consecutive surviving grades then differ by at least
/// 2, so consecutive block sizes jump by a factor ≥ R.
pub fn parity_split(kept: &[KeptBlock]) -> (&'static str, Vec<KeptBlock>) {
    let mass = |parity: u32| -> f64 {
        kept.iter()
            .filter(|b| b.grade % 2 == parity)
            .map(KeptBlock::mass)
            .sum()
    };
    let parity = if mass(0) >= mass(1) { 0 } else { 1 };
    (
        if parity == 0 { "even" } else { "odd" },
        kept.iter()
            .filter(|b| b.grade % 2 == parity)
            .cloned()
            .collect(),
    )
}

// ---------------------------------------------------------------------
// Stage 1.5: the base block
// ---------------------------------------------------------------------

/// Outcome of the base-block rule.
#[derive(Debug, Clone)]
pub enum BaseOutcome {
    /// The pipeline terminates: this (already quasi-independent) block
    /// carries enough mass by itself.
    Done { block: KeptBlock },
    /// Proceed to stages 2–3 with these blocks (grade order; every
    /// block has ≥ R elements and consecutive sizes grow by ≥ R).
    Proceed { blocks: Vec<KeptBlock> },
}

/// Apply the base-block rule: with a single block, or a grade-0 block
/// carrying at least half the mass, terminate with Λ′ = that block;
/// otherwise drop the (light) grade-0 block and proceed.
pub fn handle_base(blocks: Vec<KeptBlock>) -> Result<BaseOutcome> {
    if blocks.is_empty() {
        return Err(Error::domain("no blocks survived the parity split"));
    }
    if blocks.len() == 1 {
        let block = blocks.into_iter().next().expect("length checked");
        return Ok(BaseOutcome::Done { block });
    }
    let total: f64 = blocks.iter().map(KeptBlock::mass).sum();
    if blocks[0].grade == 0 {
        if blocks[0].mass() >= 0.5 * total * (1.0 - STAGE_TOL) {
            let block = blocks.into_iter().next().expect("length checked");
            return Ok(BaseOutcome::Done { block });
        }
        return Ok(BaseOutcome::Proceed {
            blocks: blocks.into_iter().skip(1).collect(),
        });
    }
    Ok(BaseOutcome::Proceed { blocks })
}

// ---------------------------------------------------------------------
// σ-scans: pruned walks over ε-words of one block
// ---------------------------------------------------------------------

/// Which σ heights a scan accepts.
#[derive(Debug, Clone, Copy)]
enum HeightFilter {
    /// d(σ) ≥ bound + 1 (the integer reading of "d(σ) > L").
    Above(u32),
    Exactly(u32),
}

/// Result of a σ-scan: how many σ-words matched (their inverse sum was
/// representable by the companion blocks) and the first match found.
#[derive(Debug, Clone, Default)]
struct ScanResult {
    matches: u64,
    first: Option<(Vec<(Character, i8)>, i128)>,
}

/// Branch-and-bound scan over ε-words of one block.  Elements are
/// walked in decreasing |value| order so that overshooting branches die
/// immediately: a subtree is skipped when even consuming the whole
/// remaining span cannot bring the running sum back inside the
/// companion window.  Pruned subtrees contain no representable sums, so
/// match counts are exact.
struct SigmaScan {
    chars: Vec<Character>,
    values: Vec<i128>,
    /// span[i] = Σ_{t ≥ i} |values[t]|; span[n] = 0.
    span: Vec<i128>,
}

impl SigmaScan {
    fn new(block: &[Character]) -> Result<SigmaScan> {
        let base = canonical_set(block)?;
        let values = z_values(&base)?;
        let mut order: Vec<usize> = (0..base.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(values[i].unsigned_abs()));
        let chars: Vec<Character> = order.iter().map(|&i| base[i].clone()).collect();
        let values: Vec<i128> = order.iter().map(|&i| values[i]).collect();
        let mut span = vec![0i128; values.len() + 1];
        for i in (0..values.len()).rev() {
            span[i] = values[i]
                .checked_abs()
                .and_then(|a| span[i + 1].checked_add(a))
                .ok_or_else(|| Error::domain("signed sum overflow"))?;
        }
        Ok(SigmaScan {
            chars,
            values,
            span,
        })
    }

    /// Count σ with admissible height whose inverse sum the companion
    /// reach contains; stop after `limit` matches (0 = unlimited).
    fn scan(
        &self,
        filter: HeightFilter,
        reach: &MultiReach,
        window: i128,
        sign_order: &[i8; 3],
        limit: u64,
    ) -> ScanResult {
        let mut out = ScanResult::default();
        let mut eps = vec![0i8; self.values.len()];
        let _ = self.walk(
            0, 0, 0, filter, reach, window, sign_order, limit, &mut eps, &mut out,
        );
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        i: usize,
        sum: i128,
        used: u32,
        filter: HeightFilter,
        reach: &MultiReach,
        window: i128,
        sign_order: &[i8; 3],
        limit: u64,
        eps: &mut Vec<i8>,
        out: &mut ScanResult,
    ) -> ControlFlow<()> {
        let n = self.values.len();
        // value prune: every completion stays at distance > window
        if sum.abs() - self.span[i] > window {
            return ControlFlow::Continue(());
        }
        // height prunes
        let left = (n - i) as u32;
        match filter {
            HeightFilter::Above(bound) => {
                if used + left <= bound {
                    return ControlFlow::Continue(());
                }
            }
            HeightFilter::Exactly(h) => {
                if used > h || used + left < h {
                    return ControlFlow::Continue(());
                }
            }
        }
        if i == n {
            let admissible = match filter {
                HeightFilter::Above(bound) => used > bound,
                HeightFilter::Exactly(h) => used == h,
            };
            if admissible && reach.contains(-sum) {
                out.matches += 1;
                if out.first.is_none() {
                    let word: Vec<(Character, i8)> = eps
                        .iter()
                        .enumerate()
                        .filter(|(_, &e)| e != 0)
                        .map(|(t, &e)| (self.chars[t].clone(), e))
                        .collect();
                    out.first = Some((word, sum));
                }
                if limit != 0 && out.matches >= limit {
                    return ControlFlow::Break(());
                }
            }
            return ControlFlow::Continue(());
        }
        for &s in sign_order {
            eps[i] = s;
            let flow = self.walk(
                i + 1,
                sum + (s as i128) * self.values[i],
                used + s.unsigned_abs() as u32,
                filter,
                reach,
                window,
                sign_order,
                limit,
                eps,
                out,
            );
            eps[i] = 0;
            flow?;
        }
        ControlFlow::Continue(())
    }
}

/// Companion reachability for block `j`: words ρ = ∏_{k≠j} ρ_k over the
/// other blocks under per-block height caps.  Returns the reach set,
/// its window (max representable |sum|), and the caps in block order
/// (cap 0 = block unusable).
fn companion_reach(
    blocks: &[Vec<i128>],
    j: usize,
    caps: &[u32],
    capacity: &Capacity,
) -> Result<(MultiReach, i128)> {
    let mut stages = Vec::new();
    let mut window: i128 = 0;
    for (k, values) in blocks.iter().enumerate() {
        if k == j || caps[k] == 0 {
            continue;
        }
        let max_abs = values.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as i128;
        window += caps[k] as i128 * max_abs;
        stages.push((values.clone(), caps[k]));
    }
    let reach = MultiReach::build(stages, capacity.dp_states)?;
    Ok((reach, window))
}

// ---------------------------------------------------------------------
// Stage 2: random selection with certified relation-freeness
// ---------------------------------------------------------------------

/// An accepted second-stage selection with its zero-relation
/// certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage2Outcome {
    pub selected: Vec<Character>,
    pub attempts: u32,
    /// ⌊|Λ_j|/10⌋ — forbidden σ-words have height strictly above this.
    pub height_bound: u32,
    /// Per-block ρ caps ⌊|Λ_j|²/|Λ_k|⌋ (entry j itself is 0).
    pub caps: Vec<u32>,
    /// Max |sum| representable by the companion blocks.
    pub window: i128,
    /// Forbidden (σ,ρ) count at acceptance — always 0.
    pub forbidden: u64,
    /// Independent recount (reversed sign order) — must equal.
    pub recount: u64,
}

/// Select A_j ⊆ Λ_j by Bernoulli(¼), accepting only when
/// |A_j| > |Λ_j|/5 and *no* ε-word σ of A_j with d(σ) > |Λ_j|/10 has
/// its inverse representable as a word ∏_{k≠j} ρ_k over the other
/// blocks within the caps d_k = |Λ_j|²/|Λ_k|.  The check is exhaustive
/// (branch-and-bound over σ, exact reachability over ρ), so acceptance
/// is a certificate, and it is recounted with the reversed enumeration
/// order as a double-entry guard.
pub fn stage2_select(
    j: usize,
    blocks: &[KeptBlock],
    params: &ExtractParams,
    capacity: &Capacity,
) -> Result<Stage2Outcome> {
    let values: Vec<Vec<i128>> = blocks
        .iter()
        .map(|b| z_values(&b.elements))
        .collect::<Result<_>>()?;
    let nj = blocks[j].elements.len();
    let height_bound = (nj / 10) as u32;
    let caps: Vec<u32> = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            if k == j {
                0
            } else {
                ((nj as u128 * nj as u128) / b.elements.len() as u128).min(u32::MAX as u128) as u32
            }
        })
        .collect();
    let (reach, window) = companion_reach(&values, j, &caps, capacity)?;

    let mut last_reject = String::from("no draw accepted");
    for attempt in 1..=params.max_attempts {
        let mut rng = substream(params.seed, &format!("stage2-{j}"), attempt as u64);
        let selected: Vec<Character> = blocks[j]
            .elements
            .iter()
            .filter(|_| rng.gen::<f64>() < 0.25)
            .cloned()
            .collect();
        if 5 * selected.len() <= nj {
            last_reject = format!("selection of size {} at most |Λ_j|/5", selected.len());
            continue;
        }
        if 3u128.saturating_pow(selected.len() as u32) > capacity.enum_leaves as u128 {
            last_reject = format!(
                "selection of size {} exceeds the exhaustive σ-scan budget",
                selected.len()
            );
            continue;
        }
        let scan = SigmaScan::new(&selected)?;
        let forward = scan.scan(
            HeightFilter::Above(height_bound),
            &reach,
            window,
            &[-1, 0, 1],
            1,
        );
        if forward.matches > 0 {
            let (word, sum) = forward.first.expect("a match was counted");
            last_reject = format!(
                "forbidden relation: σ = {} with ρ-sum {}",
                describe_word(&word),
                -sum
            );
            continue;
        }
        // double-entry: independent recount with the reversed sign order
        let recount = scan
            .scan(
                HeightFilter::Above(height_bound),
                &reach,
                window,
                &[1, 0, -1],
                0,
            )
            .matches;
        if recount != 0 {
            return Err(Error::Internal(format!(
                "zero-relation certificate failed its recount ({recount} ≠ 0)"
            )));
        }
        return Ok(Stage2Outcome {
            selected,
            attempts: attempt,
            height_bound,
            caps,
            window,
            forbidden: 0,
            recount,
        });
    }
    Err(Error::Extraction {
        attempts: params.max_attempts,
        reason: format!("no second-stage selection accepted for block {j}; last: {last_reject}"),
    })
}

fn describe_word(word: &[(Character, i8)]) -> String {
    let mut s = String::new();
    for (ch, e) in word {
        if !s.is_empty() {
            s.push_str(" · ");
        }
        s.push_str(&format!("{}^{:+}", ch.key_string(), e));
    }
    if s.is_empty() {
        s.push('1');
    }
    s
}

// ---------------------------------------------------------------------
// Stage 3: removal of maximal permitted systems
// ---------------------------------------------------------------------

/// The third-stage result for one block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage3Outcome {
    pub kept: Vec<Character>,
    pub removed: Vec<Character>,
    /// The σ-word of the removed permitted system, if one existed.
    pub sigma: Option<SignedWord>,
    /// Its companion words ρ_k over the other blocks (block order).
    pub rho: Option<Vec<SignedWord>>,
    pub sigma_height: u32,
}

/// For each block j, search for a permitted system: an ε-word σ of A_j
/// and companion words ρ_k over the other blocks Λ_k with
/// d(ρ_k)·|Λ_k| ≤ d(σ)·|Λ_j| and σ·∏ρ_k = 1.  Remove the support of a
/// σ of maximal height (first in walk order on ties).  Heights above
/// ⌊|Λ_j|/10⌋ need not be searched: such a system would violate the
/// second-stage certificate, whose caps dominate these (h ≤ |Λ_j|
/// gives h·|Λ_j|/|Λ_k| ≤ |Λ_j|²/|Λ_k|).  Every block is searched
/// against the original selections, then pruned.
pub fn stage3_prune(
    blocks: &[KeptBlock],
    selections: &[Stage2Outcome],
    capacity: &Capacity,
) -> Result<Vec<Stage3Outcome>> {
    let block_values: Vec<Vec<i128>> = blocks
        .iter()
        .map(|b| z_values(&b.elements))
        .collect::<Result<_>>()?;
    let mut outcomes = Vec::with_capacity(blocks.len());
    for (j, sel) in selections.iter().enumerate() {
        let nj = blocks[j].elements.len();
        let bound = (nj / 10) as u32;
        let scan = SigmaScan::new(&sel.selected)?;
        let mut found: Option<(Vec<(Character, i8)>, i128, Vec<SignedWord>, u32)> = None;
        for h in (1..=bound).rev() {
            let caps: Vec<u32> = blocks
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    if k == j {
                        0
                    } else {
                        ((h as u128 * nj as u128) / b.elements.len() as u128).min(u32::MAX as u128)
                            as u32
                    }
                })
                .collect();
            let (reach, window) = companion_reach(&block_values, j, &caps, capacity)?;
            let hit = scan.scan(HeightFilter::Exactly(h), &reach, window, &[-1, 0, 1], 1);
            if hit.matches > 0 {
                let (word, sum) = hit.first.expect("a match was counted");
                let decomposition = reach
                    .decompose(-sum)
                    .ok_or_else(|| Error::Internal("reachable sum failed to decompose".into()))?;
                // decomposition is indexed by the blocks actually fed
                // to the reach (k ≠ j with cap ≥ 1, in block order)
                let fed: Vec<usize> = (0..blocks.len())
                    .filter(|&k| k != j && caps[k] >= 1)
                    .collect();
                let mut rho: Vec<SignedWord> = vec![SignedWord::empty(Family::Z); blocks.len()];
                for (slot, word_k) in fed.iter().zip(decomposition) {
                    let exps: BTreeMap<Character, i64> = word_k
                        .into_iter()
                        .map(|(idx, e)| (blocks[*slot].elements[idx].clone(), e))
                        .collect();
                    rho[*slot] = SignedWord::new(Family::Z, exps)?;
                }
                found = Some((word, sum, rho, h));
                break;
            }
        }
        let outcome = match found {
            None => Stage3Outcome {
                kept: sel.selected.clone(),
                removed: Vec::new(),
                sigma: None,
                rho: None,
                sigma_height: 0,
            },
            Some((word, _sum, rho, h)) => {
                let support: Vec<Character> = word.iter().map(|(ch, _)| ch.clone()).collect();
                let kept: Vec<Character> = sel
                    .selected
                    .iter()
                    .filter(|g| !support.contains(g))
                    .cloned()
                    .collect();
                let sigma = SignedWord::new(
                    Family::Z,
                    word.iter().map(|(ch, e)| (ch.clone(), *e as i64)).collect(),
                )?;
                Stage3Outcome {
                    kept,
                    removed: support,
                    sigma: Some(sigma),
                    rho: Some(rho),
                    sigma_height: h,
                }
            }
        };
        if 2 * outcome.kept.len() <= sel.selected.len() {
            return Err(Error::Internal(
                "third-stage pruning removed at least half a selection".into(),
            ));
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------
// The full pipeline
// ---------------------------------------------------------------------

/// Stage mass totals ϖ, ϖ₁..ϖ₅ (ϖ₅ only on the Proceed branch).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StageTotals {
    pub w: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: Option<f64>,
}

/// One proceeding block's full stage-2/stage-3 record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockRun {
    pub block: KeptBlock,
    pub stage2: Stage2Outcome,
    pub stage3: Stage3Outcome,
}

/// Everything a pipeline run did, sufficient to re-check it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub family: Family,
    pub r: f64,
    pub b_achieved: f64,
    pub totals: StageTotals,
    pub buckets: Vec<BucketSelection>,
    pub kept: Vec<KeptBlock>,
    pub parity_kept: String,
    pub base_done: bool,
    pub blocks: Vec<BlockRun>,
    pub final_set: Vec<Character>,
    pub ratio: f64,
}

/// The certificate accompanying an extracted set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CbCertificate {
    pub family: Family,
    pub input_size: usize,
    pub output_size: usize,
    pub total_weight: f64,
    pub output_weight: f64,
    /// ϖ(Λ′)/ϖ(Λ) under the *original* weights.
    pub ratio: f64,
    /// The a-priori bound the run had to beat: b_achieved/(16R) when
    /// the base block terminated the pipeline, b_achieved/(160R) for
    /// the full three stages.
    pub theoretical_c: f64,
    pub b_achieved: f64,
    pub r: f64,
    pub base_done: bool,
    pub verified_by: DecisionMethod,
}

/// A certified pipeline extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CbExtraction {
    pub subset: Vec<Character>,
    pub certificate: CbCertificate,
    pub trace: PipelineTrace,
}

fn check_stage(ok: bool, label: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Internal(format!(
            "stage inequality violated: {label}"
        )))
    }
}

/// Run the full pipeline on a weighted integer set: extract a
/// quasi-independent subset carrying a certified fraction of the total
/// weight.  The returned subset is re-verified by an exact oracle; the
/// trace records every stage quantity and satisfies the stage
/// inequalities ϖ₁ ≥ ½ϖ, ϖ₂ ≥ b·ϖ₁, ϖ₃ ≥ ϖ₂/2R, ϖ₄ ≥ ½ϖ₃ and (when
/// proceeding) ϖ₅ ≥ ½ϖ₄.
pub fn cb_extract(
    w: &WeightedSet,
    params: &ExtractParams,
    oracle: QiOracle,
    capacity: &Capacity,
) -> Result<CbExtraction> {
    params.validate()?;
    if w.family() != Family::Z {
        return Err(Error::domain(
            "the weighted pipeline runs on integer characters only in this version",
        ));
    }
    let r = params.r;
    let total = w.total();

    // 1.1 dyadic rounding
    let (w1, buckets) = dyadic_round(w)?;
    let t1 = w1.total();
    check_stage(t1 >= 0.5 * total * (1.0 - STAGE_TOL), "ϖ₁ ≥ ½ϖ")?;

    // 1.2 per-bucket thinning
    let (selections, b_achieved) = cp_thin(&buckets, oracle, params, capacity)?;
    let t2: f64 = selections.iter().map(BucketSelection::selected_mass).sum();
    check_stage(t2 >= b_achieved * t1 * (1.0 - STAGE_TOL), "ϖ₂ ≥ b·ϖ₁")?;

    // 1.3 geometric grade selection
    let kept = geometric_thin(&selections, r)?;
    let t3: f64 = kept.iter().map(KeptBlock::mass).sum();
    check_stage(t3 >= t2 / (2.0 * r) * (1.0 - STAGE_TOL), "ϖ₃ ≥ ϖ₂/2R")?;

    // 1.4 parity split
    let (parity_kept, survivors) = parity_split(&kept);
    let t4: f64 = survivors.iter().map(KeptBlock::mass).sum();
    check_stage(t4 >= 0.5 * t3 * (1.0 - STAGE_TOL), "ϖ₄ ≥ ½ϖ₃")?;

    // 1.5 base block
    let (base_done, blocks, t5) = match handle_base(survivors)? {
        BaseOutcome::Done { block } => (true, vec![block], None),
        BaseOutcome::Proceed { blocks } => {
            let t5: f64 = blocks.iter().map(KeptBlock::mass).sum();
            check_stage(t5 >= 0.5 * t4 * (1.0 - STAGE_TOL), "ϖ₅ ≥ ½ϖ₄")?;
            for (a, b) in blocks.iter().zip(blocks.iter().skip(1)) {
                check_stage(
                    b.elements.len() >= (r * a.elements.len() as f64).floor() as usize
                        && a.elements.len() as f64 >= r,
                    "block sizes grow by R",
                )?;
            }
            (false, blocks, Some(t5))
        }
    };

    // stages 2–3 (skipped on the Done branch)
    let (final_set, runs) = if base_done {
        (blocks[0].elements.clone(), Vec::new())
    } else {
        let mut stage2 = Vec::with_capacity(blocks.len());
        for j in 0..blocks.len() {
            stage2.push(stage2_select(j, &blocks, params, capacity)?);
        }
        let stage3 = stage3_prune(&blocks, &stage2, capacity)?;
        let mut union: Vec<Character> = Vec::new();
        for out in &stage3 {
            union.extend(out.kept.iter().cloned());
        }
        let runs: Vec<BlockRun> = blocks
            .iter()
            .zip(stage2)
            .zip(stage3)
            .map(|((block, s2), s3)| BlockRun {
                block: block.clone(),
                stage2: s2,
                stage3: s3,
            })
            .collect();
        (canonical_set(&union)?, runs)
    };

    // final certification
    let outcome = is_quasi_independent(&final_set, capacity)?;
    let QiOutcome::QuasiIndependent { method } = outcome else {
        return Err(Error::Internal(
            "pipeline output failed quasi-independence re-verification".into(),
        ));
    };
    let output_weight: f64 = final_set.iter().map(|g| w.weight(g).unwrap_or(0.0)).sum();
    let ratio = output_weight / total;
    let theoretical_c = if base_done {
        b_achieved / (16.0 * r)
    } else {
        b_achieved / (160.0 * r)
    };
    check_stage(ratio >= theoretical_c * (1.0 - STAGE_TOL), "ϖ(Λ′) ≥ c·ϖ(Λ)")?;

    let totals = StageTotals {
        w: total,
        w1: t1,
        w2: t2,
        w3: t3,
        w4: t4,
        w5: t5,
    };
    Ok(CbExtraction {
        subset: final_set.clone(),
        certificate: CbCertificate {
            family: w.family(),
            input_size: w.len(),
            output_size: final_set.len(),
            total_weight: total,
            output_weight,
            ratio,
            theoretical_c,
            b_achieved,
            r,
            base_done,
            verified_by: method,
        },
        trace: PipelineTrace {
            family: w.family(),
            r,
            b_achieved,
            totals,
            buckets: selections,
            kept,
            parity_kept: parity_kept.to_string(),
            base_done,
            blocks: runs,
            final_set,
            ratio,
        },
    })
}

/// The default gradation ratio: the smallest integer R ≥ 2 with
/// s(R) = 2·Σ_{m≥1} R^{−m}·ln(20·R^{2m}) below (ln 2)/20.  The series
/// sums in closed form to 2[ln20/(R−1) + 2·lnR·R/(R−1)²].
pub fn auto_r() -> u32 {
    let target = std::f64::consts::LN_2 / 20.0;
    let s = |r: f64| -> f64 {
        2.0 * (20.0_f64.ln() / (r - 1.0) + 2.0 * r.ln() * r / ((r - 1.0) * (r - 1.0)))
    };
    let mut r = 2u32;
    while s(r as f64) >= target {
        r += 1;
    }
    r
}

/// The reference three-block instance the pipeline is exercised on:
/// four small primes at weight 1, a lacunary 16-element block at ¼, and
/// 64 spread multiples of 2^14 at 1/32.  With R = 4 the three blocks
/// land in grades 1, 2 and 3; parity keeps the primes and the large
/// block, and the second stage certifies zero cross relations because
/// every signed sum of the large block is a nonzero multiple of 2^14
/// while the companion window stays below it.
pub fn curated_instance() -> WeightedSet {
    let mut items: Vec<(i128, f64)> = vec![(3, 1.0), (5, 1.0), (7, 1.0), (11, 1.0)];
    for i in 0..16 {
        items.push((9 << i, 0.25));
    }
    for i in 1..=64u32 {
        items.push(((1i128 << 14) * ((1i128 << i) - 1), 1.0 / 32.0));
    }
    WeightedSet::from_z(items).expect("the reference instance is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qi_decide_fast_z;

    fn caps() -> Capacity {
        Capacity::default()
    }

    fn zset(values: &[i128]) -> Vec<Character> {
        values.iter().map(|&n| Character::z(n)).collect()
    }

    #[test]
    fn params_expose_the_canonical_constants() {
        let p = ExtractParams::new(1.0, 4.0, 7).unwrap();
        let e = std::f64::consts::E;
        assert!((p.eta() - 1.0 / (4.0 * e)).abs() < 1e-15);
        assert!((p.b_value() - 1.0 / (16.0 * e)).abs() < 1e-15);
        assert!(ExtractParams::new(0.05, 4.0, 7).is_err()); // η ≥ 1
        assert!(ExtractParams::new(1.0, 1.0, 7).is_err()); // R ≤ 1
    }

    #[test]
    fn extraction_on_a_qi_set_needs_no_removal() {
        let lambda = zset(&(0..20).map(|j| 1i128 << j).collect::<Vec<_>>());
        let params = ExtractParams::new(1.0, 4.0, 11).unwrap();
        let ext = extract_qi_random(&lambda, &params, &caps()).unwrap();
        assert!(ext.removed.is_none());
        assert_eq!(ext.subset.len(), ext.sampled);
        assert!(qi_decide_fast_z(&ext.subset, &caps()).unwrap().is_qi());
        // determinism
        let again = extract_qi_random(&lambda, &params, &caps()).unwrap();
        assert_eq!(ext.subset, again.subset);
        assert_eq!(ext.attempts, again.attempts);
    }

    #[test]
    fn extraction_from_a_dense_interval_is_verified() {
        let lambda = zset(&(1..=40).collect::<Vec<_>>());
        let params = ExtractParams::new(1.0, 4.0, 42).unwrap();
        let ext = extract_qi_random(&lambda, &params, &caps()).unwrap();
        assert!(!ext.subset.is_empty());
        assert!(qi_decide_fast_z(&ext.subset, &caps()).unwrap().is_qi());
        // the removed relation's support is disjoint from the output
        if let Some(rel) = &ext.removed {
            assert!(ext.subset.iter().all(|g| rel.coefficient(g) == 0));
        }
        // at ℓ < 1 an accepted draw has no relation at all, so it must
        // have at least 2 elements
        assert!(ext.subset.len() >= 2);
    }

    #[test]
    fn extraction_rejects_bad_domains() {
        let params = ExtractParams::new(1.0, 4.0, 1).unwrap();
        let with_identity = zset(&[0, 3, 5]);
        assert!(matches!(
            extract_qi_random(&with_identity, &params, &caps()),
            Err(Error::Domain(_))
        ));
        let walsh = vec![Character::rademacher(0), Character::rademacher(1)];
        assert!(matches!(
            extract_qi_random(&walsh, &params, &caps()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dyadic_rounding_buckets_by_powers_of_two() {
        let w = WeightedSet::from_z([(1, 0.7), (2, 1.0), (3, 5.0), (4, 0.25)]).unwrap();
        let (w1, buckets) = dyadic_round(&w).unwrap();
        assert_eq!(w1.weight(&Character::z(1)), Some(0.5)); // level 1
        assert_eq!(w1.weight(&Character::z(2)), Some(1.0)); // level 0
        assert_eq!(w1.weight(&Character::z(3)), Some(4.0)); // level −2
        assert_eq!(w1.weight(&Character::z(4)), Some(0.25)); // level 2
        assert_eq!(buckets[&1], zset(&[1]));
        assert_eq!(buckets[&0], zset(&[2]));
        assert_eq!(buckets[&-2], zset(&[3]));
        assert_eq!(buckets[&2], zset(&[4]));
        assert!(w1.total() >= 0.5 * w.total());
    }

    #[test]
    fn cp_thin_takes_whole_qi_buckets_and_maximal_subsets_otherwise() {
        let params = ExtractParams::new(1.0, 4.0, 3).unwrap();
        let mut buckets = BTreeMap::new();
        buckets.insert(0, zset(&[1, 2, 3])); // 1+2−3: not qi
        buckets.insert(1, zset(&[1, 2, 4])); // qi
        let (sel, b) = cp_thin(&buckets, QiOracle::Auto, &params, &caps()).unwrap();
        assert_eq!(sel[0].selected, zset(&[1, 2])); // first maximal subset
        assert!((sel[0].achieved - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(sel[1].selected, zset(&[1, 2, 4]));
        assert!((b - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn geometric_thinning_keeps_the_heaviest_level_per_grade() {
        let mk = |level: i32, values: &[i128]| BucketSelection {
            level,
            unit_weight: 2.0_f64.powi(-level),
            elements: zset(values),
            selected: zset(values),
            achieved: 1.0,
            oracle_attempts: 0,
        };
        // sizes 3 and 5 with R = 4: grades 0 and 1, both kept
        let kept = geometric_thin(&[mk(0, &[1, 2, 4]), mk(1, &[1, 2, 4, 8, 16])], 4.0).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].grade, 0);
        assert_eq!(kept[1].grade, 1);
        // same grade: the smaller level (heavier weight) wins
        let kept = geometric_thin(&[mk(5, &[1, 2]), mk(1, &[4, 8])], 4.0).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].level, 1);
        // mass kept within the 2R guarantee
        let total = 2.0_f64.powi(-5) * 2.0 + 2.0_f64.powi(-1) * 2.0;
        assert!(kept[0].mass() >= total / 8.0);
    }

    #[test]
    fn parity_split_keeps_the_heavier_class_and_even_on_ties() {
        let block = |grade: u32, level: i32, n: usize| KeptBlock {
            grade,
            level,
            unit_weight: 2.0_f64.powi(-level),
            elements: zset(&(1..=n as i128).collect::<Vec<_>>()),
        };
        // masses 1, 10, 1 on grades 0, 1, 2 → odd wins
        let (parity, kept) = parity_split(&[block(0, 0, 1), block(1, 0, 10), block(2, 0, 1)]);
        assert_eq!(parity, "odd");
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].grade, 1);
        // tie → even
        let (parity, kept) = parity_split(&[block(0, 0, 2), block(1, 0, 2)]);
        assert_eq!(parity, "even");
        assert_eq!(kept[0].grade, 0);
    }

    #[test]
    fn base_rule_terminates_or_drops_the_light_base() {
        let block = |grade: u32, level: i32, n: usize| KeptBlock {
            grade,
            level,
            unit_weight: 2.0_f64.powi(-level),
            elements: zset(&(1..=n as i128).collect::<Vec<_>>()),
        };
        // single block → Done
        assert!(matches!(
            handle_base(vec![block(1, 0, 5)]).unwrap(),
            BaseOutcome::Done { .. }
        ));
        // heavy grade-0 base → Done with it
        match handle_base(vec![block(0, 0, 3), block(2, 5, 20)]).unwrap() {
            BaseOutcome::Done { block } => assert_eq!(block.grade, 0),
            _ => panic!("heavy base should terminate"),
        }
        // light grade-0 base → dropped
        match handle_base(vec![block(0, 5, 2), block(2, 0, 20)]).unwrap() {
            BaseOutcome::Proceed { blocks } => {
                assert_eq!(blocks.len(), 1);
                assert_eq!(blocks[0].grade, 2);
            }
            _ => panic!("light base should be dropped"),
        }
    }

    #[test]
    fn sigma_scan_counts_cross_relations_exactly() {
        // Λ_j = {10,20,40,80}, companion {150} with cap 16:
        // 10+20+40+80 = 150, so the full-support σ (and its negation)
        // are the only matches above height 0
        let (reach, window) =
            companion_reach(&[vec![10, 20, 40, 80], vec![150]], 0, &[0, 16], &caps()).unwrap();
        let scan = SigmaScan::new(&zset(&[10, 20, 40, 80])).unwrap();
        let out = scan.scan(HeightFilter::Above(0), &reach, window, &[-1, 0, 1], 0);
        assert_eq!(out.matches, 2);
        let (word, sum) = out.first.unwrap();
        assert_eq!(word.len(), 4);
        assert_eq!(sum.abs(), 150);
        // no match at exact height 2
        let out = scan.scan(HeightFilter::Exactly(2), &reach, window, &[-1, 0, 1], 0);
        assert_eq!(out.matches, 0);
        // reversed sign order agrees (the double-entry recount)
        let rev = scan.scan(HeightFilter::Above(0), &reach, window, &[1, 0, -1], 0);
        assert_eq!(rev.matches, 2);
    }

    #[test]
    fn stage2_rejects_the_adversarial_full_draw() {
        // blocks sized 4 and 1: caps d = 16 ≥ 1, L = 0; any accepted
        // selection must avoid carrying the full {10,20,40,80} support
        let blocks = vec![
            KeptBlock {
                grade: 1,
                level: 0,
                unit_weight: 1.0,
                elements: zset(&[10, 20, 40, 80]),
            },
            KeptBlock {
                grade: 3,
                level: 1,
                unit_weight: 0.5,
                elements: zset(&[150]),
            },
        ];
        let params = ExtractParams::new(1.0, 4.0, 5).unwrap();
        let out = stage2_select(0, &blocks, &params, &caps()).unwrap();
        assert!(out.selected.len() < 4, "the full block admits a relation");
        assert_eq!(out.forbidden, 0);
        assert_eq!(out.recount, 0);
        assert!(5 * out.selected.len() > 4);
    }

    #[test]
    fn stage3_removes_exactly_the_permitted_support() {
        // declared sizes 20/20 give ⌊L⌋ = 2 and caps ⌊h·20/20⌋ = h;
        // A_0 = {7,9,13,100,170} against companion {270,…}: the walk
        // (largest |value| first) hits σ = 170^{-1}·100^{-1} with
        // ρ-sum 270 before any other permitted system
        let pad = |mut v: Vec<i128>, from: i128| {
            // declared block size 20: pad with inert elements
            let mut filler = from..;
            while v.len() < 20 {
                v.push(filler.next().unwrap());
            }
            v
        };
        let blocks = vec![
            KeptBlock {
                grade: 1,
                level: 0,
                unit_weight: 1.0,
                elements: zset(&pad(vec![7, 9, 13, 100, 170], 401)),
            },
            KeptBlock {
                grade: 3,
                level: 1,
                unit_weight: 0.5,
                elements: zset(&pad(vec![270], 301)),
            },
        ];
        let selections = vec![
            Stage2Outcome {
                selected: zset(&[7, 9, 13, 100, 170]),
                attempts: 1,
                height_bound: 2,
                caps: vec![0, 20],
                window: 0,
                forbidden: 0,
                recount: 0,
            },
            Stage2Outcome {
                selected: zset(&[270]),
                attempts: 1,
                height_bound: 2,
                caps: vec![20, 0],
                window: 0,
                forbidden: 0,
                recount: 0,
            },
        ];
        let out = stage3_prune(&blocks, &selections, &caps()).unwrap();
        assert_eq!(out[0].removed, zset(&[170, 100]));
        assert_eq!(out[0].kept, zset(&[7, 9, 13]));
        assert_eq!(out[0].sigma_height, 2);
        let sigma = out[0].sigma.as_ref().unwrap();
        assert_eq!(sigma.height(), 2);
        assert_eq!(sigma.exponents()[&Character::z(170)], -1);
        let rho = out[0].rho.as_ref().unwrap();
        assert_eq!(rho[1].exponents()[&Character::z(270)], 1);
        // the companion block sees no permitted system of its own
        assert!(out[1].sigma.is_none());
        assert_eq!(out[1].kept, zset(&[270]));
    }

    #[test]
    fn counting_measure_on_a_qi_set_returns_everything() {
        let lambda = zset(&(0..10).map(|j| 1i128 << j).collect::<Vec<_>>());
        let w = WeightedSet::counting(&lambda).unwrap();
        let params = ExtractParams::new(1.0, 4.0, 9).unwrap();
        let out = cb_extract(&w, &params, QiOracle::Auto, &caps()).unwrap();
        assert!(out.certificate.base_done);
        assert_eq!(out.subset, lambda);
        assert!((out.certificate.ratio - 1.0).abs() < 1e-15);
        assert!(out.certificate.theoretical_c <= 1.0);
    }

    #[test]
    fn the_reference_instance_runs_the_full_pipeline() {
        let w = curated_instance();
        assert_eq!(w.len(), 84);
        assert!((w.total() - 10.0).abs() < 1e-12);
        let params = ExtractParams::new(1.0, 4.0, 42).unwrap();
        let out = cb_extract(&w, &params, QiOracle::Auto, &caps()).unwrap();
        assert!(!out.certificate.base_done);
        assert_eq!(out.trace.blocks.len(), 2);
        assert_eq!(out.trace.parity_kept, "odd");
        assert!((out.trace.b_achieved - 1.0).abs() < 1e-15);
        // primes block: everything sampled survives; large block: the
        // acceptance window is 13..=17
        let large = &out.trace.blocks[1];
        assert_eq!(large.block.elements.len(), 64);
        assert!((13..=17).contains(&large.stage2.selected.len()));
        assert_eq!(large.stage2.height_bound, 6);
        assert_eq!(large.stage2.caps, vec![1024, 0]);
        assert_eq!(large.stage2.window, 11264);
        assert!(large.stage3.sigma.is_none());
        // the certified ratio beats the hard bound b/(16R) = 1/64
        assert!(out.certificate.ratio >= 1.0 / 64.0);
        assert!(out.certificate.ratio >= out.certificate.theoretical_c);
        // stage inequalities
        let t = &out.trace.totals;
        assert!(t.w1 >= 0.5 * t.w - 1e-12);
        assert!(t.w2 >= out.trace.b_achieved * t.w1 - 1e-12);
        assert!(t.w3 >= t.w2 / 8.0 - 1e-12);
        assert!(t.w4 >= 0.5 * t.w3 - 1e-12);
        assert!(t.w5.unwrap() >= 0.5 * t.w4 - 1e-12);
        // determinism: identical bytes on a rerun
        let again = cb_extract(&w, &params, QiOracle::Auto, &caps()).unwrap();
        assert_eq!(
            serde_json::to_string(&out.trace).unwrap(),
            serde_json::to_string(&again.trace).unwrap()
        );
    }

    #[test]
    fn auto_r_matches_the_frozen_threshold() {
        assert_eq!(auto_r(), 969);
    }

    #[test]
    fn weighted_sets_serialize_and_validate() {
        let w = WeightedSet::from_z([(1, 0.7), (4, 1.0)]).unwrap();
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(
            json,
            r#"{"family":"Z","elements":[{"n":1,"w":0.7},{"n":4,"w":1.0}]}"#
        );
        let back: WeightedSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
        // bare integers carry weight 1
        let bare: WeightedSet =
            serde_json::from_str(r#"{"family":"Z","elements":[1,2,4]}"#).unwrap();
        assert_eq!(bare.weight(&Character::z(2)), Some(1.0));
        // invalid inputs
        assert!(serde_json::from_str::<WeightedSet>(
            r#"{"family":"Z","elements":[{"n":1,"w":0.0}]}"#
        )
        .is_err());
        assert!(serde_json::from_str::<WeightedSet>(
            r#"{"family":"Z","elements":[{"n":0,"w":1.0}]}"#
        )
        .is_err());
        assert!(serde_json::from_str::<WeightedSet>(
            r#"{"family":"Z","elements":[{"n":1,"w":1.0},{"n":1,"w":2.0}]}"#
        )
        .is_err());
    }

    #[test]
    fn pipeline_rejects_non_integer_families() {
        let w = WeightedSet::new(
            Family::ZoplusN,
            [
                (Character::free([(0, 1)]), 1.0),
                (Character::free([(1, 1)]), 1.0),
            ],
        )
        .unwrap();
        let params = ExtractParams::new(1.0, 4.0, 1).unwrap();
        assert!(matches!(
            cb_extract(&w, &params, QiOracle::Auto, &caps()),
            Err(Error::Domain(_))
        ));
    }
}
