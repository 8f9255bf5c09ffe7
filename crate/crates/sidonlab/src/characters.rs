//! Characters of three concrete discrete abelian groups.
//!
//! A character γ is a homomorphism from a compact abelian group G into
//! the unit circle; the set Γ of all characters is the discrete dual.
//! Three duals are supported:
//!
//! * `Z` — Γ = ℤ, the dual of the circle G = ℝ/ℤ.  The character n acts
//!   by t ↦ e^{2πint}.  Payloads are checked 128-bit integers; the group
//!   law is addition and overflow is a hard error, never a wrap.
//! * `ZoplusN` — Γ = ℤ^{(ℕ)}, finitely supported integer sequences, the
//!   dual of the infinite torus 𝕋^ℕ (the Steinhaus group).  The
//!   character (n_k) acts by (ω_k) ↦ ∏ e^{2πi n_k ω_k}.
//! * `Walsh` — Γ = ⊕(ℤ/2ℤ), Walsh characters w_S = ∏_{k∈S} r_k over
//!   the Cantor group G = {±1}^ℕ, with r_k the k-th Rademacher
//!   coordinate.  Every non-identity element has order two.
//!
//! Values are exact where the arithmetic allows it: group operations are
//! integer arithmetic, and evaluation on rational grid points t = j/M of
//! the circle is reduced mod M in integer arithmetic before any floating
//! transcendental is applied, so large frequencies do not lose phase.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::fmt;

/// Which dual group a character (or point, or set) lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// ℤ, dual of the circle.
    Z,
    /// ℤ^{(ℕ)}, dual of the Steinhaus torus 𝕋^ℕ.
    ZoplusN,
    /// ⊕ℤ/2ℤ, Walsh characters over the Cantor group.
    Walsh,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Z => write!(f, "Z"),
            Family::ZoplusN => write!(f, "ZoplusN"),
            Family::Walsh => write!(f, "Walsh"),
        }
    }
}

/// A character of one of the three supported dual groups.
///
/// Invariants, maintained by every constructor and group operation:
/// `ZoplusN` coordinate maps never store a zero entry, so equality of
/// payloads is equality of characters; `Walsh` payloads are plain index
/// sets.  The identity is `Z{0}`, the empty map, or the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Character {
    Z { n: i128 },
    ZoplusN { coords: BTreeMap<u32, i64> },
    Walsh { indices: BTreeSet<u32> },
}

impl Character {
    /// The character n ∈ ℤ.
    pub fn z(n: i128) -> Self {
        Character::Z { n }
    }

    /// A finitely supported ℤ^{(ℕ)} character; zero coordinates are
    /// dropped.
    pub fn free<I: IntoIterator<Item = (u32, i64)>>(coords: I) -> Self {
        let coords = coords.into_iter().filter(|&(_, e)| e != 0).collect();
        Character::ZoplusN { coords }
    }

    /// The Walsh character w_S for the index set S.
    pub fn walsh<I: IntoIterator<Item = u32>>(indices: I) -> Self {
        Character::Walsh {
            indices: indices.into_iter().collect(),
        }
    }

    /// The k-th Rademacher character r_k = w_{{k}}.
    pub fn rademacher(k: u32) -> Self {
        Character::walsh([k])
    }

    /// Identity of the given family.
    pub fn identity(family: Family) -> Self {
        match family {
            Family::Z => Character::z(0),
            Family::ZoplusN => Character::free([]),
            Family::Walsh => Character::walsh([]),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Character::Z { .. } => Family::Z,
            Character::ZoplusN { .. } => Family::ZoplusN,
            Character::Walsh { .. } => Family::Walsh,
        }
    }

    /// Whether γ is the trivial character.
    pub fn is_identity(&self) -> bool {
        match self {
            Character::Z { n } => *n == 0,
            Character::ZoplusN { coords } => coords.is_empty(),
            Character::Walsh { indices } => indices.is_empty(),
        }
    }

    /// Whether γ² = 1 for a non-identity γ.  The identity is rejected:
    /// its order is one and asking is almost always a caller bug.
    pub fn has_order_two(&self) -> Result<bool> {
        if self.is_identity() {
            return Err(Error::domain(
                "has_order_two is undefined for the identity character",
            ));
        }
        Ok(matches!(self, Character::Walsh { .. }))
    }

    /// γ⁻¹ (equals γ itself on the Walsh family).
    pub fn inverse(&self) -> Result<Character> {
        match self {
            Character::Z { n } => {
                let m = n
                    .checked_neg()
                    .ok_or_else(|| Error::domain("integer character negation overflow"))?;
                Ok(Character::z(m))
            }
            Character::ZoplusN { coords } => {
                let mut inv = BTreeMap::new();
                for (&k, &e) in coords {
                    let m = e
                        .checked_neg()
                        .ok_or_else(|| Error::domain("coordinate negation overflow"))?;
                    inv.insert(k, m);
                }
                Ok(Character::ZoplusN { coords: inv })
            }
            Character::Walsh { .. } => Ok(self.clone()),
        }
    }

    /// Evaluate γ at a point of the underlying group.
    ///
    /// For the circle the phase 2πnt is computed in `f64`; callers that
    /// need exact phases on rational grids should use
    /// [`Character::evaluate_on_grid`].
    pub fn evaluate(&self, point: &GroupPoint) -> Result<Complex64> {
        match (self, point) {
            (Character::Z { n }, GroupPoint::Z { t }) => {
                Ok(Complex64::from_polar(1.0, TAU * (*n as f64) * t))
            }
            (Character::ZoplusN { coords }, GroupPoint::ZoplusN { coords: omega }) => {
                let mut phase = 0.0;
                for (k, &e) in coords {
                    let w = omega.get(k).copied().unwrap_or(0.0);
                    phase += (e as f64) * w;
                }
                Ok(Complex64::from_polar(1.0, TAU * phase))
            }
            (Character::Walsh { indices }, GroupPoint::Walsh { bits }) => {
                let parity = indices.intersection(bits).count();
                Ok(Complex64::new(
                    if parity % 2 == 0 { 1.0 } else { -1.0 },
                    0.0,
                ))
            }
            _ => Err(Error::domain(format!(
                "character of family {} evaluated at a point of a different group",
                self.family()
            ))),
        }
    }

    /// Evaluate an integer character at t = j/m with the phase reduced
    /// mod m in integer arithmetic, exact for every |n|.
    pub fn evaluate_on_grid(&self, j: u64, m: u64) -> Result<Complex64> {
        let Character::Z { n } = self else {
            return Err(Error::domain("grid evaluation requires the Z family"));
        };
        debug_assert!(m > 0 && j < m);
        let r = (n.rem_euclid(m as i128) as u128 * (j % m) as u128) % m as u128;
        Ok(Complex64::from_polar(1.0, TAU * (r as f64) / (m as f64)))
    }

    /// Compact canonical text key, used where a relation's coefficient
    /// map is serialized as a JSON object.
    pub fn key_string(&self) -> String {
        match self {
            Character::Z { n } => n.to_string(),
            Character::ZoplusN { coords } => {
                if coords.is_empty() {
                    return "1".to_string();
                }
                coords
                    .iter()
                    .map(|(k, e)| format!("e{k}^{e}"))
                    .collect::<Vec<_>>()
                    .join("*")
            }
            Character::Walsh { indices } => {
                if indices.is_empty() {
                    return "1".to_string();
                }
                indices
                    .iter()
                    .map(|k| format!("r{k}"))
                    .collect::<Vec<_>>()
                    .join("*")
            }
        }
    }
}

impl fmt::Display for Character {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.key_string())
    }
}

/// Normalized product ∏ γ_j^{n_j} of characters of one family.
///
/// Exponents are arbitrary integers; on the Walsh family only their
/// parity matters.  Empty factor lists are rejected because they do not
/// determine a family.
pub fn word_product(factors: &[(Character, i64)]) -> Result<Character> {
    let Some((first, _)) = factors.first() else {
        return Err(Error::domain("empty word has no family"));
    };
    let family = first.family();
    if factors.iter().any(|(g, _)| g.family() != family) {
        return Err(Error::domain("word mixes character families"));
    }
    match family {
        Family::Z => {
            let mut acc: i128 = 0;
            for (g, e) in factors {
                let Character::Z { n } = g else {
                    unreachable!()
                };
                let term = n
                    .checked_mul(*e as i128)
                    .ok_or_else(|| Error::domain("integer character word overflow"))?;
                acc = acc
                    .checked_add(term)
                    .ok_or_else(|| Error::domain("integer character word overflow"))?;
            }
            Ok(Character::z(acc))
        }
        Family::ZoplusN => {
            let mut acc: BTreeMap<u32, i64> = BTreeMap::new();
            for (g, e) in factors {
                let Character::ZoplusN { coords } = g else {
                    unreachable!()
                };
                for (&k, &c) in coords {
                    let term = c
                        .checked_mul(*e)
                        .ok_or_else(|| Error::domain("coordinate word overflow"))?;
                    let slot = acc.entry(k).or_insert(0);
                    *slot = slot
                        .checked_add(term)
                        .ok_or_else(|| Error::domain("coordinate word overflow"))?;
                }
            }
            acc.retain(|_, v| *v != 0);
            Ok(Character::ZoplusN { coords: acc })
        }
        Family::Walsh => {
            let mut acc: BTreeSet<u32> = BTreeSet::new();
            for (g, e) in factors {
                if e % 2 == 0 {
                    continue;
                }
                let Character::Walsh { indices } = g else {
                    unreachable!()
                };
                for &k in indices {
                    // symmetric difference, one index at a time
                    if !acc.remove(&k) {
                        acc.insert(k);
                    }
                }
            }
            Ok(Character::Walsh { indices: acc })
        }
    }
}

// ---------------------------------------------------------------------
// Group points
// ---------------------------------------------------------------------

/// A point of the compact group underlying one of the character
/// families: the circle ℝ/ℤ, the Steinhaus torus, or the Cantor group.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupPoint {
    /// t ∈ [0,1) on the circle.
    Z { t: f64 },
    /// Finitely many torus coordinates ω_k ∈ [0,1); absent coordinates
    /// are zero.
    ZoplusN { coords: BTreeMap<u32, f64> },
    /// The set of coordinates equal to −1 in {±1}^ℕ.
    Walsh { bits: BTreeSet<u32> },
}

impl GroupPoint {
    /// A circle point, validated into [0,1).
    pub fn circle(t: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::domain(format!(
                "circle coordinate {t} outside [0,1)"
            )));
        }
        Ok(GroupPoint::Z { t })
    }

    /// A Steinhaus torus point from (index, coordinate) pairs.
    pub fn torus<I: IntoIterator<Item = (u32, f64)>>(coords: I) -> Result<Self> {
        let coords: BTreeMap<u32, f64> = coords.into_iter().collect();
        for (&k, &w) in &coords {
            if !(0.0..1.0).contains(&w) {
                return Err(Error::domain(format!(
                    "torus coordinate ω_{k} = {w} outside [0,1)"
                )));
            }
        }
        Ok(GroupPoint::ZoplusN { coords })
    }

    /// A Cantor-group point given by the set of −1 coordinates.
    pub fn signs<I: IntoIterator<Item = u32>>(minus_ones: I) -> Self {
        GroupPoint::Walsh {
            bits: minus_ones.into_iter().collect(),
        }
    }
}

// ---------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------
//
// {"family":"Z","n":8}
// {"family":"ZoplusN","coords":{"0":1,"3":-2}}
// {"family":"Walsh","indices":[0,2]}
//
// Hand-written because derive-based internal tagging routes i128
// payloads through serde's content buffer, which does not carry them.

impl Serialize for Character {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        match self {
            Character::Z { n } => {
                map.serialize_entry("family", "Z")?;
                map.serialize_entry("n", n)?;
            }
            Character::ZoplusN { coords } => {
                map.serialize_entry("family", "ZoplusN")?;
                map.serialize_entry("coords", coords)?;
            }
            Character::Walsh { indices } => {
                map.serialize_entry("family", "Walsh")?;
                map.serialize_entry("indices", indices)?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Character {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct CharVisitor;

        impl<'de> Visitor<'de> for CharVisitor {
            type Value = Character;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a character object with a \"family\" tag")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Character, A::Error> {
                let mut family: Option<String> = None;
                let mut n: Option<i128> = None;
                let mut coords: Option<BTreeMap<u32, i64>> = None;
                let mut indices: Option<BTreeSet<u32>> = None;
                while let Some(key) = map.next_key::<String>()? {
                    match key.as_str() {
                        "family" => family = Some(map.next_value()?),
                        "n" => n = Some(map.next_value()?),
                        "coords" => coords = Some(map.next_value()?),
                        "indices" => indices = Some(map.next_value()?),
                        other => {
                            return Err(de::Error::unknown_field(
                                other,
                                &["family", "n", "coords", "indices"],
                            ))
                        }
                    }
                }
                let family = family.ok_or_else(|| de::Error::missing_field("family"))?;
                match family.as_str() {
                    "Z" => {
                        let n = n.ok_or_else(|| de::Error::missing_field("n"))?;
                        Ok(Character::z(n))
                    }
                    "ZoplusN" => {
                        let coords = coords.ok_or_else(|| de::Error::missing_field("coords"))?;
                        Ok(Character::free(coords))
                    }
                    "Walsh" => {
                        let indices = indices.ok_or_else(|| de::Error::missing_field("indices"))?;
                        Ok(Character::Walsh { indices })
                    }
                    other => Err(de::Error::unknown_variant(
                        other,
                        &["Z", "ZoplusN", "Walsh"],
                    )),
                }
            }
        }

        deserializer.deserialize_map(CharVisitor)
    }
}

// ---------------------------------------------------------------------
// Set-level validation helpers shared by the combinatorial modules
// ---------------------------------------------------------------------

/// Validate that `set` is a nonempty list of distinct characters of one
/// family, and return them sorted into canonical order.
pub fn canonical_set(set: &[Character]) -> Result<Vec<Character>> {
    let Some(first) = set.first() else {
        return Err(Error::domain("empty character set"));
    };
    let family = first.family();
    if set.iter().any(|g| g.family() != family) {
        return Err(Error::domain("character set mixes families"));
    }
    let mut sorted = set.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::domain("character set contains duplicates"));
    }
    Ok(sorted)
}

/// The integer payloads of a Z-family set, in the order given.
pub fn z_values(set: &[Character]) -> Result<Vec<i128>> {
    set.iter()
        .map(|g| match g {
            Character::Z { n } => Ok(*n),
            _ => Err(Error::domain("operation requires the Z family")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_order() {
        assert!(Character::z(0).is_identity());
        assert!(Character::free([(3, 0)]).is_identity());
        assert!(Character::walsh([]).is_identity());
        assert!(Character::z(0).has_order_two().is_err());
        assert!(!Character::z(5).has_order_two().unwrap());
        assert!(!Character::free([(0, 2)]).has_order_two().unwrap());
        assert!(Character::walsh([0, 2]).has_order_two().unwrap());
    }

    #[test]
    fn word_products() {
        // 3·γ(2) · γ(−1)² = γ(4) in ℤ
        let g = word_product(&[(Character::z(2), 3), (Character::z(-1), 2)]).unwrap();
        assert_eq!(g, Character::z(4));
        // e₀e₃⁻² · e₃² = e₀
        let a = Character::free([(0, 1), (3, -2)]);
        let b = Character::free([(3, 1)]);
        let p = word_product(&[(a, 1), (b, 2)]).unwrap();
        assert_eq!(p, Character::free([(0, 1)]));
        // Walsh: squares vanish, odd powers act
        let w = word_product(&[
            (Character::walsh([0, 2]), 1),
            (Character::walsh([2, 5]), 3),
            (Character::walsh([7]), 2),
        ])
        .unwrap();
        assert_eq!(w, Character::walsh([0, 5]));
        assert!(word_product(&[]).is_err());
        assert!(word_product(&[(Character::z(1), 1), (Character::walsh([0]), 1)]).is_err());
    }

    #[test]
    fn word_product_overflow_detected() {
        let r = word_product(&[(Character::z(i128::MAX), 1), (Character::z(1), 1)]);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn evaluation() {
        // e^{2πi·1·(1/4)} = i
        let v = Character::z(1)
            .evaluate(&GroupPoint::circle(0.25).unwrap())
            .unwrap();
        assert!((v - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        // Walsh character at a sign pattern
        let w = Character::walsh([0, 2])
            .evaluate(&GroupPoint::signs([2]))
            .unwrap();
        assert_eq!(w, Complex64::new(-1.0, 0.0));
        // Steinhaus: e₀e₃⁻² at ω₀ = 1/2, ω₃ = 1/8 → e^{2πi(1/2 − 1/4)} = i
        let g = Character::free([(0, 1), (3, -2)]);
        let p = GroupPoint::torus([(0, 0.5), (3, 0.125)]).unwrap();
        assert!((g.evaluate(&p).unwrap() - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        // family mismatch
        assert!(Character::z(1).evaluate(&GroupPoint::signs([0])).is_err());
    }

    #[test]
    fn grid_evaluation_is_exact_for_large_n() {
        // n ≡ 1 mod 8, so at j/m = 1/8 the value is e^{2πi/8} exactly.
        let n = 8i128 * (1i128 << 100) + 1;
        let v = Character::z(n).evaluate_on_grid(1, 8).unwrap();
        let expected = Complex64::from_polar(1.0, TAU / 8.0);
        assert!((v - expected).norm() < 1e-15);
    }

    #[test]
    fn wire_format() {
        let g = Character::z(8);
        assert_eq!(
            serde_json::to_string(&g).unwrap(),
            r#"{"family":"Z","n":8}"#
        );
        let f = Character::free([(0, 1), (3, -2)]);
        assert_eq!(
            serde_json::to_string(&f).unwrap(),
            r#"{"family":"ZoplusN","coords":{"0":1,"3":-2}}"#
        );
        let w = Character::walsh([0, 2]);
        assert_eq!(
            serde_json::to_string(&w).unwrap(),
            r#"{"family":"Walsh","indices":[0,2]}"#
        );
        for s in [
            r#"{"family":"Z","n":302231454903657293676543}"#,
            r#"{"family":"ZoplusN","coords":{"5":-1}}"#,
            r#"{"family":"Walsh","indices":[7]}"#,
        ] {
            let g: Character = serde_json::from_str(s).unwrap();
            assert_eq!(serde_json::to_string(&g).unwrap(), s);
        }
        // zero coordinates are normalized away on ingest
        let g: Character =
            serde_json::from_str(r#"{"family":"ZoplusN","coords":{"2":0}}"#).unwrap();
        assert!(g.is_identity());
    }

    #[test]
    fn canonical_set_validation() {
        assert!(canonical_set(&[]).is_err());
        assert!(canonical_set(&[Character::z(1), Character::z(1)]).is_err());
        assert!(canonical_set(&[Character::z(1), Character::walsh([0])]).is_err());
        let s = canonical_set(&[Character::z(3), Character::z(1)]).unwrap();
        assert_eq!(s, vec![Character::z(1), Character::z(3)]);
    }
}
