//! Search budgets for the exact combinatorial kernels.
//!
//! Every exponential or pseudo-polynomial search in the crate is guarded
//! by an explicit budget so that an oversized input produces a capacity
//! error instead of an unbounded computation.  The strategy *thresholds*
//! (naive enumeration up to 14 elements, meet-in-the-middle up to 28) are
//! part of the algorithm contracts and are fixed constants; the budgets
//! below bound table sizes and enumeration leaf counts and may be raised
//! or lowered by the caller.

/// Elements up to which plain 3ⁿ enumeration is used for relation
/// searches.
pub const NAIVE_MAX: usize = 14;

/// Elements up to which meet-in-the-middle (2·3^{n/2}) is used.
pub const MITM_MAX: usize = 28;

/// Coordinate cap for exact sign-pattern enumeration on the Boolean
/// group (2^m points).
pub const BOOLEAN_ENUM_MAX: usize = 24;

/// Hard cap on quadrature grids (number of sample points).
pub const QUADRATURE_MAX_POINTS: usize = 1 << 22;

/// Hard cap on the number of base characters in a symbolic Riesz
/// expansion (its term count is already budgeted; this bounds the walk
/// depth itself).
pub const RIESZ_SET_MAX: usize = 20;

/// Configurable budgets.  `Default` matches the documented desk-scale
/// limits; the CLI lets users override them with `--capacity` or the
/// `SIDONLAB_CAPACITY` environment variable.
#[derive(Debug, Clone, Copy)]
pub struct Capacity {
    /// Maximum number of table entries for pseudo-polynomial DP over
    /// signed sums (also bounds reachable-sum windows).
    pub dp_states: u64,
    /// Maximum number of leaves an exhaustive ε-enumeration may visit.
    pub enum_leaves: u64,
    /// Maximum number of (character, partial-degree) terms a symbolic
    /// Riesz expansion may hold at any point.
    pub expansion_terms: u64,
}

impl Default for Capacity {
    fn default() -> Self {
        Capacity {
            dp_states: 10_000_000,
            enum_leaves: 200_000_000,
            expansion_terms: 2_000_000,
        }
    }
}

impl Capacity {
    /// A uniform budget: every knob set to `n`.  Used by the CLI's
    /// single-valued `--capacity` override.
    pub fn uniform(n: u64) -> Self {
        Capacity {
            dp_states: n,
            enum_leaves: n,
            expansion_terms: n,
        }
    }
}
