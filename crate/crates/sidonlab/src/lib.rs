//! Quasi-independent sets, Riesz-product witnesses, and certified
//! Sidon-constant computations on discrete abelian character groups.
//!
//! A set Λ of characters on a compact abelian group is *Sidon* with
//! constant S when ‖f‖_A ≤ S·‖f‖_∞ for every polynomial f with spectrum
//! in Λ, where ‖f‖_A = Σ|f̂| is the absolute sum of Fourier
//! coefficients.  It is *quasi-independent* when the only solution of
//! ∏ λ^{ε_λ} = 1 with ε ∈ {−1,0,+1}^Λ is ε ≡ 0.  This crate makes the
//! passage between those notions computational:
//!
//! * [`characters`] — exact arithmetic in three concrete dual groups:
//!   ℤ, ℤ^{(ℕ)} (Steinhaus), and ⊕ℤ/2ℤ (Walsh).
//! * [`relations`] — decision procedures for quasi-independence with
//!   explicit witnesses, relation enumeration and counting by height,
//!   and bounds on the number of constrained words.
//! * [`riesz`] — Riesz products R = ∏(1 + ½(λ+λ̄)), their modulated
//!   starred slices, and the witness argument giving explicit Sidon
//!   constants (3√3 for quasi-independent sets, and sharper values from
//!   higher-order expansions and unions).
//! * [`norms`] — certified sup-norms, L^p norms, spectral norms, and
//!   the classical extremal/subgaussian diagnostics that calibrate
//!   them.
//! * [`bourgain`] — randomized extraction of large quasi-independent
//!   subsets from sets with controlled relation counts, and the
//!   three-stage pipeline reducing proportional quasi-independent
//!   structure to a Sidon set, with verifiable certificates.
//! * [`selftest`] — the end-to-end acceptance checks behind the CLI
//!   `selftest` subcommand.
//!
//! Every randomized routine takes an explicit seed and is reproducible
//! bit-for-bit; every certified computation returns the data needed to
//! re-check it (witness relations, enumeration counts, error bounds).

pub mod bourgain;
pub mod capacity;
pub mod characters;
pub mod error;
pub mod norms;
pub mod relations;
pub mod riesz;
pub mod selftest;
mod sums;

pub use bourgain::{
    auto_r, cb_extract, cp_thin, curated_instance, dyadic_round, extract_qi_random, geometric_thin,
    handle_base, parity_split, stage2_select, stage3_prune, BaseOutcome, BlockRun, BucketSelection,
    CbCertificate, CbExtraction, ExtractParams, Extraction, KeptBlock, PipelineTrace, QiOracle,
    Stage2Outcome, Stage3Outcome, StageTotals, WeightedSet,
};
pub use capacity::Capacity;
pub use characters::{canonical_set, word_product, Character, Family, GroupPoint};
pub use error::{Error, Result};
pub use norms::{
    certified_sup_norm, lp_norm, lp_norm_detailed, norm_a, rademacher_extremal, rudin_ratio,
    rudin_scan, sidon_lower_bound, steinhaus_sandwich_mc, subgaussian_check, LpEstimate,
    RademacherExtremal, SteinhausSandwich, SubgaussianReport, SupNormCertificate,
};
pub use relations::{
    constrained_word_search, count_relations_height_gt, enumerate_relations, is_quasi_independent,
    max_height_relation, n_bound, parse_character, qi_decide_fast_z, DecisionMethod,
    EpsilonRelation, QiOutcome, SignedWord,
};
pub use riesz::{
    cb_sidon_constant, optimize_qi_constant, riesz_product, riesz_star, riesz_star_coefficient,
    riesz_union, star_grid_crosscheck, union_constant, verify_sidon_witness, verify_union_witness,
    witness_from_expansion, CbConstant, FourierExpansion, MarginEntry, OptimizedConstant,
    RieszParams, SidonWitness,
};
pub use selftest::{all_passed, run_all, CriterionReport};
