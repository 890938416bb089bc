//! Quantitative estimates as evaluable functionals on computed trajectories.

pub mod audit;
pub mod boundedness;
pub mod caccioppoli;
pub mod inequalities;
pub mod moser;
pub mod tail;

pub use audit::{tail_finiteness_audit, AuditReport};
pub use boundedness::{boundedness_check, theorem_terms, BoundednessMode, BoundednessReport, TheoremTerms};
pub use caccioppoli::{caccioppoli_report, CaccioppoliReport};
pub use inequalities::{dkp_constant, inequality_suite, inequality_suite_with, DkpConstant, InequalityReport};
pub use moser::{moser_ladder, moser_ladder_exact, MoserLadder};
pub use tail::{ball_complement_mass, offset_d, tail, TailEstimate, TailVariant};
