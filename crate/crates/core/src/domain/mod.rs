//! Shared domain types, canonical serialization and content digests.
//!
//! Every record that is persisted or digested goes through
//! [`canonical_encode`], so two processes that hold the same semantic
//! content always agree on its [`Digest`].

mod canonical;
mod digest;
mod types;
mod validate;

pub use canonical::{canonical_encode, canonical_digest, EncodingError};
pub(crate) use canonical::{write_f64, write_string};
pub use digest::{digest, Digest, DigestParseError};
pub use types::{
    ClaimEvent, Cohort, CohortRow, EventType, PatientTimeline, Sex, TargetSpec, TimelineView,
};
pub use validate::{validate_timeline, TimelineReport, Violation, ViolationKind};
