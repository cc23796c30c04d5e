//! Integrity auditing for corpora indexed by sequential base-36 IDs.
//!
//! Observed IDs are held as [`IdIntervalSet`]s. Everything downstream
//! (census, dangling references, temporal attribution, risk, community
//! tallies) is computed from those sets plus a single pass over comments.

pub mod census;
pub mod codec;
pub mod community;
pub mod ingest;
pub mod intervals;
pub mod references;
pub mod risk;
pub mod sweep;
pub mod synth;
pub mod temporal;
pub mod typology;

pub use census::{build_observed, census, detect_discontinuities, CensusRange, CensusReport, ExclusionRange, GapRunList, ObservedIds};
pub use codec::{decode_base36, encode_base36, parse_fullname, RecordId, RecordKind};
pub use community::{aggregate_communities, ols_fit, threshold_report, CommunityGapStats, RegressionFit, Transform};
pub use ingest::{CommentRecord, IngestMode, IngestStats, Record, SubmissionRecord};
pub use intervals::{IdIntervalSet, Interval};
pub use references::{audit_references, DanglingReport};
pub use risk::{user_risk, MissingRates, RiskPopulationSummary, UserRiskProfile};
pub use sweep::{inject_faults, sweep, MockStore};
pub use synth::{generate, SynthSpec, SyntheticManifest};
pub use temporal::{burstiness, BurstOperand, MonthlyGapStats, YearMonth};
