//! Drug-pair interaction mechanism prediction with a gated KG+feature fusion
//! teacher, a distilled feature-only student, and a leakage-safe evaluation
//! protocol.

pub mod error;
pub mod experiment;
pub mod feature_store;
pub mod gradcheck;
pub mod graph_store;
pub mod io;
pub mod kd_student;
pub mod linalg;
pub mod metrics;
pub mod negative_sampler;
pub mod optim;
pub mod scorer;
pub mod synth_world;
pub mod teacher;
pub mod two_head;

pub use error::{Error, Result};
pub use feature_store::{EmbeddingTable, PairFeatures, PairMode};
pub use kd_student::{StudentModel, StudentParams};
pub use graph_store::{Regime, SplitPlan, Triple, TripleSet};
pub use scorer::PairScorer;
pub use teacher::{TeacherLogits, TeacherParams};
