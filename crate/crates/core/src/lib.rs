//! Representational similarity analysis engine.
//!
//! Builds representational dissimilarity matrices (RDMs) from network
//! activations and compares them with brain RDMs or voxel patterns:
//! classical RSA with noise ceilings and sign-flip significance, weighted
//! RSA with non-negative least squares, and volumetric searchlight maps.

pub mod error;
pub mod io;
pub mod model;
pub mod rdm;
pub mod report;
pub mod rsa;
pub mod searchlight;
pub mod stats;
pub mod wrsa;

pub use error::{Error, Result};
pub use model::{
    align_conditions, validate_activation_set, ActivationSet, EvaluationResult, Layer, NoiseCeiling,
    RawActivationSet, Rdm, SubjectRdmStack, VoxelDataset,
};
pub use rdm::{average_rdms, compute_rdm, flatten_upper, DissimilarityMetric};
pub use rsa::{compare_models, noise_ceiling, rsa_evaluate, rsa_evaluate_models, RsaConfig};
pub use searchlight::{build_spheres, searchlight_rsa, SearchlightConfig, SearchlightMap};
pub use stats::{Alternative, PermutationMode, PermutationScheme};
pub use wrsa::{condition_folds, nnls_fit, wrsa_evaluate, wrsa_evaluate_models, NnlsOptions, WrsaConfig, WrsaResult};
