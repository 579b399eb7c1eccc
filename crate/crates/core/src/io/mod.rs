//! On-disk interchange: NPY arrays, JSON manifests and result files.

pub mod manifest;
pub mod npy;
pub mod results;

pub use manifest::{
    load_activation_set, load_brain_data, load_model_rdms, read_rdm_file, write_manifest, ActivationManifest,
    BrainData, BrainKind, BrainManifest, LayerFile, RdmManifest, SubjectFile, ACTIVATION_MANIFEST, BRAIN_MANIFEST,
    FORMAT_VERSION, RDM_MANIFEST,
};
pub use npy::{encode_npy, parse_npy, read_npy, write_npy, Dtype, NpyArray};
pub use results::{AnalysisConfig, Inputs, ResultsDocument, TOOL_VERSION};

/// Pretty JSON with object keys in sorted order and a trailing newline.
///
/// Going through `serde_json::Value` sorts keys (its map is a `BTreeMap`);
/// floats use the shortest representation that parses back exactly.
pub fn to_sorted_json<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}
