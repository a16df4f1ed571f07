//! Dense matrices, the STF tensor file format and dataset manifests.

mod manifest;
mod matrix;
mod stf;

pub use manifest::{
    load_manifest, Dataset, FeatureType, Manifest, ManifestEntry, Sample, Split, SplitCounts, ANGULAR_WIDTH,
    CARTESIAN_WIDTH, I3D_WIDTH, TOKEN_COLUMN_WIDTH,
};
pub use matrix::Matrix;
pub(crate) use matrix::{matmul_acc, matmul_at_acc, matmul_bt_acc};
pub use stf::{
    decode_stf, decode_stf_header, encode_stf, read_tensor, read_tensor_dims, write_tensor, STF_HEADER_LEN, STF_MAGIC,
};
