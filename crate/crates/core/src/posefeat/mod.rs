//! Pose encodings: 150-d Cartesian vectors and 288-d 6D-angular vectors.

mod angular;
mod cartesian;
pub mod geometry;
mod rot6d;
mod skeleton;

pub use angular::{
    cartesian_to_angular, encode_bone_rotations, forward_kinematics, rest_local_direction, swing_rotation,
    AngularSequence,
};
pub use cartesian::{
    carry_forward_missing, frames_to_matrix, matrix_to_frames, normalize_cartesian, vectorize_cartesian, KeypointFrame,
};
pub use rot6d::{check_rotation, rot6d_decode, rot6d_encode, Rot6D};
pub use skeleton::{
    bone_frame, virtual_root_frame, SkeletonSpec, HAND_JOINTS, LEFT_HAND, L_ELBOW, L_SHOULDER, NECK, NOSE, NUM_BONES,
    NUM_JOINTS, PARALLEL_TOL, RIGHT_HAND, R_ELBOW, R_SHOULDER,
};
