//! Cartesian keypoints to per-bone relative rotations (6D encoded) and back.

use super::cartesian::KeypointFrame;
use super::geometry::{self, cast_mat, column, dot, mul, normalize, scale, sub, transpose, Mat3, Vec3};
use super::rot6d::{encode_unchecked, rot6d_decode, Rot6D};
use super::skeleton::{bone_frame, virtual_root_frame, SkeletonSpec, PARALLEL_TOL};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensorio::Matrix;

/// Bones shorter than this are treated as coincident joints.
const MIN_BONE_LENGTH: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct AngularSequence<S> {
    /// `T x (6 * bones)`, bones in `bone_list` order.
    pub features: Matrix<S>,
    /// Frames where at least one bone had coincident joints and its rest
    /// direction was substituted.
    pub flagged_frames: Vec<usize>,
}

/// Relative rotation of every bone with respect to its parent bone's frame,
/// measured from the rest pose.
pub fn cartesian_to_angular<S: Scalar>(frames: &[KeypointFrame<S>], skel: &SkeletonSpec) -> Result<AngularSequence<S>> {
    let n = skel.num_joints();
    let width = 6 * skel.num_bones();
    let rest_local: Vec<Mat3<S>> = (0..n).map(|j| cast_mat(&skel.rest_local(j))).collect();
    let mut data = Vec::with_capacity(frames.len() * width);
    let mut flagged_frames = Vec::new();
    let mut world = vec![virtual_root_frame::<S>(); n];
    let mut rel = vec![geometry::identity::<S>(); n];
    for (t, frame) in frames.iter().enumerate() {
        frame.validate()?;
        if frame.joints.len() != n {
            return Err(Error::shape(
                "cartesian_to_angular",
                "frame and skeleton joint counts differ",
            ));
        }
        let mut flagged = false;
        for &j in skel.topological_order() {
            let p = skel.parent[j];
            if p == j {
                world[j] = virtual_root_frame();
                continue;
            }
            let pf = world[p];
            let dir = match normalize(sub(frame.joints[j], frame.joints[p]), c(MIN_BONE_LENGTH)) {
                Some(d) => d,
                None => {
                    flagged = true;
                    geometry::mul_vec(&pf, column(&rest_local[j], 0))
                }
            };
            let (f, _) = bone_frame(dir, column(&pf, 0));
            let local = mul(&transpose(&pf), &f);
            rel[j] = mul(&transpose(&rest_local[j]), &local);
            world[j] = f;
        }
        for &j in &skel.bone_list {
            data.extend_from_slice(&encode_unchecked(&rel[j]).0);
        }
        if flagged {
            flagged_frames.push(t);
        }
    }
    Ok(AngularSequence {
        features: Matrix::from_vec(frames.len(), width, data)?,
        flagged_frames,
    })
}

/// Rebuilds joint positions by composing rotations from the roots outwards and
/// stepping each bone's rest length along its rotated direction.
///
/// `root_positions` is `T x (3 * roots)`, roots in index order.
pub fn forward_kinematics<S: Scalar>(
    angular: &Matrix<S>,
    skel: &SkeletonSpec,
    root_positions: &Matrix<S>,
) -> Result<Vec<KeypointFrame<S>>> {
    let n = skel.num_joints();
    let width = 6 * skel.num_bones();
    let roots = skel.roots();
    if angular.cols() != width {
        return Err(Error::shape(
            "forward_kinematics",
            format!("angular width {} != {width}", angular.cols()),
        ));
    }
    if root_positions.shape() != (angular.rows(), 3 * roots.len()) {
        return Err(Error::shape(
            "forward_kinematics",
            format!(
                "root positions {:?}, expected ({}, {})",
                root_positions.shape(),
                angular.rows(),
                3 * roots.len()
            ),
        ));
    }
    let mut slot = vec![usize::MAX; n];
    for (k, &j) in skel.bone_list.iter().enumerate() {
        slot[j] = k;
    }
    let rest_local: Vec<Mat3<S>> = (0..n).map(|j| cast_mat(&skel.rest_local(j))).collect();
    let lengths: Vec<S> = skel.lengths.iter().map(|&l| c(l)).collect();
    let mut out = Vec::with_capacity(angular.rows());
    let mut world = vec![virtual_root_frame::<S>(); n];
    for t in 0..angular.rows() {
        let row = angular.row(t);
        let mut pos = vec![[S::zero(); 3]; n];
        for (r, &j) in roots.iter().enumerate() {
            let rp = root_positions.row(t);
            pos[j] = [rp[3 * r], rp[3 * r + 1], rp[3 * r + 2]];
        }
        for &j in skel.topological_order() {
            let p = skel.parent[j];
            if p == j {
                world[j] = virtual_root_frame();
                continue;
            }
            let k = slot[j];
            let r = rot6d_decode(&Rot6D::from_slice(&row[6 * k..6 * k + 6]))?;
            let f = mul(&world[p], &mul(&rest_local[j], &r));
            pos[j] = geometry::add(pos[p], scale(column(&f, 0), lengths[j]));
            world[j] = f;
        }
        out.push(KeypointFrame::new(pos)?);
    }
    Ok(out)
}

/// Twist-free rotation for bone `joint` that points it along `local_dir`,
/// expressed in the parent bone's frame. These are exactly the rotations that
/// survive a positions round trip; `local_dir` must not be parallel to the
/// parent bone (the frame's first axis).
pub fn swing_rotation<S: Scalar>(skel: &SkeletonSpec, joint: usize, local_dir: Vec3<S>) -> Result<Mat3<S>> {
    let dir = normalize(local_dir, c(1e-12)).ok_or_else(|| Error::Degenerate("zero swing direction".into()))?;
    let (o, z) = (S::one(), S::zero());
    if S::one() - dot(dir, [o, z, z]).abs() < c(PARALLEL_TOL) {
        return Err(Error::Degenerate(format!(
            "swing direction for joint {joint} parallel to its parent bone"
        )));
    }
    let (g, _) = bone_frame(dir, [o, z, z]);
    let rest: Mat3<S> = cast_mat(&skel.rest_local(joint));
    Ok(mul(&transpose(&rest), &g))
}

/// Direction of `joint`'s bone in its parent's frame at rest.
pub fn rest_local_direction<S: Scalar>(skel: &SkeletonSpec, joint: usize) -> Vec3<S> {
    geometry::cast_vec(column(&skel.rest_local(joint), 0))
}

/// Stacks per-bone rotations (indexed by joint) into one angular row.
pub fn encode_bone_rotations<S: Scalar>(skel: &SkeletonSpec, rotations: &[Mat3<S>]) -> Vec<S> {
    skel.bone_list
        .iter()
        .flat_map(|&j| encode_unchecked(&rotations[j]).0)
        .collect()
}
