//! Joint hierarchy for the 50-keypoint upper-body + hands layout.
//!
//! Two roots (nose, neck) leave 48 bones, one per non-root joint. Each bone
//! gets a local orthonormal frame built from its direction and its parent
//! bone's direction; root children use a fixed virtual frame whose first
//! axis points up.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::geometry::{self, column, cross, dot, from_columns, mul, normalize, scale, sub, transpose, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

pub const NUM_JOINTS: usize = 50;
pub const NUM_BONES: usize = 48;
pub const HAND_JOINTS: usize = 21;
pub const NOSE: usize = 0;
pub const NECK: usize = 1;
pub const R_SHOULDER: usize = 2;
pub const R_ELBOW: usize = 3;
pub const L_SHOULDER: usize = 5;
pub const L_ELBOW: usize = 6;
pub const RIGHT_HAND: usize = 8;
pub const LEFT_HAND: usize = RIGHT_HAND + HAND_JOINTS;

/// Below this `1 - |cos|`, a bone counts as parallel to its twist reference.
pub const PARALLEL_TOL: f64 = 1e-4;

const HEADER: &str = "skeleton-v1";

/// First axis up, second toward the camera, third to the side.
pub fn virtual_root_frame<S: Scalar>() -> Mat3<S> {
    let (o, z) = (S::one(), S::zero());
    from_columns([z, o, z], [z, z, o], [o, z, z])
}

/// Local frame of a bone: first axis along `dir`, second the part of
/// `reference` orthogonal to it (global up, then +z, when parallel), third
/// their cross product. Returns the frame and whether a fallback was used.
pub fn bone_frame<S: Scalar>(dir: Vec3<S>, reference: Vec3<S>) -> (Mat3<S>, bool) {
    let tol = c::<S>(PARALLEL_TOL);
    let (o, z) = (S::one(), S::zero());
    let candidates = [reference, [z, o, z], [z, z, o]];
    for (k, r) in candidates.into_iter().enumerate() {
        let cos = dot(dir, r);
        if S::one() - cos.abs() < tol {
            continue;
        }
        if let Some(second) = normalize(sub(r, scale(dir, cos)), c(1e-12)) {
            let third = cross(dir, second);
            return (from_columns(dir, second, third), k > 0);
        }
    }
    unreachable!("a unit vector cannot be parallel to both +y and +z")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSpec {
    pub joint_names: Vec<String>,
    /// Roots are their own parent.
    pub parent: Vec<usize>,
    /// World-space unit direction of each bone in the rest pose; zero for roots.
    pub rest_directions: Vec<[f64; 3]>,
    /// Rest length per joint; zero for roots.
    pub lengths: Vec<f64>,
    /// Non-root joints in index order; the bone ending at joint `j` is `j`'s bone.
    pub bone_list: Vec<usize>,
    roots: Vec<usize>,
    /// Parents before children.
    order: Vec<usize>,
    rest_frames: Vec<Mat3<f64>>,
    /// Rest frame of each joint's bone expressed in its parent's rest frame.
    rest_local: Vec<Mat3<f64>>,
}

impl SkeletonSpec {
    pub fn new(
        joint_names: Vec<String>,
        parent: Vec<usize>,
        rest_directions: Vec<[f64; 3]>,
        lengths: Vec<f64>,
    ) -> Result<Self> {
        let n = joint_names.len();
        if parent.len() != n || rest_directions.len() != n || lengths.len() != n {
            return Err(Error::Skeleton("per-joint arrays differ in length".into()));
        }
        if let Some(&p) = parent.iter().find(|&&p| p >= n) {
            return Err(Error::Skeleton(format!("parent index {p} out of range")));
        }
        let roots: Vec<usize> = (0..n).filter(|&j| parent[j] == j).collect();
        let bone_list: Vec<usize> = (0..n).filter(|&j| parent[j] != j).collect();
        let order = topological_order(&parent, &roots)?;
        for &j in &bone_list {
            let d = rest_directions[j];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if (len - 1.0).abs() > 1e-6 {
                return Err(Error::Skeleton(format!("rest direction of joint {j} has norm {len}")));
            }
            if !(lengths[j] > 0.0 && lengths[j].is_finite()) {
                return Err(Error::Skeleton(format!("bone {j} has length {}", lengths[j])));
            }
        }
        let mut names = HashSet::new();
        if !joint_names.iter().all(|s| !s.is_empty() && names.insert(s)) {
            return Err(Error::Skeleton("joint names must be unique and non-empty".into()));
        }
        let mut rest_frames = vec![virtual_root_frame::<f64>(); n];
        let mut rest_local = vec![geometry::identity::<f64>(); n];
        for &j in &order {
            if parent[j] == j {
                continue;
            }
            let pf = rest_frames[parent[j]];
            let (frame, _) = bone_frame(rest_directions[j], column(&pf, 0));
            rest_local[j] = mul(&transpose(&pf), &frame);
            rest_frames[j] = frame;
        }
        Ok(Self {
            joint_names,
            parent,
            rest_directions,
            lengths,
            bone_list,
            roots,
            order,
            rest_frames,
            rest_local,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.parent.len()
    }

    pub fn num_bones(&self) -> usize {
        self.bone_list.len()
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn bone_lengths(&self) -> Vec<f64> {
        self.bone_list.iter().map(|&j| self.lengths[j]).collect()
    }

    pub fn rest_frame(&self, joint: usize) -> Mat3<f64> {
        self.rest_frames[joint]
    }

    pub fn rest_local(&self, joint: usize) -> Mat3<f64> {
        self.rest_local[joint]
    }

    /// Joint positions of the rest pose with the given root positions.
    pub fn rest_pose(&self, roots: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let mut pos = vec![[0.0; 3]; self.num_joints()];
        for (r, &j) in self.roots.iter().enumerate() {
            pos[j] = roots[r];
        }
        for &j in &self.order {
            if self.parent[j] != j {
                pos[j] = geometry::add(pos[self.parent[j]], scale(self.rest_directions[j], self.lengths[j]));
            }
        }
        pos
    }

    /// The default 50-joint skeleton in an upright signing pose.
    pub fn standard() -> Self {
        let (names, parent, positions) = standard_layout();
        let mut dirs = vec![[0.0; 3]; NUM_JOINTS];
        let mut lengths = vec![0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            if parent[j] != j {
                let v = sub(positions[j], positions[parent[j]]);
                let len = geometry::norm(v);
                dirs[j] = scale(v, 1.0 / len);
                lengths[j] = len;
            }
        }
        Self::new(names, parent, dirs, lengths).expect("standard skeleton is valid")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER} joints={} bones={}\n", self.num_joints(), self.num_bones());
        for j in 0..self.num_joints() {
            let d = self.rest_directions[j];
            let _ = writeln!(
                out,
                "{j}\t{}\t{}\t{:?},{:?},{:?}\t{:?}",
                self.joint_names[j], self.parent[j], d[0], d[1], d[2], self.lengths[j]
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Skeleton("empty skeleton file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(HEADER) {
            return Err(Error::Skeleton(format!("expected {HEADER} header")));
        }
        let mut joints = None;
        let mut bones = None;
        for kv in fields {
            match kv.split_once('=') {
                Some(("joints", v)) => joints = v.parse::<usize>().ok(),
                Some(("bones", v)) => bones = v.parse::<usize>().ok(),
                _ => return Err(Error::Skeleton(format!("bad header field {kv:?}"))),
            }
        }
        let (joints, bones) = joints
            .zip(bones)
            .ok_or_else(|| Error::Skeleton("header needs joints= and bones=".into()))?;
        let mut names = Vec::new();
        let mut parent = Vec::new();
        let mut dirs = Vec::new();
        let mut lengths = Vec::new();
        for (n, line) in lines.enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Skeleton(format!("line {}: {what}", n + 2));
            let [idx, name, par, dir, len] = f[..] else {
                return Err(bad("expected 5 tab-separated fields"));
            };
            if idx.parse::<usize>().ok() != Some(n) {
                return Err(bad("joint index out of sequence"));
            }
            names.push(name.to_owned());
            parent.push(par.parse().map_err(|_| bad("bad parent index"))?);
            let d: Vec<f64> = dir
                .split(',')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad direction"))?;
            let [x, y, z] = d[..] else {
                return Err(bad("direction needs three components"));
            };
            dirs.push([x, y, z]);
            lengths.push(len.parse().map_err(|_| bad("bad length"))?);
        }
        let skel = Self::new(names, parent, dirs, lengths)?;
        if skel.num_joints() != joints || skel.num_bones() != bones {
            return Err(Error::Skeleton(format!(
                "header declares {joints} joints / {bones} bones, body has {} / {}",
                skel.num_joints(),
                skel.num_bones()
            )));
        }
        Ok(skel)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn topological_order(parent: &[usize], roots: &[usize]) -> Result<Vec<usize>> {
    let n = parent.len();
    let mut children = vec![Vec::new(); n];
    for j in 0..n {
        if parent[j] != j {
            children[parent[j]].push(j);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<usize> = roots.iter().rev().copied().collect();
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    if order.len() != n {
        return Err(Error::Skeleton("parent relation contains a cycle".into()));
    }
    Ok(order)
}

type Layout = (Vec<String>, Vec<usize>, Vec<[f64; 3]>);

/// x to the signer's left, y up, z toward the camera; units roughly metres.
fn standard_layout() -> Layout {
    let mut names: Vec<String> = [
        "nose",
        "neck",
        "r_shoulder",
        "r_elbow",
        "r_wrist",
        "l_shoulder",
        "l_elbow",
        "l_wrist",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut parent = vec![NOSE, NECK, NECK, R_SHOULDER, R_ELBOW, NECK, L_SHOULDER, L_ELBOW];
    let mut pos = vec![
        [0.0, 0.25, 0.05],
        [0.0, 0.0, 0.0],
        [-0.18, -0.02, 0.0],
        [-0.26, -0.28, 0.05],
        [-0.22, -0.50, 0.15],
        [0.18, -0.02, 0.0],
        [0.26, -0.28, 0.05],
        [0.22, -0.50, 0.15],
    ];
    for (side, elbow, sign) in [("r", R_ELBOW, -1.0), ("l", L_ELBOW, 1.0)] {
        let wrist = pos[elbow + 1];
        let base = pos.len();
        let hand_points = hand_layout(wrist, sign);
        for (k, p) in hand_points.into_iter().enumerate() {
            names.push(format!("{side}_hand_{k}"));
            parent.push(match k {
                0 => elbow,
                1 | 5 | 9 | 13 | 17 => base,
                _ => base + k - 1,
            });
            pos.push(p);
        }
    }
    (names, parent, pos)
}

/// 21 hand keypoints: wrist, then four joints per finger from thumb to pinky.
fn hand_layout(wrist: [f64; 3], sign: f64) -> Vec<[f64; 3]> {
    let unit = |v: [f64; 3]| normalize(v, 0.0).unwrap();
    let dir = unit([sign * 0.3, -0.5, 0.8]);
    let side = unit(cross(dir, [0.0, 1.0, 0.0]));
    let normal = cross(dir, side);
    let spreads: [f64; 5] = [-0.9, -0.3, 0.0, 0.25, 0.5];
    let segments = [
        [0.035, 0.035, 0.03, 0.025],
        [0.08, 0.04, 0.025, 0.02],
        [0.08, 0.045, 0.028, 0.02],
        [0.075, 0.04, 0.026, 0.019],
        [0.07, 0.032, 0.02, 0.018],
    ];
    let curl = 0.25_f64;
    let mut out = vec![wrist];
    for (finger, &spread) in spreads.iter().enumerate() {
        let d0 = geometry::add(scale(dir, spread.cos()), scale(side, sign * spread.sin()));
        let mut p = wrist;
        for (k, &len) in segments[finger].iter().enumerate() {
            let a = curl * k as f64;
            let d = unit(geometry::add(scale(d0, a.cos()), scale(normal, a.sin())));
            p = geometry::add(p, scale(d, len));
            out.push(p);
        }
    }
    out
}
