use super::geometry::{norm, sub, Vec3};
use super::skeleton::{L_SHOULDER, NECK, NUM_JOINTS, R_SHOULDER};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensorio::{Matrix, CARTESIAN_WIDTH};

/// One frame of 50 3D keypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointFrame<S> {
    pub joints: Vec<Vec3<S>>,
    /// Detector confidence in `[0, 1]`; `0` marks a missing detection.
    pub confidence: Option<Vec<S>>,
}

impl<S: Scalar> KeypointFrame<S> {
    pub fn new(joints: Vec<Vec3<S>>) -> Result<Self> {
        let frame = Self {
            joints,
            confidence: None,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn with_confidence(joints: Vec<Vec3<S>>, confidence: Vec<S>) -> Result<Self> {
        let frame = Self {
            joints,
            confidence: Some(confidence),
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != NUM_JOINTS {
            return Err(Error::shape(
                "keypoint frame",
                format!("{} joints, expected {NUM_JOINTS}", self.joints.len()),
            ));
        }
        if let Some(index) = self.joints.iter().flatten().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(conf) = &self.confidence {
            if conf.len() != NUM_JOINTS || conf.iter().any(|&v| !(v >= S::zero() && v <= S::one())) {
                return Err(Error::shape("keypoint frame", "confidence must be 50 values in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Rebuilds a frame from its 150-d vector.
    pub fn from_vector(v: &[S]) -> Result<Self> {
        if v.len() != CARTESIAN_WIDTH {
            return Err(Error::shape("keypoint frame", format!("vector of length {}", v.len())));
        }
        Self::new(v.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect())
    }
}

/// `(x1, y1, z1, ..., x50, y50, z50)`.
pub fn vectorize_cartesian<S: Scalar>(frame: &KeypointFrame<S>) -> Result<Vec<S>> {
    frame.validate()?;
    Ok(frame.joints.iter().flatten().copied().collect())
}

/// Stacks vectorized frames into a `T x 150` matrix.
pub fn frames_to_matrix<S: Scalar>(frames: &[KeypointFrame<S>]) -> Result<Matrix<S>> {
    let mut data = Vec::with_capacity(frames.len() * CARTESIAN_WIDTH);
    for f in frames {
        data.extend(vectorize_cartesian(f)?);
    }
    Matrix::from_vec(frames.len(), CARTESIAN_WIDTH, data)
}

pub fn matrix_to_frames<S: Scalar>(m: &Matrix<S>) -> Result<Vec<KeypointFrame<S>>> {
    (0..m.rows()).map(|t| KeypointFrame::from_vector(m.row(t))).collect()
}

/// Replaces joints with zero confidence by their last valid coordinates.
/// Joints missing from the first frame keep their reported coordinates until
/// a valid detection appears.
pub fn carry_forward_missing<S: Scalar>(frames: &mut [KeypointFrame<S>]) {
    let mut last: Vec<Option<Vec3<S>>> = vec![None; NUM_JOINTS];
    for f in frames.iter_mut() {
        let Some(conf) = &f.confidence else {
            last.iter_mut().zip(&f.joints).for_each(|(l, &p)| *l = Some(p));
            continue;
        };
        for j in 0..f.joints.len().min(NUM_JOINTS) {
            if conf[j] > S::zero() {
                last[j] = Some(f.joints[j]);
            } else if let Some(p) = last[j] {
                f.joints[j] = p;
            }
        }
    }
}

/// Per sequence: moves the average neck position to the origin and scales so
/// the mean shoulder-to-shoulder distance is one.
pub fn normalize_cartesian<S: Scalar>(seq: &Matrix<S>) -> Result<Matrix<S>> {
    if seq.cols() != CARTESIAN_WIDTH || seq.rows() == 0 {
        return Err(Error::shape(
            "normalize_cartesian",
            format!("expected T x {CARTESIAN_WIDTH}, got {:?}", seq.shape()),
        ));
    }
    let t = S::of_usize(seq.rows());
    let joint = |row: &[S], j: usize| [row[3 * j], row[3 * j + 1], row[3 * j + 2]];
    let mut origin = [S::zero(); 3];
    let mut shoulder = S::zero();
    for i in 0..seq.rows() {
        let row = seq.row(i);
        let neck = joint(row, NECK);
        for k in 0..3 {
            origin[k] += neck[k];
        }
        shoulder += norm(sub(joint(row, R_SHOULDER), joint(row, L_SHOULDER)));
    }
    origin = origin.map(|v| v / t);
    let shoulder = shoulder / t;
    if shoulder <= c(1e-12) {
        return Err(Error::ZeroShoulderDistance);
    }
    let mut out = seq.clone();
    for i in 0..out.rows() {
        for (k, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - origin[k % 3]) / shoulder;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_frame(rng: &mut impl Rng) -> KeypointFrame<f64> {
        KeypointFrame::new((0..50).map(|_| [rng.random(), rng.random(), rng.random()]).collect()).unwrap()
    }

    #[test]
    fn zero_frame_and_first_joint() {
        let zero = KeypointFrame::new(vec![[0.0f32; 3]; 50]).unwrap();
        assert_eq!(vectorize_cartesian(&zero).unwrap(), vec![0.0; 150]);
        let mut joints = vec![[0.0f32; 3]; 50];
        joints[0] = [1.0, 2.0, 3.0];
        let v = vectorize_cartesian(&KeypointFrame::new(joints).unwrap()).unwrap();
        assert_eq!(&v[..4], &[1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn layout_and_bijection_on_random_frames() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f = random_frame(&mut rng);
            let v = vectorize_cartesian(&f).unwrap();
            assert_eq!(v.len(), 150);
            for i in 0..50 {
                assert_eq!(v[3 * i], f.joints[i][0]);
                assert_eq!(v[3 * i + 1], f.joints[i][1]);
                assert_eq!(v[3 * i + 2], f.joints[i][2]);
            }
            assert_eq!(KeypointFrame::from_vector(&v).unwrap(), f);
        }
    }

    #[test]
    fn rejects_wrong_joint_count_and_nan() {
        assert!(KeypointFrame::new(vec![[0.0f32; 3]; 49]).is_err());
        let mut joints = vec![[0.0f32; 3]; 50];
        joints[4][1] = f32::NAN;
        assert!(KeypointFrame::new(joints).is_err());
    }

    #[test]
    fn missing_joints_carry_forward() {
        let mut a = vec![[1.0f64; 3]; 50];
        a[7] = [7.0, 7.0, 7.0];
        let mut conf = vec![1.0; 50];
        let f0 = KeypointFrame::with_confidence(a, conf.clone()).unwrap();
        conf[7] = 0.0;
        let f1 = KeypointFrame::with_confidence(vec![[0.0; 3]; 50], conf).unwrap();
        let mut frames = vec![f0, f1];
        carry_forward_missing(&mut frames);
        assert_eq!(frames[1].joints[7], [7.0, 7.0, 7.0]);
        assert_eq!(frames[1].joints[6], [0.0, 0.0, 0.0]);
    }

    fn random_seq(rng: &mut impl Rng, t: usize) -> Matrix<f64> {
        Matrix::from_fn(t, 150, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn normalization_fixed_point_scale_invariance_and_centering() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let seq = random_seq(&mut rng, 6);
        let out = normalize_cartesian(&seq).unwrap();
        let mean_root: Vec<f64> = (0..3)
            .map(|k| (0..6).map(|t| out.get(t, 3 * NECK + k)).sum::<f64>() / 6.0)
            .collect();
        assert!(mean_root.iter().all(|v| v.abs() < 1e-6), "{mean_root:?}");

        let again = normalize_cartesian(&out).unwrap();
        assert!(again.max_abs_diff(&out) < 1e-6);

        let scaled = seq.map(|v| 3.0 * v);
        assert!(normalize_cartesian(&scaled).unwrap().max_abs_diff(&out) < 1e-6);
    }

    #[test]
    fn zero_shoulder_distance_is_an_error() {
        let seq = Matrix::<f64>::zeros(3, 150);
        assert!(matches!(normalize_cartesian(&seq), Err(Error::ZeroShoulderDistance)));
    }
}
