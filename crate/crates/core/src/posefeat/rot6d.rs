//! Continuous 6D rotation encoding: the first two columns of the rotation
//! matrix, recovered with Gram-Schmidt.

use super::geometry::{column, cross, det, dot, from_columns, mul, norm, scale, sub, transpose, Mat3};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// `(a1, a2)`: the first and second matrix columns, each stored `x, y, z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot6D<S>(pub [S; 6]);

impl<S: Scalar> Rot6D<S> {
    pub fn first(&self) -> [S; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn second(&self) -> [S; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn from_slice(values: &[S]) -> Self {
        let mut out = [S::zero(); 6];
        out.copy_from_slice(&values[..6]);
        Rot6D(out)
    }
}

const ORTHONORMAL_TOL: f64 = 1e-4;

/// Checks orthonormality and `det = +1` within `1e-4`.
pub fn check_rotation<S: Scalar>(r: &Mat3<S>) -> Result<()> {
    let gram = mul(&transpose(r), r);
    for (i, row) in gram.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            if (v.as_f64() - target).abs() > ORTHONORMAL_TOL {
                return Err(Error::NotRotation(format!(
                    "R^T R [{i}][{j}] = {v} deviates from {target}"
                )));
            }
        }
    }
    let d = det(r).as_f64();
    if (d - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::NotRotation(format!("determinant {d}")));
    }
    Ok(())
}

pub fn rot6d_encode<S: Scalar>(r: &Mat3<S>) -> Result<Rot6D<S>> {
    check_rotation(r)?;
    Ok(encode_unchecked(r))
}

pub(crate) fn encode_unchecked<S: Scalar>(r: &Mat3<S>) -> Rot6D<S> {
    let a = column(r, 0);
    let b = column(r, 1);
    Rot6D([a[0], a[1], a[2], b[0], b[1], b[2]])
}

pub fn rot6d_decode<S: Scalar>(r: &Rot6D<S>) -> Result<Mat3<S>> {
    let a1 = r.first();
    let a2 = r.second();
    let (n1, n2) = (norm(a1), norm(a2));
    let tiny = c::<S>(1e-6);
    if n1 <= tiny || n2 <= tiny {
        return Err(Error::Degenerate(format!("column norms {n1}, {n2}")));
    }
    let cos = dot(a1, a2) / (n1 * n2);
    if cos.abs() >= S::one() - tiny {
        return Err(Error::Degenerate(format!("columns parallel (cos {cos})")));
    }
    let b1 = scale(a1, S::one() / n1);
    let proj = sub(a2, scale(b1, dot(b1, a2)));
    let b2 = scale(proj, S::one() / norm(proj));
    let b3 = cross(b1, b2);
    Ok(from_columns(b1, b2, b3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posefeat::geometry::{axis_angle, frobenius_diff, identity};

    #[test]
    fn identity_encodes_to_unit_columns() {
        let e = rot6d_encode(&identity::<f64>()).unwrap();
        assert_eq!(e.0, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r: Mat3<f64> = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(rot6d_encode(&r).unwrap().0, [0.0, 1.0, 0.0, -1.0, 0.0, 0.0]);
        let rr = axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        assert!(frobenius_diff(&rr, &r) < 1e-15);
    }

    #[test]
    fn decode_is_scale_invariant_and_orthogonalizes() {
        let id = identity::<f64>();
        let a = rot6d_decode(&Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        let b = rot6d_decode(&Rot6D([2.0, 0.0, 0.0, 0.0, 5.0, 0.0])).unwrap();
        // a2 = (1,1,0): subtracting its b1 component leaves (0,1,0).
        let g = rot6d_decode(&Rot6D([1.0, 0.0, 0.0, 1.0, 1.0, 0.0])).unwrap();
        for m in [a, b, g] {
            assert!(frobenius_diff(&m, &id) < 1e-15);
        }
    }

    #[test]
    fn rejects_degenerate_and_non_rotations() {
        assert!(rot6d_decode(&Rot6D([1.0, 0.0, 0.0, 2.0, 0.0, 0.0])).is_err());
        assert!(rot6d_decode(&Rot6D([0.0, 0.0, 0.0, 0.0, 1.0, 0.0])).is_err());
        let reflect: Mat3<f64> = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(rot6d_encode(&reflect).is_err());
        let skewed: Mat3<f64> = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(rot6d_encode(&skewed).is_err());
    }
}
