//! Fixed-size 3D vector and 3x3 matrix helpers.

use crate::scalar::Scalar;

pub type Vec3<S> = [S; 3];

/// Row-major 3x3 matrix: `m[row][col]`.
pub type Mat3<S> = [[S; 3]; 3];

#[inline]
pub fn dot<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn sub<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale<S: Scalar>(a: Vec3<S>, k: S) -> Vec3<S> {
    [a[0] * k, a[1] * k, a[2] * k]
}

#[inline]
pub fn norm<S: Scalar>(a: Vec3<S>) -> S {
    dot(a, a).sqrt()
}

/// Unit vector along `a`, or `None` when `|a|` is not above `eps`.
pub fn normalize<S: Scalar>(a: Vec3<S>, eps: S) -> Option<Vec3<S>> {
    let n = norm(a);
    (n > eps).then(|| scale(a, S::one() / n))
}

pub fn column<S: Scalar>(m: &Mat3<S>, j: usize) -> Vec3<S> {
    [m[0][j], m[1][j], m[2][j]]
}

pub fn from_columns<S: Scalar>(a: Vec3<S>, b: Vec3<S>, c: Vec3<S>) -> Mat3<S> {
    [[a[0], b[0], c[0]], [a[1], b[1], c[1]], [a[2], b[2], c[2]]]
}

pub fn identity<S: Scalar>() -> Mat3<S> {
    let (o, z) = (S::one(), S::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn mul<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose<S: Scalar>(a: &Mat3<S>) -> Mat3<S> {
    let mut out = *a;
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[j][i];
        }
    }
    out
}

pub fn mul_vec<S: Scalar>(a: &Mat3<S>, v: Vec3<S>) -> Vec3<S> {
    [dot(a[0], v), dot(a[1], v), dot(a[2], v)]
}

pub fn det<S: Scalar>(a: &Mat3<S>) -> S {
    dot(a[0], cross(a[1], a[2]))
}

pub fn frobenius_diff<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> S {
    let mut acc = S::zero();
    for i in 0..3 {
        for j in 0..3 {
            let d = a[i][j] - b[i][j];
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn cast_mat<S: Scalar, T: Scalar>(a: &Mat3<S>) -> Mat3<T> {
    a.map(|row| row.map(|v| T::of(v.as_f64())))
}

pub fn cast_vec<S: Scalar, T: Scalar>(a: Vec3<S>) -> Vec3<T> {
    a.map(|v| T::of(v.as_f64()))
}

/// Rotation by `angle` radians about the unit `axis` (Rodrigues).
pub fn axis_angle<S: Scalar>(axis: Vec3<S>, angle: S) -> Mat3<S> {
    let (s, c) = angle.sin_cos();
    let t = S::one() - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}
