//! Rodrigues (axis-angle) rotation vectors.

use nalgebra::{Matrix3, Vector3};

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix of the axis-angle vector `omega`.
pub fn rodrigues(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    let (a, b) = if theta2 < 1e-16 {
        // series expansion of sin(θ)/θ and (1 − cos θ)/θ²
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Axis-angle vector of a rotation matrix, angle in `[0, π]`.
pub fn rodrigues_inv(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let axis_sin = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) / 2.0;
    let sin = axis_sin.norm();
    let theta = sin.atan2(cos);
    if sin > 1e-6 {
        return axis_sin * (theta / sin);
    }
    if cos > 0.0 {
        // small angle: R ≈ I + [ω]×
        return axis_sin;
    }
    // θ ≈ π: R ≈ 2 n nᵀ − I, take the best-conditioned column
    let b = (r + Matrix3::identity()) / 2.0;
    let (k, _) = (0..3).map(|k| (k, b[(k, k)])).fold((0, f64::MIN), |m, c| if c.1 > m.1 { c } else { m });
    let mut n = b.column(k).into_owned() / b[(k, k)].max(0.0).sqrt();
    n.normalize_mut();
    // resolve the sign with the (small) antisymmetric part when present
    if n.dot(&axis_sin) < 0.0 {
        n = -n;
    }
    n * theta
}

/// Partial derivatives `∂R/∂ω_k`, k = 0..3.
pub fn rodrigues_derivatives(omega: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let theta2 = omega.norm_squared();
    let e = [Vector3::x(), Vector3::y(), Vector3::z()];
    if theta2 < 1e-20 {
        return [skew(&e[0]), skew(&e[1]), skew(&e[2])];
    }
    // ∂R/∂ω_k = (ω_k [ω]× + [ω × (I − R) e_k]×) R / ‖ω‖²
    let r = rodrigues(omega);
    let wx = skew(omega);
    let i_minus_r = Matrix3::identity() - r;
    let d = |k: usize| (wx * omega[k] + skew(&omega.cross(&(i_minus_r * e[k])))) * r / theta2;
    [d(0), d(1), d(2)]
}

/// Rotation angle between two rotation matrices, in radians.
pub fn angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    rodrigues_inv(&(a.transpose() * b)).norm()
}

/// Intrinsic X-Y-Z Euler angles (radians): `R = Rx(a) · Ry(b) · Rz(c)`.
pub fn from_euler_xyz(a: f64, b: f64, c: f64) -> Matrix3<f64> {
    let rx = rodrigues(&Vector3::new(a, 0.0, 0.0));
    let ry = rodrigues(&Vector3::new(0.0, b, 0.0));
    let rz = rodrigues(&Vector3::new(0.0, 0.0, c));
    rx * ry * rz
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn zero_is_identity() {
        assert_eq!(rodrigues(&Vector3::zeros()), Matrix3::identity());
        assert_eq!(rodrigues_inv(&Matrix3::identity()), Vector3::zeros());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert!((r * Vector3::x() - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn half_turn_inverse() {
        let axis = Vector3::new(1.0, 2.0, -2.0).normalize();
        let r = rodrigues(&(axis * PI));
        let w = rodrigues_inv(&r);
        assert!((w.norm() - PI).abs() < 1e-9);
        assert!((rodrigues(&w) - r).norm() < 1e-9);
    }

    #[test]
    fn euler_matches_axis_products() {
        let r = from_euler_xyz(0.1, 0.0, 0.0);
        assert!((r[(1, 1)] - 0.1f64.cos()).abs() < 1e-15);
        assert!((r[(2, 1)] - 0.1f64.sin()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip(axis in prop::array::uniform3(-1.0..1.0f64), angle in 0.0..3.1f64) {
            let a = Vector3::from(axis);
            prop_assume!(a.norm() > 1e-3);
            let w = a.normalize() * angle;
            let back = rodrigues_inv(&rodrigues(&w));
            prop_assert!((back - w).norm() < 1e-12);
        }

        #[test]
        fn is_rotation(w in prop::array::uniform3(-3.0..3.0f64)) {
            let r = rodrigues(&Vector3::from(w));
            prop_assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-13);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-13);
        }

        #[test]
        fn derivatives_match_central_differences(w in prop::array::uniform3(-2.0..2.0f64)) {
            let w = Vector3::from(w);
            let d = rodrigues_derivatives(&w);
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = 1e-6;
                let fd = (rodrigues(&(w + e)) - rodrigues(&(w - e))) / 2e-6;
                prop_assert!((fd - d[k]).norm() < 1e-8);
            }
        }
    }
}
