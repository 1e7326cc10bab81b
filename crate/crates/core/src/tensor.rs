//! Small 3x3 tensor algebra: the Hodge map between vectors and
//! antisymmetric matrices, cofactors, Hall conversions and truncated
//! power series in the magnetic field.
//!
//! Convention: `hodge(eta) * v == eta.cross(&v)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Relative tolerance for accepting a matrix as antisymmetric.
pub const ANTISYM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("matrix is not antisymmetric (relative defect {defect:e})")]
    NotAntisymmetric { defect: f64 },
    #[error("zero-order coefficient is singular")]
    SingularZeroOrder,
    #[error("cofactor matrix is singular")]
    SingularCofactor,
    #[error("series terms of order >= 3 need a direction")]
    MissingDirection,
    #[error("field h is not parallel to the stored series direction")]
    DirectionMismatch,
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}

pub fn hodge(eta: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -eta[2], eta[1], //
        eta[2], 0.0, -eta[0], //
        -eta[1], eta[0], 0.0,
    )
}

/// Inverse of [`hodge`] on antisymmetric matrices.
pub fn hodge_inv(a: &Mat3) -> Result<Vec3, TensorError> {
    let scale = a.norm();
    let defect = (a + a.transpose()).norm();
    if defect > ANTISYM_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(TensorError::NotAntisymmetric {
            defect: defect / scale,
        });
    }
    Ok(Vec3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    ))
}

/// Cofactor matrix, `Cof(A)^T A = det(A) I`.
pub fn cofactor(a: &Mat3) -> Mat3 {
    let m = |r0: usize, r1: usize, c0: usize, c1: usize| {
        a[(r0, c0)] * a[(r1, c1)] - a[(r0, c1)] * a[(r1, c0)]
    };
    Mat3::new(
        m(1, 2, 1, 2),
        -m(1, 2, 0, 2),
        m(1, 2, 0, 1),
        -m(0, 2, 1, 2),
        m(0, 2, 0, 2),
        -m(0, 2, 0, 1),
        m(0, 1, 1, 2),
        -m(0, 1, 0, 2),
        m(0, 1, 0, 1),
    )
}

/// Frobenius norm of `P^T hodge(xi) P - hodge(Cof(P)^T xi)`.
pub fn conjugate_identity_check(p: &Mat3, xi: &Vec3) -> f64 {
    let lhs = p.transpose() * hodge(xi) * p;
    let rhs = hodge(&(cofactor(p).transpose() * xi));
    (lhs - rhs).norm()
}

/// Hall matrix `R = -Cof(sigma0)^{-1} S`.
pub fn hall_from_s(sigma0: &Mat3, s: &Mat3) -> Result<Mat3, TensorError> {
    let cof_inv = cofactor(sigma0)
        .try_inverse()
        .ok_or(TensorError::SingularCofactor)?;
    Ok(-(cof_inv * s))
}

/// Inverse of [`hall_from_s`]: `S = -Cof(sigma0) R`.
pub fn s_from_hall(sigma0: &Mat3, r: &Mat3) -> Mat3 {
    -(cofactor(sigma0) * r)
}

pub fn sym(a: &Mat3) -> Mat3 {
    0.5 * (a + a.transpose())
}

pub fn antisym(a: &Mat3) -> Mat3 {
    0.5 * (a - a.transpose())
}

/// Sorted eigenvalues of the symmetric part.
pub fn sym_eigenvalues(a: &Mat3) -> [f64; 3] {
    let e = sym(a).symmetric_eigenvalues();
    let mut v = [e[0], e[1], e[2]];
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v
}

/// `[[a;3];3]` row-major view used for serialization.
pub fn to_rows(a: &Mat3) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[(i, j)];
        }
    }
    out
}

pub fn from_rows(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

/// Serde adapter for `Mat3` as nested row-major arrays.
pub mod serde_mat3 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat3, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat3, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(from_rows(&rows))
    }
}

/// Serde adapter for `Option<Mat3>`.
pub mod serde_opt_mat3 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat3>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat3>, D::Error> {
        let rows = <Option<[[f64; 3]; 3]>>::deserialize(d)?;
        Ok(rows.as_ref().map(from_rows))
    }
}

/// Index pairs `(i, j)` with `i <= j`, in slot order.
pub const QUAD_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Evaluate a quadratic form stored in six symmetric slots.
pub fn eval_quadratic(slots: &[Mat3; 6], h: &Vec3) -> Mat3 {
    let mut out = Mat3::zeros();
    for (slot, &(i, j)) in slots.iter().zip(QUAD_PAIRS.iter()) {
        out += slot * (h[i] * h[j]);
    }
    out
}

/// Recover slots from a quadratic map by polarization.
pub fn polarize_quadratic(q: impl Fn(&Vec3) -> Mat3) -> [Mat3; 6] {
    let e = |i: usize| Vec3::ith(i, 1.0);
    let diag = [q(&e(0)), q(&e(1)), q(&e(2))];
    let mut slots = [Mat3::zeros(); 6];
    for (k, &(i, j)) in QUAD_PAIRS.iter().enumerate() {
        slots[k] = if i == j {
            diag[i]
        } else {
            q(&(e(i) + e(j))) - diag[i] - diag[j]
        };
    }
    slots
}

/// Truncated expansion `c(h) = c0 + c1(h) + ... + cn(h)`, homogeneous of
/// degree k in h for each k. Odd terms are antisymmetric, even terms
/// symmetric. Order one is stored as `c1(h) = hodge(linear * h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbSeries {
    pub order: usize,
    pub zeroth: Mat3,
    pub linear: Mat3,
    pub quadratic: [Mat3; 6],
    pub direction: Option<Vec3>,
    pub higher: Vec<Mat3>,
}

impl PerturbSeries {
    pub fn new(zeroth: Mat3, linear: Mat3, quadratic: [Mat3; 6]) -> Self {
        Self {
            order: 2,
            zeroth,
            linear,
            quadratic,
            direction: None,
            higher: Vec::new(),
        }
    }

    /// Isotropic phase with conductivity `a` and Hall coefficient `r`.
    pub fn isotropic(a: f64, r: f64) -> Self {
        Self::new(
            Mat3::identity() * a,
            Mat3::identity() * (-a * a * r),
            [Mat3::zeros(); 6],
        )
    }

    /// Attach terms of order 3..=order along a direction.
    pub fn with_higher(mut self, direction: Vec3, higher: Vec<Mat3>) -> Result<Self, TensorError> {
        let n = direction.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(TensorError::InvalidSeries("zero direction".into()));
        }
        self.direction = Some(direction / n);
        self.order = 2 + higher.len();
        self.higher = higher;
        Ok(self)
    }

    /// Relative parity defect: odd terms antisymmetric, even terms symmetric.
    pub fn parity_defect(&self) -> f64 {
        let scale = self.zeroth.norm().max(f64::MIN_POSITIVE);
        let mut d = antisym(&self.zeroth).norm();
        for q in &self.quadratic {
            d = d.max(antisym(q).norm());
        }
        for (k, t) in self.higher.iter().enumerate() {
            let part = if (k + 3) % 2 == 1 { sym(t) } else { antisym(t) };
            d = d.max(part.norm());
        }
        d / scale
    }

    /// Scale `t` such that `h = t * direction`.
    fn along(&self, h: &Vec3) -> Result<f64, TensorError> {
        let d = self.direction.ok_or(TensorError::MissingDirection)?;
        let t = h.dot(&d);
        if (h - d * t).norm() > 1e-12 * h.norm().max(1.0) {
            return Err(TensorError::DirectionMismatch);
        }
        Ok(t)
    }

    /// Homogeneous term of degree `k` evaluated at `h`.
    pub fn term(&self, k: usize, h: &Vec3) -> Result<Mat3, TensorError> {
        match k {
            0 => Ok(self.zeroth),
            1 => Ok(hodge(&(self.linear * h))),
            2 => Ok(eval_quadratic(&self.quadratic, h)),
            _ if k > self.order || k - 3 >= self.higher.len() => Ok(Mat3::zeros()),
            _ => {
                if h.norm() == 0.0 {
                    return Ok(Mat3::zeros());
                }
                let t = self.along(h)?;
                Ok(self.higher[k - 3] * t.powi(k as i32))
            }
        }
    }

    /// Partial sum up to `order`.
    pub fn evaluate(&self, h: &Vec3) -> Result<Mat3, TensorError> {
        let mut out = Mat3::zeros();
        for k in 0..=self.order {
            out += self.term(k, h)?;
        }
        Ok(out)
    }
}

/// Series inverse `rho = sigma^{-1}` to order `n`. Missing terms of `sigma`
/// beyond its stored order are zero. For `n >= 3` a direction is needed,
/// either stored in `sigma` or supplied.
pub fn invert_series(
    sigma: &PerturbSeries,
    n: usize,
    direction: Option<Vec3>,
) -> Result<PerturbSeries, TensorError> {
    let rho0 = sigma
        .zeroth
        .try_inverse()
        .ok_or(TensorError::SingularZeroOrder)?;
    let defect = antisym(&sigma.zeroth).norm();
    if defect > ANTISYM_TOL * sigma.zeroth.norm() {
        return Err(TensorError::InvalidSeries(
            "zero-order term is not symmetric".into(),
        ));
    }
    let linear = if n >= 1 {
        -(cofactor(&sigma.zeroth)
            .try_inverse()
            .ok_or(TensorError::SingularCofactor)?
            * sigma.linear)
    } else {
        Mat3::zeros()
    };
    let quadratic = if n >= 2 {
        let mut slots = polarize_quadratic(|h| {
            let s1 = hodge(&(sigma.linear * h));
            let r1 = hodge(&(linear * h));
            let s2 = eval_quadratic(&sigma.quadratic, h);
            -(rho0 * (s1 * r1 + s2 * rho0))
        });
        for s in slots.iter_mut() {
            *s = sym(s);
        }
        slots
    } else {
        [Mat3::zeros(); 6]
    };
    let mut out = PerturbSeries::new(rho0, linear, quadratic);
    out.order = n.min(2);
    if n >= 3 {
        let d = match direction.or(sigma.direction) {
            Some(d) => d.normalize(),
            None => return Err(TensorError::MissingDirection),
        };
        if let Some(sd) = sigma.direction {
            if (sd - d).norm() > 1e-12 && (sd + d).norm() > 1e-12 {
                return Err(TensorError::DirectionMismatch);
            }
        }
        // Coefficients along t with h = t d.
        let s_at = |k: usize| -> Result<Mat3, TensorError> {
            match k {
                0..=2 => sigma.term(k, &d),
                _ => {
                    let mut probe = sigma.clone();
                    probe.direction = Some(sigma.direction.unwrap_or(d));
                    probe.term(k, &d)
                }
            }
        };
        let mut rho = vec![rho0, out.term(1, &d)?, out.term(2, &d)?];
        for k in 3..=n {
            let mut acc = Mat3::zeros();
            for j in 1..=k {
                acc += s_at(j)? * rho[k - j];
            }
            let mut next = -(rho0 * acc);
            next = if k % 2 == 0 { sym(&next) } else { antisym(&next) };
            rho.push(next);
        }
        out = out.with_higher(d, rho[3..].to_vec())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn printed_pattern(eta: &Vec3) -> Mat3 {
        Mat3::new(
            0.0, -eta[0], eta[1], //
            eta[0], 0.0, -eta[2], //
            -eta[1], eta[2], 0.0,
        )
    }

    fn cof_by_columns(a: &Mat3) -> Mat3 {
        let c = |i: usize| a.column(i).into_owned();
        Mat3::from_columns(&[c(1).cross(&c(2)), c(2).cross(&c(0)), c(0).cross(&c(1))])
    }

    #[test]
    fn hodge_is_cross_product() {
        let eta = Vec3::new(0.3, -1.2, 2.5);
        let v = Vec3::new(-0.7, 0.1, 4.0);
        assert!((hodge(&eta) * v - eta.cross(&v)).norm() < 1e-15);
        let e3 = hodge(&Vec3::z());
        assert_eq!(e3, Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn swapped_pattern_breaks_conjugation() {
        let p = Mat3::new(1.0, 0.2, 0.0, 0.0, 2.0, 0.5, 0.3, 0.0, 1.5);
        let xi = Vec3::new(0.4, -0.3, 1.1);
        let bad = p.transpose() * printed_pattern(&xi) * p
            - printed_pattern(&(cofactor(&p).transpose() * xi));
        assert!(bad.norm() > 1e-2);
        assert!(conjugate_identity_check(&p, &xi) < 1e-13);
        let swapped = Vec3::new(xi[2], xi[1], xi[0]);
        assert!((printed_pattern(&xi) - hodge(&swapped)).norm() < 1e-15);
    }

    #[test]
    fn hodge_inv_rejects_symmetric_part() {
        let mut a = hodge(&Vec3::new(1.0, 2.0, 3.0));
        a[(0, 1)] += 1e-3;
        assert!(matches!(
            hodge_inv(&a),
            Err(TensorError::NotAntisymmetric { .. })
        ));
    }

    #[test]
    fn diagonal_cofactor_and_hall() {
        let s0 = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(cofactor(&s0), Mat3::from_diagonal(&Vec3::new(6.0, 3.0, 2.0)));
        let r = hall_from_s(&(Mat3::identity() * 2.0), &(Mat3::identity() * 3.0)).unwrap();
        assert!((r + Mat3::identity() * 0.75).norm() < 1e-15);
    }

    #[test]
    fn singular_inputs_are_reported() {
        let z = PerturbSeries::new(Mat3::zeros(), Mat3::zeros(), [Mat3::zeros(); 6]);
        assert_eq!(invert_series(&z, 2, None), Err(TensorError::SingularZeroOrder));
        let rank1 = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(
            hall_from_s(&rank1, &Mat3::identity()),
            Err(TensorError::SingularCofactor)
        );
        let iso = PerturbSeries::isotropic(1.0, 1.0);
        assert_eq!(invert_series(&iso, 3, None), Err(TensorError::MissingDirection));
    }

    #[test]
    fn isotropic_phase_inverse_matches_closed_form() {
        // sigma(h) = a (I + hodge(u)), rho(h) = (I - hodge(u) + u u^T) / (a (1 + |u|^2)).
        let a = 2.0;
        let series = PerturbSeries::new(
            Mat3::identity() * a,
            Mat3::identity() * a,
            [Mat3::zeros(); 6],
        );
        let d = Vec3::new(0.3, 0.4, 1.2).normalize();
        let rho = invert_series(&series, 8, Some(d)).unwrap();
        let t = 0.01;
        let u = d * t;
        let exact = (Mat3::identity() - hodge(&u) + u * u.transpose()) / (a * (1.0 + u.norm_squared()));
        let approx = rho.evaluate(&u).unwrap();
        assert!((exact - approx).norm() < 1e-14);
    }

    fn arb_vec() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-2.0..2.0f64).prop_map(|v| Vec3::new(v[0], v[1], v[2]))
    }

    fn arb_mat() -> impl Strategy<Value = Mat3> {
        prop::array::uniform9(-2.0..2.0f64).prop_map(|v| Mat3::from_row_slice(&v))
    }

    fn arb_spd() -> impl Strategy<Value = Mat3> {
        arb_mat().prop_map(|b| b * b.transpose() + Mat3::identity() * 0.5)
    }

    proptest! {
        #[test]
        fn hodge_round_trip(eta in arb_vec()) {
            let back = hodge_inv(&hodge(&eta)).unwrap();
            prop_assert!((back - eta).norm() <= 1e-15 * (1.0 + eta.norm()));
        }

        #[test]
        fn hodge_is_linear(a in arb_vec(), b in arb_vec(), s in -3.0..3.0f64) {
            let lhs = hodge(&(a * s + b));
            let rhs = hodge(&a) * s + hodge(&b);
            prop_assert!((lhs - rhs).norm() <= 1e-14 * (1.0 + lhs.norm()));
        }

        #[test]
        fn cofactor_adjugate_identity(a in arb_mat()) {
            let lhs = cofactor(&a).transpose() * a;
            let rhs = Mat3::identity() * a.determinant();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + a.norm().powi(3)));
            prop_assert!((cofactor(&a) - cof_by_columns(&a)).norm() <= 1e-13 * (1.0 + a.norm_squared()));
        }

        #[test]
        fn conjugation_identity_holds(p in arb_mat(), xi in arb_vec()) {
            let scale = 1.0 + p.norm().powi(2) * xi.norm();
            prop_assert!(conjugate_identity_check(&p, &xi) <= 1e-12 * scale);
        }

        #[test]
        fn hall_round_trip(s0 in arb_spd(), s in arb_mat()) {
            let r = hall_from_s(&s0, &s).unwrap();
            prop_assert!((s_from_hall(&s0, &r) - s).norm() <= 1e-9 * (1.0 + s.norm()));
        }

        #[test]
        fn first_order_inverse_matches_hall(s0 in arb_spd(), s in arb_mat(), h in arb_vec()) {
            let lhs = -(s0.try_inverse().unwrap() * hodge(&(s * h)) * s0.try_inverse().unwrap());
            let r = hall_from_s(&s0, &s).unwrap();
            prop_assert!((lhs - hodge(&(r * h))).norm() <= 1e-8 * (1.0 + lhs.norm()));
        }
    }
}
