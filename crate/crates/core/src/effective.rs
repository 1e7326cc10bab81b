//! Effective coefficients assembled from the correctors: conductivity,
//! Hall matrix, second-order magneto-resistance and the dissipation gap
//! `sigma* M* sigma* - <(sigma0 P0)^T M (sigma0 P0)>`.

use crate::microstructure::GridField;
use crate::solver::{mean, solve_p0, solve_p1, solve_p2_zero_hall, CorrectorGrid, SolverConfig, SolverError};
use crate::spectral::{Spectral, Workspace};
use crate::tensor::{
    antisym, cofactor, eval_quadratic, hall_from_s, hodge, invert_series, serde_mat3, sym, sym_eigenvalues,
    Mat3, PerturbSeries, TensorError, Vec3,
};
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EffectiveError {
    #[error("corrector grid {found:?} does not match field grid {expected:?}")]
    GridMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("the field has a nonzero first-order Hall term")]
    HallNotZero,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn matched<'a>(field: &'a GridField, grids: &[&CorrectorGrid]) -> Result<Cow<'a, GridField>, EffectiveError> {
    let field = field.compacted();
    for g in grids {
        if g.dims != field.dims() {
            return Err(EffectiveError::GridMismatch {
                expected: field.dims(),
                found: g.dims,
            });
        }
    }
    Ok(field)
}

fn average(n: usize, f: impl Fn(usize) -> Mat3) -> Mat3 {
    (0..n).fold(Mat3::zeros(), |acc, i| acc + f(i)) / n as f64
}

/// `<sigma0 P0>` before symmetrization, and the energy form `<P0^T sigma0 P0>`.
pub fn conductivity_forms(field: &GridField, p0: &CorrectorGrid) -> Result<(Mat3, Mat3), EffectiveError> {
    let field = matched(field, &[p0])?;
    let sg = field.sigma();
    let flux = average(field.len(), |i| sg[i] * p0.values[i]);
    let energy = average(field.len(), |i| p0.values[i].transpose() * sg[i] * p0.values[i]);
    Ok((flux, energy))
}

/// Effective conductivity: symmetric part of `<sigma0 P0>`.
pub fn effective_conductivity(field: &GridField, p0: &CorrectorGrid) -> Result<Mat3, EffectiveError> {
    let (flux, _) = conductivity_forms(field, p0)?;
    let skew = antisym(&flux).norm();
    if skew > 1e-8 * flux.norm() {
        log::warn!("discarding antisymmetric part of size {skew:e} from the effective conductivity");
    } else {
        log::debug!("antisymmetric part of the effective conductivity: {skew:e}");
    }
    Ok(sym(&flux))
}

/// `S* = <Cof(P0)^T S>`.
pub fn effective_s_matrix(field: &GridField, p0: &CorrectorGrid) -> Result<Mat3, EffectiveError> {
    let field = matched(field, &[p0])?;
    let s = field.s();
    Ok(average(field.len(), |i| cofactor(&p0.values[i]).transpose() * s[i]))
}

/// `R* = -Cof(sigma*)^{-1} S*`.
pub fn effective_hall(sigma_star: &Mat3, s_star: &Mat3) -> Result<Mat3, EffectiveError> {
    Ok(hall_from_s(sigma_star, s_star)?)
}

/// Second route: `Cof(sigma*) R* = <Cof(sigma0 P0)^T R>` with the local Hall matrix `R`.
pub fn effective_hall_local(
    field: &GridField,
    p0: &CorrectorGrid,
    sigma_star: &Mat3,
) -> Result<Mat3, EffectiveError> {
    let field = matched(field, &[p0])?;
    let (sg, s) = (field.sigma(), field.s());
    let mut acc = Mat3::zeros();
    for i in 0..field.len() {
        let r = hall_from_s(&sg[i], &s[i])?;
        acc += cofactor(&(sg[i] * p0.values[i])).transpose() * r;
    }
    acc /= field.len() as f64;
    let inv = cofactor(sigma_star)
        .try_inverse()
        .ok_or(TensorError::SingularCofactor)?;
    Ok(inv * acc)
}

fn inverse(m: &Mat3) -> Result<Mat3, EffectiveError> {
    Ok(m.try_inverse().ok_or(TensorError::SingularZeroOrder)?)
}

struct FirstOrder {
    sigma_star: Mat3,
    sigma_star_inv: Mat3,
    hall_star: Mat3,
    gap: Mat3,
}

fn first_order(field: &GridField, p0: &CorrectorGrid, p1: &CorrectorGrid, h: &Vec3) -> Result<FirstOrder, EffectiveError> {
    let sigma_star = effective_conductivity(field, p0)?;
    let s_star = effective_s_matrix(field, p0)?;
    let field = matched(field, &[p0, p1])?;
    let (sg, s) = (field.sigma(), field.s());
    let sigma_star_inv = inverse(&sigma_star)?;
    let mut acc = Mat3::zeros();
    for i in 0..field.len() {
        let xi = hodge(&(s[i] * h)) * p0.values[i] + sg[i] * p1.values[i];
        let local_inv = inverse(&sg[i])?;
        acc += xi.transpose() * local_inv * xi;
    }
    acc /= field.len() as f64;
    let hall_star = hodge(&(s_star * h));
    let gap = sym(&(acc - hall_star.transpose() * sigma_star_inv * hall_star));
    Ok(FirstOrder {
        sigma_star,
        sigma_star_inv,
        hall_star,
        gap,
    })
}

/// Dissipation gap `<xi^T sigma0^{-1} xi> - hodge(S* h)^T sigma*^{-1} hodge(S* h)`
/// with `xi = hodge(S h) P0 + sigma0 P1(h)`.
pub fn dissipation_gap(
    field: &GridField,
    p0: &CorrectorGrid,
    p1: &CorrectorGrid,
    h: &Vec3,
) -> Result<Mat3, EffectiveError> {
    Ok(first_order(field, p0, p1, h)?.gap)
}

/// Local second-order resistivity `M(h, h)` of every voxel.
pub fn local_magnetoresistance(field: &GridField, h: &Vec3) -> Result<Vec<Mat3>, EffectiveError> {
    let quad = field.quadratic();
    (0..field.len())
        .map(|i| {
            let slots = quad.map_or([Mat3::zeros(); 6], |q| q[i]);
            let series = PerturbSeries::new(field.sigma()[i], field.s()[i], slots);
            Ok(invert_series(&series, 2, None)?.term(2, h)?)
        })
        .collect()
}

/// Effective second-order resistivity `M*(h, h)` and conductivity `N*(h, h)`.
pub fn effective_magnetoresistance(
    field: &GridField,
    p0: &CorrectorGrid,
    p1: &CorrectorGrid,
    h: &Vec3,
) -> Result<(Mat3, Mat3), EffectiveError> {
    let fo = first_order(field, p0, p1, h)?;
    let field = matched(field, &[p0, p1])?;
    let m_local = local_magnetoresistance(&field, h)?;
    let sg = field.sigma();
    let weighted = average(field.len(), |i| {
        let j = sg[i] * p0.values[i];
        j.transpose() * m_local[i] * j
    });
    let m_star = sym(&(fo.sigma_star_inv * (weighted + fo.gap) * fo.sigma_star_inv));
    let n_star = sym(&(-(fo.sigma_star * m_star * fo.sigma_star)
        + fo.hall_star * fo.sigma_star_inv * fo.hall_star));
    Ok((m_star, n_star))
}

/// `N*(h, h)` from the energy form `<P0^T hodge(S h) P1 + P0^T N(h, h) P0>`.
pub fn effective_n_direct(
    field: &GridField,
    p0: &CorrectorGrid,
    p1: &CorrectorGrid,
    h: &Vec3,
) -> Result<Mat3, EffectiveError> {
    let field = matched(field, &[p0, p1])?;
    let quad = field.quadratic();
    let s = field.s();
    Ok(sym(&average(field.len(), |i| {
        let n = quad.map_or(Mat3::zeros(), |q| eval_quadratic(&q[i], h));
        p0.values[i].transpose() * (hodge(&(s[i] * h)) * p1.values[i] + n * p0.values[i])
    })))
}

/// Relative curl of `hodge(R h) sigma0 P0`, column by column:
/// `||curl v|| / (2 pi ||v||)`, and 0 when `v` vanishes.
pub fn curl_defect(field: &GridField, p0: &CorrectorGrid, h: &Vec3) -> Result<f64, EffectiveError> {
    let field = matched(field, &[p0])?;
    let (sg, s) = (field.sigma(), field.s());
    let mut cols = vec![Vec::with_capacity(field.len()); 3];
    for i in 0..field.len() {
        let r = hall_from_s(&sg[i], &s[i])?;
        let v = hodge(&(r * h)) * sg[i] * p0.values[i];
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(v.column(c).into_owned());
        }
    }
    let sp = Spectral::new(field.dims());
    let mut ws = Workspace::default();
    let mut curl2 = 0.0;
    let mut norm2 = 0.0;
    for col in &cols {
        curl2 += sp.curl_rms(col, &mut ws).powi(2);
        norm2 += col.iter().map(|v| v.norm_squared()).sum::<f64>() / field.len() as f64;
    }
    if norm2 == 0.0 {
        return Ok(0.0);
    }
    Ok(curl2.sqrt() / (TAU * norm2.sqrt()))
}

/// Results at fourth order for a medium without first-order Hall term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourthOrder {
    /// `<sigma0 P2 + sigma2 P0>`.
    #[serde(with = "serde_mat3")]
    pub sigma2_star: Mat3,
    /// `<P0^T sigma2 P0>`.
    #[serde(with = "serde_mat3")]
    pub sigma2_star_energy: Mat3,
    /// `sigma2* sigma*^{-1} sigma2* - <zeta^T sigma0^{-1} zeta>`, `zeta = sigma0 P2 + sigma2 P0`.
    #[serde(with = "serde_mat3")]
    pub gap: Mat3,
    /// `sigma* rho4* sigma* - <(sigma0 P0)^T rho4 (sigma0 P0)>`.
    #[serde(with = "serde_mat3")]
    pub gap_via_resistivity: Mat3,
    #[serde(with = "serde_mat3")]
    pub rho4_star: Mat3,
}

pub fn fourth_order_gap(
    field: &GridField,
    p0: &CorrectorGrid,
    p2: &CorrectorGrid,
    h: &Vec3,
) -> Result<FourthOrder, EffectiveError> {
    if field.has_hall() {
        return Err(EffectiveError::HallNotZero);
    }
    let sigma_star = effective_conductivity(field, p0)?;
    let sigma_star_inv = inverse(&sigma_star)?;
    let field = matched(field, &[p0, p2])?;
    let sg = field.sigma();
    let quad = field.quadratic();
    let s2: Vec<Mat3> = (0..field.len())
        .map(|i| quad.map_or(Mat3::zeros(), |q| eval_quadratic(&q[i], h)))
        .collect();
    let zeta: Vec<Mat3> = (0..field.len())
        .map(|i| sg[i] * p2.values[i] + s2[i] * p0.values[i])
        .collect();
    let sigma2_star = sym(&mean(&zeta));
    let sigma2_star_energy = sym(&average(field.len(), |i| {
        p0.values[i].transpose() * s2[i] * p0.values[i]
    }));
    let mut quad_form = Mat3::zeros();
    for i in 0..field.len() {
        quad_form += zeta[i].transpose() * inverse(&sg[i])? * zeta[i];
    }
    quad_form /= field.len() as f64;
    let lead = sigma2_star * sigma_star_inv * sigma2_star;
    let gap = sym(&(lead - quad_form));

    let sigma4_star = sym(&average(field.len(), |i| {
        p0.values[i].transpose() * s2[i] * p2.values[i]
    }));
    let rho4_star = sym(&(sigma_star_inv * (lead - sigma4_star) * sigma_star_inv));
    let mut local = Mat3::zeros();
    if h.norm() > 0.0 {
        for i in 0..field.len() {
            let slots = quad.map_or([Mat3::zeros(); 6], |q| q[i]);
            let series = PerturbSeries::new(sg[i], Mat3::zeros(), slots);
            let rho4 = invert_series(&series, 4, Some(*h))?.term(4, h)?;
            let j = sg[i] * p0.values[i];
            local += j.transpose() * rho4 * j;
        }
        local /= field.len() as f64;
    }
    let gap_via_resistivity = sym(&(sigma_star * rho4_star * sigma_star - local));
    Ok(FourthOrder {
        sigma2_star,
        sigma2_star_energy,
        gap,
        gap_via_resistivity,
        rho4_star,
    })
}

/// Tolerance for the sign of gap eigenvalues.
pub fn gap_tolerance(gap: &Mat3, sigma_star: &Mat3, h: &Vec3, solver_tolerance: f64) -> f64 {
    (1e-6 * gap.norm()).max(10.0 * solver_tolerance * sigma_star.norm() * h.norm_squared())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveReport {
    pub dims: [usize; 3],
    pub h: [f64; 3],
    #[serde(with = "serde_mat3")]
    pub sigma_star: Mat3,
    /// Relative antisymmetric part of `<sigma0 P0>`, dropped from `sigma_star`.
    pub sigma_star_skew: f64,
    /// Relative mismatch between `<sigma0 P0>` and `<P0^T sigma0 P0>`.
    pub energy_mismatch: f64,
    #[serde(with = "serde_mat3")]
    pub s_star: Mat3,
    #[serde(with = "serde_mat3")]
    pub hall_star: Mat3,
    #[serde(with = "serde_mat3")]
    pub hall_star_local: Mat3,
    #[serde(with = "serde_mat3")]
    pub m_star: Mat3,
    #[serde(with = "serde_mat3")]
    pub n_star: Mat3,
    #[serde(with = "serde_mat3")]
    pub n_star_direct: Mat3,
    #[serde(with = "serde_mat3")]
    pub gap: Mat3,
    pub gap_eigenvalues: [f64; 3],
    pub gap_tolerance: f64,
    pub gap_psd: bool,
    pub curl_defect: f64,
    pub residuals_p0: [f64; 3],
    pub residuals_p1: [f64; 3],
    pub iterations_p0: [usize; 3],
    pub iterations_p1: [usize; 3],
    pub fourth_order: Option<FourthOrder>,
}

/// Solve all cell problems at `h` and assemble every effective quantity.
/// The fourth-order block is filled for media without Hall term.
pub fn analyze(field: &GridField, h: &Vec3, cfg: &SolverConfig) -> Result<EffectiveReport, EffectiveError> {
    let field = field.compacted();
    let p0 = solve_p0(&field, cfg)?.p0;
    let p1 = solve_p1(&field, h, &p0, cfg)?;
    let p2 = if field.has_hall() {
        None
    } else {
        Some(solve_p2_zero_hall(&field, h, &p0, cfg)?)
    };
    assemble(&field, h, cfg, &p0, &p1, p2.as_ref())
}

/// Assemble the report from correctors already solved on the compacted grid.
pub fn assemble(
    field: &GridField,
    h: &Vec3,
    cfg: &SolverConfig,
    p0: &CorrectorGrid,
    p1: &CorrectorGrid,
    p2: Option<&CorrectorGrid>,
) -> Result<EffectiveReport, EffectiveError> {
    let field = field.compacted();
    let (flux, energy) = conductivity_forms(&field, p0)?;
    let sigma_star = sym(&flux);
    let s_star = effective_s_matrix(&field, p0)?;
    let hall_star = effective_hall(&sigma_star, &s_star)?;
    let hall_star_local = effective_hall_local(&field, p0, &sigma_star)?;
    let gap = dissipation_gap(&field, p0, &p1, h)?;
    let (m_star, n_star) = effective_magnetoresistance(&field, p0, &p1, h)?;
    let n_star_direct = effective_n_direct(&field, p0, &p1, h)?;
    let curl = curl_defect(&field, p0, h)?;
    let tol = gap_tolerance(&gap, &sigma_star, h, cfg.tolerance);
    let eig = sym_eigenvalues(&gap);
    let fourth_order = match p2 {
        Some(p2) if !field.has_hall() => Some(fourth_order_gap(&field, p0, p2, h)?),
        _ => None,
    };
    Ok(EffectiveReport {
        dims: field.dims(),
        h: [h[0], h[1], h[2]],
        sigma_star,
        sigma_star_skew: antisym(&flux).norm() / flux.norm(),
        energy_mismatch: (flux - energy).norm() / flux.norm(),
        s_star,
        hall_star,
        hall_star_local,
        m_star,
        n_star,
        n_star_direct,
        gap,
        gap_eigenvalues: eig,
        gap_tolerance: tol,
        gap_psd: eig[0] >= -tol,
        curl_defect: curl,
        residuals_p0: p0.residuals,
        residuals_p1: p1.residuals,
        iterations_p0: p0.iterations,
        iterations_p1: p1.iterations,
        fourth_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::{sample, MaterialSpec, Profile1d};

    #[test]
    fn homogeneous_medium_has_no_gap() {
        let spec = MaterialSpec::Homogeneous {
            conductivity: 2.0,
            hall: 0.5,
        };
        let g = sample(&spec, 4).unwrap();
        let rep = analyze(&g, &Vec3::new(0.3, 0.1, 1.0), &SolverConfig::default()).unwrap();
        assert!((rep.sigma_star - Mat3::identity() * 2.0).norm() < 1e-14);
        assert!((rep.hall_star - Mat3::identity() * 0.5).norm() < 1e-14);
        assert!(rep.gap.norm() < 1e-14);
        assert_eq!(rep.curl_defect, 0.0);
    }

    #[test]
    fn layered_routes_agree() {
        let spec = MaterialSpec::Layered {
            normal: [1, 0, 0],
            conductivity: Profile1d::phases(&[0.5, 0.5], &[1.0, 3.0]),
            hall: Profile1d::phases(&[0.5, 0.5], &[0.5, 2.0]),
        };
        let g = sample(&spec, 8).unwrap();
        let h = Vec3::new(0.6, 0.0, 0.8);
        let rep = analyze(&g, &h, &SolverConfig::default()).unwrap();
        assert!((rep.hall_star - rep.hall_star_local).norm() < 1e-12);
        assert!((rep.n_star - rep.n_star_direct).norm() < 1e-7, "{}", rep.n_star - rep.n_star_direct);
        assert!(rep.gap_psd);
        assert!(rep.gap.norm() > 1e-3);
        assert!(rep.fourth_order.is_none());
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let spec = MaterialSpec::Checkerboard4 {
            alpha: [1.0, 2.0, 3.0, 4.0],
            hall: [1.0; 4],
        };
        let a = sample(&spec, 4).unwrap();
        let b = sample(&spec, 8).unwrap();
        let set = solve_p0(&a, &SolverConfig::default()).unwrap();
        assert!(matches!(
            effective_conductivity(&b, &set.p0),
            Err(EffectiveError::GridMismatch { .. })
        ));
    }
}
