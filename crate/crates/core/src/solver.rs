//! Periodic cell problems for the correctors `P0`, `P1(h)` and `P2(h)`.
//!
//! Column `j` of a corrector is the discrete gradient of a periodic
//! potential `U_j` plus its mean: `P[(i, j)] = d_i U_j`. Each column solves
//! `div(sigma0 e + tau) = 0` with `e = E + grad(phi)`.

use crate::microstructure::GridField;
use crate::spectral::{Spectral, Workspace};
use crate::tensor::{eval_quadratic, hodge, Mat3, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("the field has a nonzero first-order Hall term")]
    HallNotZero,
    #[error("corrector grid {found:?} does not match field grid {expected:?}")]
    GridMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Conjugate gradients on the projected (Galerkin) operator `G sigma G`.
    #[default]
    ConjugateGradient,
    /// Moulinec-Suquet iteration `e <- E - Gamma0((sigma - sigma_ref) e + tau)`.
    BasicFixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Reference conductivity of the fixed-point scheme; midpoint of the
    /// eigenvalue band when absent.
    pub reference: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::ConjugateGradient,
            tolerance: 1e-8,
            max_iterations: 10_000,
            reference: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(SolverError::InvalidConfig("tolerance must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig("max_iterations must be positive".into()));
        }
        if self.reference.is_some_and(|r| !(r > 0.0)) {
            return Err(SolverError::InvalidConfig("reference must be positive".into()));
        }
        Ok(())
    }
}

/// A matrix-valued corrector on a (possibly collapsed) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorGrid {
    pub dims: [usize; 3],
    pub values: Vec<Mat3>,
    pub residuals: [f64; 3],
    pub iterations: [usize; 3],
}

impl CorrectorGrid {
    pub fn mean(&self) -> Mat3 {
        mean(&self.values)
    }

    /// Multiply every value by `c`.
    pub fn scaled(&self, c: f64) -> CorrectorGrid {
        CorrectorGrid {
            values: self.values.iter().map(|m| m * c).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorSet {
    pub p0: CorrectorGrid,
    pub p1: Option<(Vec3, CorrectorGrid)>,
    pub p2: Option<(Vec3, CorrectorGrid)>,
}

pub fn mean(values: &[Mat3]) -> Mat3 {
    values.iter().fold(Mat3::zeros(), |a, b| a + b) / values.len() as f64
}

/// Source term of a cell problem, per column.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    /// Unit mean field, no source.
    Unit,
    /// `tau = hodge(S h) P0 e_j`, zero mean.
    Hall { h: Vec3, p0: &'a CorrectorGrid },
    /// `tau = sigma2(h) P0 e_j`, zero mean.
    Quadratic { h: Vec3, p0: &'a CorrectorGrid },
}

impl Source<'_> {
    fn mean_field(&self, col: usize) -> Vec3 {
        match self {
            Source::Unit => Vec3::ith(col, 1.0),
            _ => Vec3::zeros(),
        }
    }

    fn tau(&self, field: &GridField, col: usize) -> Option<Vec<Vec3>> {
        match self {
            Source::Unit => None,
            Source::Hall { h, p0 } => Some(
                field
                    .s()
                    .iter()
                    .zip(&p0.values)
                    .map(|(s, p)| hodge(&(s * h)) * p.column(col))
                    .collect(),
            ),
            Source::Quadratic { h, p0 } => Some(match field.quadratic() {
                Some(q) => q
                    .iter()
                    .zip(&p0.values)
                    .map(|(slots, p)| eval_quadratic(slots, h) * p.column(col))
                    .collect(),
                None => vec![Vec3::zeros(); field.len()],
            }),
        }
    }

    fn p0(&self) -> Option<&CorrectorGrid> {
        match self {
            Source::Unit => None,
            Source::Hall { p0, .. } | Source::Quadratic { p0, .. } => Some(p0),
        }
    }
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn norm(a: &[Vec3]) -> f64 {
    dot(a, a).sqrt()
}

struct ColumnSolution {
    e: Vec<Vec3>,
    residual: f64,
    iterations: usize,
}

fn solve_column(
    sp: &Spectral,
    sigma: &[Mat3],
    mean_field: Vec3,
    tau: Option<&[Vec3]>,
    reference: f64,
    cfg: &SolverConfig,
) -> Result<ColumnSolution, SolverError> {
    let n = sigma.len();
    let mut ws = Workspace::default();
    let mut x = vec![Vec3::zeros(); n];
    let mut q: Vec<Vec3> = sigma.iter().map(|s| s * mean_field).collect();
    if let Some(t) = tau {
        for (qi, ti) in q.iter_mut().zip(t) {
            *qi += ti;
        }
    }
    let mut gq = vec![Vec3::zeros(); n];
    sp.project_gradient(&q, &mut ws, &mut gq);
    let finish = |x: Vec<Vec3>, residual, iterations| ColumnSolution {
        e: x.into_iter().map(|v| v + mean_field).collect(),
        residual,
        iterations,
    };
    let qn = norm(&q);
    if qn == 0.0 {
        return Ok(finish(x, 0.0, 0));
    }
    let mut res = norm(&gq) / qn;
    if res <= cfg.tolerance {
        return Ok(finish(x, res, 0));
    }
    let mut w = vec![Vec3::zeros(); n];
    match cfg.scheme {
        Scheme::BasicFixedPoint => {
            for it in 1..=cfg.max_iterations {
                for i in 0..n {
                    let step = gq[i] / reference;
                    x[i] -= step;
                    q[i] -= sigma[i] * step;
                }
                sp.project_gradient(&q, &mut ws, &mut gq);
                res = norm(&gq) / norm(&q);
                if res <= cfg.tolerance {
                    return Ok(finish(x, res, it));
                }
                if !res.is_finite() {
                    break;
                }
            }
        }
        Scheme::ConjugateGradient => {
            let mut r: Vec<Vec3> = gq.iter().map(|v| -v).collect();
            let mut p = r.clone();
            let mut rr = dot(&r, &r);
            let mut ap = vec![Vec3::zeros(); n];
            for it in 1..=cfg.max_iterations {
                for i in 0..n {
                    w[i] = sigma[i] * p[i];
                }
                sp.project_gradient(&w, &mut ws, &mut ap);
                let alpha = rr / dot(&p, &ap);
                for i in 0..n {
                    x[i] += p[i] * alpha;
                    q[i] += w[i] * alpha;
                    r[i] -= ap[i] * alpha;
                }
                let rr_new = dot(&r, &r);
                res = rr_new.sqrt() / norm(&q);
                if res <= cfg.tolerance {
                    // confirm with the true residual, restart on drift
                    sp.project_gradient(&q, &mut ws, &mut gq);
                    res = norm(&gq) / norm(&q);
                    if res <= cfg.tolerance {
                        return Ok(finish(x, res, it));
                    }
                    r = gq.iter().map(|v| -v).collect();
                    p = r.clone();
                    rr = dot(&r, &r);
                    continue;
                }
                if !res.is_finite() {
                    break;
                }
                let beta = rr_new / rr;
                for i in 0..n {
                    p[i] = r[i] + p[i] * beta;
                }
                rr = rr_new;
            }
        }
    }
    Err(SolverError::NoConvergence {
        iterations: cfg.max_iterations,
        residual: res,
    })
}

fn check_dims(field: &GridField, grid: &CorrectorGrid) -> Result<(), SolverError> {
    if field.dims() != grid.dims {
        return Err(SolverError::GridMismatch {
            expected: field.dims(),
            found: grid.dims,
        });
    }
    Ok(())
}

fn solve_all(field: &GridField, source: Source, cfg: &SolverConfig) -> Result<CorrectorGrid, SolverError> {
    cfg.validate()?;
    if let Some(p0) = source.p0() {
        check_dims(field, p0)?;
    }
    let sp = Spectral::new(field.dims());
    let reference = cfg.reference.unwrap_or_else(|| {
        let (lo, hi) = field.eigen_band();
        0.5 * (lo + hi)
    });
    let columns: Vec<ColumnSolution> = (0..3)
        .into_par_iter()
        .map(|col| {
            let tau = source.tau(field, col);
            solve_column(
                &sp,
                field.sigma(),
                source.mean_field(col),
                tau.as_deref(),
                reference,
                cfg,
            )
        })
        .collect::<Result<_, _>>()?;
    let values = (0..field.len())
        .map(|i| Mat3::from_columns(&[columns[0].e[i], columns[1].e[i], columns[2].e[i]]))
        .collect();
    Ok(CorrectorGrid {
        dims: field.dims(),
        values,
        residuals: [columns[0].residual, columns[1].residual, columns[2].residual],
        iterations: [columns[0].iterations, columns[1].iterations, columns[2].iterations],
    })
}

/// Zero-order corrector, `<P0> = I`.
pub fn solve_p0(field: &GridField, cfg: &SolverConfig) -> Result<CorrectorSet, SolverError> {
    let field = field.compacted();
    let p0 = solve_all(&field, Source::Unit, cfg)?;
    Ok(CorrectorSet {
        p0,
        p1: None,
        p2: None,
    })
}

/// First-order corrector at field `h`, `<P1> = 0`. Linear in `h`.
pub fn solve_p1(
    field: &GridField,
    h: &Vec3,
    p0: &CorrectorGrid,
    cfg: &SolverConfig,
) -> Result<CorrectorGrid, SolverError> {
    let field = field.compacted();
    solve_all(&field, Source::Hall { h: *h, p0 }, cfg)
}

/// Second-order corrector of a medium without first-order Hall term.
pub fn solve_p2_zero_hall(
    field: &GridField,
    h: &Vec3,
    p0: &CorrectorGrid,
    cfg: &SolverConfig,
) -> Result<CorrectorGrid, SolverError> {
    if field.has_hall() {
        return Err(SolverError::HallNotZero);
    }
    let field = field.compacted();
    solve_all(&field, Source::Quadratic { h: *h, p0 }, cfg)
}

impl CorrectorSet {
    /// Solve `P0` and `P1(h)`.
    pub fn solve(field: &GridField, h: &Vec3, cfg: &SolverConfig) -> Result<CorrectorSet, SolverError> {
        let mut set = solve_p0(field, cfg)?;
        let p1 = solve_p1(field, h, &set.p0, cfg)?;
        set.p1 = Some((*h, p1));
        Ok(set)
    }
}

/// Relative size of the divergence of the flux `sigma0 P + tau`, measured
/// as the norm of its gradient component (an H^-1 norm of the divergence)
/// over the norm of the flux.
pub fn residual(field: &GridField, p: &CorrectorGrid, source: Source) -> Result<f64, SolverError> {
    let field = field.compacted();
    check_dims(&field, p)?;
    let sp = Spectral::new(field.dims());
    let mut ws = Workspace::default();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut g = vec![Vec3::zeros(); field.len()];
    for col in 0..3 {
        let tau = source.tau(&field, col);
        let q: Vec<Vec3> = (0..field.len())
            .map(|i| {
                let base = field.sigma()[i] * p.values[i].column(col);
                tau.as_ref().map_or(base, |t| base + t[i])
            })
            .collect();
        sp.project_gradient(&q, &mut ws, &mut g);
        num += dot(&g, &g);
        den += dot(&q, &q);
    }
    Ok(if den == 0.0 { 0.0 } else { (num / den).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::{sample, MaterialSpec, Profile1d};

    fn laminate(n: usize) -> GridField {
        let spec = MaterialSpec::Layered {
            normal: [1, 0, 0],
            conductivity: Profile1d::phases(&[0.25, 0.75], &[1.0, 5.0]),
            hall: Profile1d::phases(&[0.25, 0.75], &[0.5, -1.0]),
        };
        sample(&spec, n).unwrap()
    }

    #[test]
    fn laminate_p0_is_harmonic_mean_field() {
        let g = laminate(16);
        let set = solve_p0(&g, &SolverConfig::default()).unwrap();
        assert!((set.p0.mean() - Mat3::identity()).norm() < 1e-12);
        let harm = 1.0 / (0.25 / 1.0 + 0.75 / 5.0);
        let cg = g.compacted();
        for (s, p) in cg.sigma().iter().zip(&set.p0.values) {
            assert!((s[(0, 0)] * p[(0, 0)] - harm).abs() < 1e-7);
            assert!((p[(1, 1)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn schemes_agree() {
        let g = crate::microstructure::sample_smooth_random(3, 1, 3.0, 0.0, 8).unwrap();
        let cg = solve_p0(&g, &SolverConfig::default()).unwrap();
        let fp = solve_p0(
            &g,
            &SolverConfig {
                scheme: Scheme::BasicFixedPoint,
                ..Default::default()
            },
        )
        .unwrap();
        let d = cg
            .p0
            .values
            .iter()
            .zip(&fp.p0.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(d < 1e-6, "{d}");
        assert!(cg.p0.iterations[0] < fp.p0.iterations[0]);
        let res = residual(&g, &cg.p0, Source::Unit).unwrap();
        assert!(res <= 1e-8);
    }

    #[test]
    fn p1_is_linear_in_h() {
        let g = laminate(8);
        let cfg = SolverConfig::default();
        let set = solve_p0(&g, &cfg).unwrap();
        let h = Vec3::new(0.2, -0.4, 1.0);
        let a = solve_p1(&g, &h, &set.p0, &cfg).unwrap();
        let b = solve_p1(&g, &(h * 2.0), &set.p0, &cfg).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x * 2.0 - y).norm() <= 1e-12 * (1.0 + y.norm()));
        }
        assert!(a.mean().norm() < 1e-12);
    }

    #[test]
    fn zero_hall_guard_and_budget() {
        let g = laminate(8);
        let cfg = SolverConfig::default();
        let set = solve_p0(&g, &cfg).unwrap();
        assert_eq!(
            solve_p2_zero_hall(&g, &Vec3::z(), &set.p0, &cfg),
            Err(SolverError::HallNotZero)
        );
        let smooth = crate::microstructure::sample_smooth_random(5, 2, 8.0, 0.0, 8).unwrap();
        let starved = SolverConfig {
            max_iterations: 1,
            ..Default::default()
        };
        assert!(matches!(
            solve_p0(&smooth, &starved),
            Err(SolverError::NoConvergence { .. })
        ));
    }
}
