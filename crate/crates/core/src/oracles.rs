//! Closed forms and exact classifiers: the two-phase laminate in a field
//! along `e3`, layered media, and equality tests for columnar media.
//! None of this touches the grid solver.

use crate::microstructure::{MaterialSpec, Profile1d};
use crate::tensor::{hodge, Mat3, Vec3};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("the Hall coefficient violates r^-1 in L1 or <(sigma r)^-1> != 0")]
    ConditionRViolated,
    #[error("in-plane field direction {0:?} has no small integer representative")]
    NonPeriodicDirection([f64; 2]),
}

fn check_laminate(theta: f64, alpha2: f64) -> Result<(), OracleError> {
    if !(theta > 0.0 && theta < 1.0) || !(alpha2 > 0.0) {
        return Err(OracleError::InvalidParameter(format!(
            "need 0 < theta < 1 and alpha2 > 0, got theta = {theta}, alpha2 = {alpha2}"
        )));
    }
    Ok(())
}

struct LamConst {
    d0: f64,
    b: f64,
    c: f64,
    m: f64,
}

fn lam_const(theta: f64, alpha2: f64) -> LamConst {
    LamConst {
        d0: 1.0 - theta + theta * theta * alpha2,
        b: 1.0 + (1.0 - theta) * alpha2,
        c: 1.0 - theta + alpha2,
        m: 1.0 - theta + theta * alpha2,
    }
}

/// Effective conductivity `sigma*(h)` of the laminate with phases
/// `(I + hodge(h)) / theta` (fraction `theta`) and `alpha2 I + hodge(h)`,
/// stacked along `e1`, at `h = h3 e3`. Exact in `h3`.
pub fn laminate_effective_conductivity(theta: f64, alpha2: f64, h3: f64) -> Result<Mat3, OracleError> {
    check_laminate(theta, alpha2)?;
    let k = lam_const(theta, alpha2);
    let om = 1.0 - theta;
    Ok(Mat3::new(
        alpha2 / k.d0,
        -k.m / k.d0 * h3,
        0.0,
        k.m / k.d0 * h3,
        k.b + om.powi(3) / k.d0 * h3 * h3,
        0.0,
        0.0,
        0.0,
        k.b,
    ))
}

/// Effective resistivity `rho*(h) = sigma*(h)^{-1}` of the same laminate.
pub fn laminate_effective_resistivity(theta: f64, alpha2: f64, h3: f64) -> Result<Mat3, OracleError> {
    check_laminate(theta, alpha2)?;
    let k = lam_const(theta, alpha2);
    let om = 1.0 - theta;
    let den = k.b * alpha2 + k.c * h3 * h3;
    Ok(Mat3::new(
        (k.b * k.d0 + om.powi(3) * h3 * h3) / den,
        k.m * h3 / den,
        0.0,
        -k.m * h3 / den,
        alpha2 / den,
        0.0,
        0.0,
        0.0,
        1.0 / k.b,
    ))
}

/// Exact corrector `P_i(h)` in phase `i` (1 or 2) at `h = h3 e3`.
pub fn laminate_corrector(theta: f64, alpha2: f64, h3: f64, phase: usize) -> Result<Mat3, OracleError> {
    check_laminate(theta, alpha2)?;
    let k = lam_const(theta, alpha2);
    let coef = match phase {
        1 => (1.0 - theta) / k.d0,
        2 => -theta / k.d0,
        _ => return Err(OracleError::InvalidParameter(format!("phase {phase}"))),
    };
    let mut p = Mat3::identity();
    p[(0, 0)] += coef * (theta * alpha2 - 1.0);
    p[(0, 1)] += coef * (1.0 - theta) * h3;
    Ok(p)
}

/// Order-`2p` term of the local resistivity of phase `i` at `h = h3 e3`.
pub fn laminate_local_resistivity(theta: f64, alpha2: f64, h3: f64, p: u32, phase: usize) -> Result<Mat3, OracleError> {
    check_laminate(theta, alpha2)?;
    let k = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0));
    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
    let h2p = h3.powi(2 * p as i32);
    match phase {
        1 => Ok(k * (sign * theta * h2p)),
        2 => Ok(k * (sign * h2p / alpha2.powi(2 * p as i32 + 1))),
        _ => Err(OracleError::InvalidParameter(format!("phase {phase}"))),
    }
}

/// Second-order effective resistivity `M*(h, h)` at `h = h3 e3`.
pub fn laminate_magnetoresistance(theta: f64, alpha2: f64, h3: f64) -> Result<Mat3, OracleError> {
    check_laminate(theta, alpha2)?;
    let k = lam_const(theta, alpha2);
    let h2 = h3 * h3;
    Ok(Mat3::from_diagonal(&Vec3::new(
        -k.m * k.m / (k.b * alpha2 * alpha2) * h2,
        -k.c / (k.b * k.b * alpha2) * h2,
        0.0,
    )))
}

/// Nonzero entries `(D11, D22)` of the order-`2p` gap
/// `sigma* rho*^(2p) sigma* - <(sigma P0)^T rho^(2p) (sigma P0)>` at `h = h3 e3`.
pub fn laminate_gap_2p(theta: f64, alpha2: f64, h3: f64, p: u32) -> Result<(f64, f64), OracleError> {
    check_laminate(theta, alpha2)?;
    if p == 0 {
        return Err(OracleError::InvalidParameter("p must be at least 1".into()));
    }
    let k = lam_const(theta, alpha2);
    let pi = p as i32;
    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
    let h2p = h3.powi(2 * pi);
    let tail = (1.0 - theta) / alpha2.powi(2 * pi - 1);
    let d11 = sign / (k.d0 * k.d0)
        * (k.m * k.m * k.c.powi(pi - 1) / (alpha2.powi(pi - 1) * k.b.powi(pi)) - tail - (theta * alpha2).powi(2))
        * h2p;
    let d22 = sign * (k.c.powi(pi) / (alpha2.powi(pi) * k.b.powi(pi - 1)) - 1.0 - tail) * h2p;
    Ok((d11, d22))
}

/// Layered medium depending on `normal . y` through 1-periodic profiles of
/// the conductivity `a` and the Hall coefficient `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredProfile {
    pub normal: [i64; 3],
    pub a: Profile1d,
    pub r: Profile1d,
}

// 8-point Gauss-Legendre on [-1, 1]
const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

impl LayeredProfile {
    pub fn from_spec(spec: &MaterialSpec) -> Option<Self> {
        match spec {
            MaterialSpec::Layered {
                normal,
                conductivity,
                hall,
            } => Some(Self {
                normal: *normal,
                a: conductivity.clone(),
                r: hall.clone(),
            }),
            MaterialSpec::Homogeneous { conductivity, hall } => Some(Self {
                normal: [1, 0, 0],
                a: Profile1d::constant(*conductivity),
                r: Profile1d::constant(*hall),
            }),
            _ => None,
        }
    }

    pub fn direction(&self) -> Vec3 {
        crate::microstructure::lattice_unit(&self.normal)
    }

    fn piecewise_constant(p: &Profile1d) -> bool {
        matches!(p, Profile1d::Constant { .. } | Profile1d::Phases { .. })
    }

    /// Average over one period of `f(a(t), r(t))`.
    pub fn average(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut cuts: Vec<f64> = vec![0.0, 1.0];
        cuts.extend(self.a.breakpoints());
        cuts.extend(self.r.breakpoints());
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        let exact = Self::piecewise_constant(&self.a) && Self::piecewise_constant(&self.r);
        let g = |t: f64| f(self.a.eval(t), self.r.eval(t));
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if exact {
                total += (hi - lo) * g(0.5 * (lo + hi));
                continue;
            }
            let panels = 64;
            let step = (hi - lo) / panels as f64;
            for k in 0..panels {
                let mid = lo + (k as f64 + 0.5) * step;
                for (x, wt) in GL_X.iter().zip(GL_W) {
                    total += 0.5 * step * wt * (g(mid - 0.5 * step * x) + g(mid + 0.5 * step * x));
                }
            }
        }
        total
    }

    /// The coefficients `(d1, d2, d3)` of the gap.
    pub fn gap_coefficients(&self) -> (f64, f64, f64) {
        let a = self.average(|a, _| a);
        let ainv = self.average(|a, _| 1.0 / a);
        let ar = self.average(|a, r| a * r);
        let ar2 = self.average(|a, r| a * r * r);
        let a2r = self.average(|a, r| a * a * r);
        let a2r2 = self.average(|a, r| a * a * r * r);
        let a3r2 = self.average(|a, r| a * a * a * r * r);
        let d1 = (ar2 - ar * ar / a) / (ainv * ainv);
        let d2 = a3r2 - a2r * a2r / a;
        let d3 = (a2r2 - ar * a2r / a) / ainv;
        (d1, d2, d3)
    }
}

/// Exact gap `sigma* M* sigma* - <(sigma P0)^T M (sigma P0)>` of a layered medium.
pub fn layered_gap(profile: &LayeredProfile, h: &Vec3) -> Mat3 {
    let hn = h.norm();
    if hn == 0.0 {
        return Mat3::zeros();
    }
    let xi = profile.direction();
    let (d1, d2, d3) = profile.gap_coefficients();
    let hx = h.dot(&xi);
    let cross = h.cross(&xi);
    let cn = cross.norm();
    if cn <= 1e-13 * hn {
        return (Mat3::identity() - xi * xi.transpose()) * (d2 * hx * hx);
    }
    let o = Mat3::from_columns(&[xi, (xi * hx - h) / cn, cross / cn]);
    let dh = Mat3::new(
        d1 * cn * cn,
        d3 * hx * cn,
        0.0,
        d3 * hx * cn,
        d2 * hx * hx,
        0.0,
        0.0,
        0.0,
        d2 * hx * hx,
    );
    o * dh * o.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayeredEquality {
    ZeroField,
    /// `h` orthogonal to the layers' normal and `r` constant.
    OrthogonalConstantHall,
    /// `h` parallel to the normal and `a r` constant.
    ParallelConstantProduct,
    /// Oblique `h` with `r` and `a r` constant.
    ObliqueConstant,
    NotEqual,
}

fn profile_is_constant(profile: &LayeredProfile, f: impl Fn(f64, f64) -> f64 + Copy) -> bool {
    let m = profile.average(f);
    let var = profile.average(|a, r| (f(a, r) - m).powi(2));
    var <= 1e-24 * m * m.max(1e-300) + 1e-300 || var.sqrt() <= 1e-12 * m.abs()
}

/// Which case of equality, if any, applies at `h`.
pub fn layered_equality_classify(profile: &LayeredProfile, h: &Vec3) -> LayeredEquality {
    let hn = h.norm();
    if hn == 0.0 {
        return LayeredEquality::ZeroField;
    }
    let xi = profile.direction();
    let par = h.cross(&xi).norm() <= 1e-13 * hn;
    let orth = h.dot(&xi).abs() <= 1e-13 * hn;
    let r_const = profile_is_constant(profile, |_, r| r);
    let ar_const = profile_is_constant(profile, |a, r| a * r);
    if orth {
        if r_const {
            return LayeredEquality::OrthogonalConstantHall;
        }
    } else if par {
        if ar_const {
            return LayeredEquality::ParallelConstantProduct;
        }
    } else if r_const && ar_const {
        return LayeredEquality::ObliqueConstant;
    }
    LayeredEquality::NotEqual
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Equality,
    NotEqual,
}

/// Witnesses of the tensor-product structure on the rotated lattice:
/// samples of `f` (normalized to `<1/f> = 1`) and `g`, and `C` with `r = C / f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witnesses {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnarVerdict {
    pub verdict: Verdict,
    /// Singular-value ratio `s2 / s1` of the sampled conductivity on the rotated lattice.
    pub separability: Option<f64>,
    pub witnesses: Option<Witnesses>,
}

/// Samples per axis of the rotated lattice.
const LATTICE: usize = 64;
const RANK_TOL: f64 = 1e-8;
const CONST_TOL: f64 = 1e-8;

/// Coprime integers `(p, q)` proportional to `(h1, h2)`, if any with
/// components up to 64 matches to relative 1e-12.
fn integer_direction(h1: f64, h2: f64) -> Option<(i64, i64)> {
    if h1 == 0.0 {
        return Some((0, h2.signum() as i64));
    }
    if h2 == 0.0 {
        return Some((h1.signum() as i64, 0));
    }
    let x = h1.abs() / h2.abs();
    for q in 1..=64i64 {
        let p = (x * q as f64).round() as i64;
        if p >= 1 && p <= 64 && ((p as f64 / q as f64) - x).abs() <= 1e-12 * x {
            let g = gcd(p, q);
            return Some(((p / g) * h1.signum() as i64, (q / g) * h2.signum() as i64));
        }
    }
    None
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn spread(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let dev = v.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    dev / mean.abs().max(f64::MIN_POSITIVE)
}

/// Equality test for a columnar medium with scalar conductivity
/// `sigma(y1, y2)` and Hall coefficient `r(y1, y2)` on the unit square.
pub fn columnar_equality_check(
    sigma: &dyn Fn(f64, f64) -> f64,
    r: &dyn Fn(f64, f64) -> f64,
    h: &Vec3,
) -> Result<ColumnarVerdict, OracleError> {
    let n = LATTICE;
    // offset keeps samples off interfaces aligned with the lattice
    let pts: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64 + 1.234_567e-7).collect();
    let mut sig = Vec::with_capacity(n * n);
    let mut rv = Vec::with_capacity(n * n);
    for &y1 in &pts {
        for &y2 in &pts {
            sig.push(sigma(y1, y2));
            rv.push(r(y1, y2));
        }
    }
    if sig.iter().any(|s| !(*s > 0.0)) {
        return Err(OracleError::InvalidParameter("conductivity must be positive".into()));
    }
    if rv.iter().any(|x| *x == 0.0 || !x.is_finite()) {
        return Err(OracleError::ConditionRViolated);
    }
    let inv_sr: f64 = sig.iter().zip(&rv).map(|(s, r)| 1.0 / (s * r)).sum::<f64>() / (n * n) as f64;
    let inv_abs: f64 = sig.iter().zip(&rv).map(|(s, r)| 1.0 / (s * r).abs()).sum::<f64>() / (n * n) as f64;
    if inv_sr.abs() <= 1e-12 * inv_abs {
        return Err(OracleError::ConditionRViolated);
    }
    let r_const = spread(&rv) <= CONST_TOL;
    let sigma_const = spread(&sig) <= CONST_TOL;
    let plain = |v| ColumnarVerdict {
        verdict: v,
        separability: None,
        witnesses: None,
    };
    let hp = (h[0], h[1]);
    if h.norm() == 0.0 {
        return Ok(plain(Verdict::Equality));
    }
    if hp == (0.0, 0.0) {
        return Ok(plain(if r_const { Verdict::Equality } else { Verdict::NotEqual }));
    }
    let Some((p, q)) = integer_direction(hp.0, hp.1) else {
        if sigma_const && r_const {
            return Ok(plain(Verdict::Equality));
        }
        return Err(OracleError::NonPeriodicDirection([hp.0, hp.1]));
    };
    // rotated lattice: t1 = (p, q) . y', t2 = (-q, p) . y'
    let (pf, qf) = (p as f64, q as f64);
    let norm2 = pf * pf + qf * qf;
    let ts: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64 + 2.345_678e-7).collect();
    let mut mat = DMatrix::<f64>::zeros(n, n);
    let mut rmat = DMatrix::<f64>::zeros(n, n);
    for (a, t1) in ts.iter().enumerate() {
        for (b, t2) in ts.iter().enumerate() {
            let y1 = (pf * t1 - qf * t2) / norm2;
            let y2 = (qf * t1 + pf * t2) / norm2;
            mat[(a, b)] = sigma(y1 - y1.floor(), y2 - y2.floor());
            rmat[(a, b)] = r(y1 - y1.floor(), y2 - y2.floor());
        }
    }
    let svd = mat.clone().svd(true, true);
    let mut sv: Vec<(f64, usize)> = svd.singular_values.iter().cloned().zip(0..).collect();
    sv.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let ratio = sv[1].0 / sv[0].0;
    let separable = ratio <= RANK_TOL;
    if !separable {
        return Ok(ColumnarVerdict {
            verdict: Verdict::NotEqual,
            separability: Some(ratio),
            witnesses: None,
        });
    }
    let u = svd.u.as_ref().unwrap().column(sv[0].1).into_owned();
    let v = svd.v_t.as_ref().unwrap().row(sv[0].1).transpose().into_owned();
    let sgn = u[0].signum();
    let u: Vec<f64> = u.iter().map(|x| x * sgn).collect();
    let v: Vec<f64> = v.iter().map(|x| x * sgn).collect();
    let kappa = u.iter().map(|x| 1.0 / x).sum::<f64>() / n as f64;
    let f: Vec<f64> = u.iter().map(|x| x * kappa).collect();
    let g: Vec<f64> = v.iter().map(|x| x * sv[0].0 / kappa).collect();
    let mut rf = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            rf.push(rmat[(a, b)] * f[a]);
        }
    }
    let c = rf.iter().sum::<f64>() / rf.len() as f64;
    let ok = if h[2] == 0.0 {
        spread(&rf) <= CONST_TOL
    } else {
        r_const && spread(&f) <= CONST_TOL
    };
    Ok(ColumnarVerdict {
        verdict: if ok { Verdict::Equality } else { Verdict::NotEqual },
        separability: Some(ratio),
        witnesses: ok.then_some(Witnesses { f, g, c }),
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Equality test for the four-phase checkerboard with conductivities
/// `alpha` and Hall coefficients `r` on Q1..Q4.
pub fn checkerboard_equality_check(alpha: &[f64; 4], r: &[f64; 4], h: &Vec3) -> Result<Verdict, OracleError> {
    if alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(OracleError::InvalidParameter("alpha must be positive".into()));
    }
    if r.iter().any(|x| *x == 0.0 || !x.is_finite()) {
        return Err(OracleError::ConditionRViolated);
    }
    let inv: f64 = alpha.iter().zip(r).map(|(a, r)| 1.0 / (a * r)).sum();
    let inv_abs: f64 = alpha.iter().zip(r).map(|(a, r)| 1.0 / (a * r).abs()).sum();
    if inv.abs() <= 1e-12 * inv_abs {
        return Err(OracleError::ConditionRViolated);
    }
    let hn = h.norm();
    if hn == 0.0 {
        return Ok(Verdict::Equality);
    }
    let axis = (0..3).find(|&i| (h[i].abs() - hn).abs() <= 1e-13 * hn);
    let r_const = r.iter().all(|x| close(*x, r[0]));
    let eq = match axis {
        Some(2) => r_const,
        Some(i) => {
            let tensor = close(alpha[0] * alpha[2], alpha[1] * alpha[3]);
            // quadrants with y_i > 0 and y_i < 0, and the ratio alpha_{6-2i} / alpha_1
            let (pos, neg, ratio) = if i == 0 {
                ([0, 1], [2, 3], alpha[3] / alpha[0])
            } else {
                ([0, 3], [1, 2], alpha[1] / alpha[0])
            };
            let c = r[neg[0]];
            tensor && close(r[neg[1]], c) && close(r[pos[0]], c * ratio) && close(r[pos[1]], c * ratio)
        }
        None => r_const && alpha.iter().all(|a| close(*a, alpha[0])),
    };
    Ok(if eq { Verdict::Equality } else { Verdict::NotEqual })
}

/// Truncated scalar power series in `t`.
#[derive(Debug, Clone, PartialEq)]
struct TSeries(Vec<f64>);

impl TSeries {
    fn mul(&self, o: &TSeries) -> TSeries {
        let n = self.0.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n - i {
                out[i + j] += self.0[i] * o.0[j];
            }
        }
        TSeries(out)
    }

    fn recip(&self) -> TSeries {
        let n = self.0.len();
        let mut out = vec![0.0; n];
        out[0] = 1.0 / self.0[0];
        for k in 1..n {
            let acc: f64 = (1..=k).map(|j| self.0[j] * out[k - j]).sum();
            out[k] = -acc / self.0[0];
        }
        TSeries(out)
    }

    fn add(&self, o: &TSeries) -> TSeries {
        TSeries(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    fn scale(&self, c: f64) -> TSeries {
        TSeries(self.0.iter().map(|a| a * c).collect())
    }
}

/// One phase of a laminate stacked along `e1`: volume fraction and the
/// Taylor coefficients `sigma_k` of its conductivity along `h = t d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPhase {
    pub fraction: f64,
    pub coefficients: Vec<Mat3>,
}

fn entry_series(ph: &SeriesPhase, i: usize, j: usize, len: usize) -> TSeries {
    TSeries((0..len).map(|k| ph.coefficients.get(k).map_or(0.0, |m| m[(i, j)])).collect())
}

/// Taylor coefficients of the effective conductivity of a laminate normal
/// to `e1`, from the exact one-dimensional homogenization formula applied
/// in truncated power-series arithmetic.
pub fn laminate_series_conductivity(phases: &[SeriesPhase], order: usize) -> Vec<Mat3> {
    let len = order + 1;
    let zero = TSeries(vec![0.0; len]);
    let avg = |f: &dyn Fn(&SeriesPhase) -> TSeries| {
        phases
            .iter()
            .fold(zero.clone(), |acc, ph| acc.add(&f(ph).scale(ph.fraction)))
    };
    let inv11 = |ph: &SeriesPhase| entry_series(ph, 0, 0, len).recip();
    let harm = avg(&|ph| inv11(ph)).recip();
    let mut out = vec![Mat3::zeros(); len];
    let mut put = |i: usize, j: usize, s: &TSeries| {
        for (k, m) in out.iter_mut().enumerate() {
            m[(i, j)] = s.0[k];
        }
    };
    put(0, 0, &harm);
    for j in 1..3 {
        let row = avg(&|ph| entry_series(ph, 0, j, len).mul(&inv11(ph)));
        put(0, j, &harm.mul(&row));
        let col = avg(&|ph| entry_series(ph, j, 0, len).mul(&inv11(ph)));
        put(j, 0, &col.mul(&harm));
    }
    for i in 1..3 {
        for j in 1..3 {
            let direct = avg(&|ph| {
                entry_series(ph, i, j, len).add(
                    &entry_series(ph, i, 0, len)
                        .mul(&entry_series(ph, 0, j, len))
                        .mul(&inv11(ph))
                        .scale(-1.0),
                )
            });
            let col = avg(&|ph| entry_series(ph, i, 0, len).mul(&inv11(ph)));
            let row = avg(&|ph| entry_series(ph, 0, j, len).mul(&inv11(ph)));
            put(i, j, &direct.add(&col.mul(&harm).mul(&row)));
        }
    }
    out
}

/// Taylor coefficients of the inverse of a matrix series.
pub fn invert_taylor(coefficients: &[Mat3]) -> Option<Vec<Mat3>> {
    let r0 = coefficients[0].try_inverse()?;
    let mut out = vec![r0];
    for k in 1..coefficients.len() {
        let mut acc = Mat3::zeros();
        for j in 1..=k {
            acc += coefficients[j] * out[k - j];
        }
        out.push(-(r0 * acc));
    }
    Some(out)
}

/// Gap `sigma*0 rho*_k sigma*0 - <(sigma0 P0)^T rho_k (sigma0 P0)>` of order
/// `k` along `h = t d`, for a laminate normal to `e1`.
pub fn laminate_series_gap(phases: &[SeriesPhase], k: usize) -> Option<Mat3> {
    let star = laminate_series_conductivity(phases, k);
    let rho_star = invert_taylor(&star)?;
    let s0 = star[0];
    let harm = 1.0 / phases.iter().map(|p| p.fraction / p.coefficients[0][(0, 0)]).sum::<f64>();
    let mut local = Mat3::zeros();
    for ph in phases {
        let sg = ph.coefficients[0];
        let mut p0 = Mat3::identity();
        for j in 0..3 {
            let cj = if j == 0 {
                harm
            } else {
                harm * phases.iter().map(|q| q.fraction * q.coefficients[0][(0, j)] / q.coefficients[0][(0, 0)]).sum::<f64>()
            };
            p0[(0, j)] += (cj - sg[(0, j)]) / sg[(0, 0)];
        }
        let mut full = ph.coefficients.clone();
        full.resize(k + 1, Mat3::zeros());
        let rho = invert_taylor(&full)?;
        let j = sg * p0;
        local += j.transpose() * rho[k] * j * ph.fraction;
    }
    Some(s0 * rho_star[k] * s0 - local)
}

/// `sigma*(h)` to second order from its three coefficients.
pub fn second_order_conductivity(sigma_star: &Mat3, s_star: &Mat3, n_star: &Mat3, h: &Vec3) -> Mat3 {
    sigma_star + hodge(&(s_star * h)) + n_star
}
