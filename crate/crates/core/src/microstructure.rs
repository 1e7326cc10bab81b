//! Material descriptions and their voxel sampling on the unit cell.
//!
//! Scalar phases are isotropic: conductivity `a` and Hall coefficient `r`
//! give `sigma0 = a I` and `S = -a^2 r I`.

use crate::tensor::{Mat3, Vec3, QUAD_PAIRS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MicrostructureError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("resolution {n} is not usable: {reason}")]
    ResolutionMismatch { n: usize, reason: String },
    #[error("sigma0 eigenvalues leave the band [{alpha}, {beta}] at voxel {voxel}")]
    OutOfBand { alpha: f64, beta: f64, voxel: usize },
}

/// Scalar 1-periodic profile on `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile1d {
    Constant { value: f64 },
    /// Consecutive intervals of the given lengths starting at 0.
    Phases { fractions: Vec<f64>, values: Vec<f64> },
    /// `mean + sum_k cos[k-1] cos(2 pi k t) + sin[k-1] sin(2 pi k t)`.
    Fourier {
        mean: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl Profile1d {
    pub fn constant(value: f64) -> Self {
        Profile1d::Constant { value }
    }

    pub fn phases(fractions: &[f64], values: &[f64]) -> Self {
        Profile1d::Phases {
            fractions: fractions.to_vec(),
            values: values.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), MicrostructureError> {
        match self {
            Profile1d::Constant { value } if !value.is_finite() => Err(
                MicrostructureError::InvalidParameter("non-finite constant".into()),
            ),
            Profile1d::Phases { fractions, values } => {
                if fractions.is_empty() || fractions.len() != values.len() {
                    return Err(MicrostructureError::InvalidParameter(
                        "phase fractions and values differ in length".into(),
                    ));
                }
                if fractions.iter().any(|f| !(*f > 0.0)) {
                    return Err(MicrostructureError::InvalidParameter(
                        "phase fractions must be positive".into(),
                    ));
                }
                let total: f64 = fractions.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(MicrostructureError::InvalidParameter(format!(
                        "phase fractions sum to {total}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t - t.floor();
        match self {
            Profile1d::Constant { value } => *value,
            Profile1d::Phases { fractions, values } => {
                let mut edge = 0.0;
                for (f, v) in fractions.iter().zip(values) {
                    edge += f;
                    if t < edge {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
            Profile1d::Fourier { mean, cos, sin } => {
                let mut s = *mean;
                for (k, c) in cos.iter().enumerate() {
                    s += c * (TAU * (k + 1) as f64 * t).cos();
                }
                for (k, c) in sin.iter().enumerate() {
                    s += c * (TAU * (k + 1) as f64 * t).sin();
                }
                s
            }
        }
    }

    /// Interior discontinuities in `(0, 1)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile1d::Phases { fractions, .. } => {
                let mut out = Vec::new();
                let mut edge = 0.0;
                for f in &fractions[..fractions.len() - 1] {
                    edge += f;
                    out.push(edge);
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// Guaranteed bounds `(lo, hi)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Profile1d::Constant { value } => (*value, *value),
            Profile1d::Phases { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(*v), hi.max(*v))
                }),
            Profile1d::Fourier { mean, cos, sin } => {
                let amp: f64 = cos.iter().chain(sin).map(|c| c.abs()).sum();
                (mean - amp, mean + amp)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Profile1d::Constant { .. } => true,
            Profile1d::Phases { values, .. } => values.iter().all(|v| *v == values[0]),
            Profile1d::Fourier { cos, sin, .. } => cos.iter().chain(sin).all(|c| *c == 0.0),
        }
    }
}

/// Scalar field on the cross-section `(y1, y2)` of a columnar medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanarField {
    Constant { value: f64 },
    /// Values on the quadrants Q1..Q4 of the cell centred at the origin,
    /// i.e. `(1/2, 1)^2`, `(1/2, 1) x (0, 1/2)`, `(0, 1/2)^2`, `(0, 1/2) x (1/2, 1)`.
    Quadrants { values: [f64; 4] },
    /// `profile(d . y')` for an integer direction `d`.
    Layer { direction: [i64; 2], profile: Profile1d },
    /// `f(d . y') g(J d . y')`, with `J d = (-d2, d1)`.
    TensorProduct {
        direction: [i64; 2],
        f: Profile1d,
        g: Profile1d,
    },
    /// `scale / f(d . y')`.
    Reciprocal {
        direction: [i64; 2],
        scale: f64,
        f: Profile1d,
    },
}

fn dot2(d: &[i64; 2], y1: f64, y2: f64) -> f64 {
    d[0] as f64 * y1 + d[1] as f64 * y2
}

/// Quadrant index 0..4 of a point of the unit square.
pub fn quadrant(y1: f64, y2: f64) -> usize {
    let (u1, u2) = (y1 - y1.floor() >= 0.5, y2 - y2.floor() >= 0.5);
    match (u1, u2) {
        (true, true) => 0,
        (true, false) => 1,
        (false, false) => 2,
        (false, true) => 3,
    }
}

impl PlanarField {
    pub fn eval(&self, y1: f64, y2: f64) -> f64 {
        match self {
            PlanarField::Constant { value } => *value,
            PlanarField::Quadrants { values } => values[quadrant(y1, y2)],
            PlanarField::Layer { direction, profile } => profile.eval(dot2(direction, y1, y2)),
            PlanarField::TensorProduct { direction, f, g } => {
                let jd = [-direction[1], direction[0]];
                f.eval(dot2(direction, y1, y2)) * g.eval(dot2(&jd, y1, y2))
            }
            PlanarField::Reciprocal {
                direction,
                scale,
                f,
            } => scale / f.eval(dot2(direction, y1, y2)),
        }
    }

    fn validate(&self) -> Result<(), MicrostructureError> {
        let check_dir = |d: &[i64; 2]| {
            if *d == [0, 0] {
                Err(MicrostructureError::InvalidParameter(
                    "zero in-plane direction".into(),
                ))
            } else {
                Ok(())
            }
        };
        match self {
            PlanarField::Layer { direction, profile } => {
                check_dir(direction)?;
                profile.validate()
            }
            PlanarField::TensorProduct { direction, f, g } => {
                check_dir(direction)?;
                f.validate()?;
                g.validate()
            }
            PlanarField::Reciprocal { direction, f, .. } => {
                check_dir(direction)?;
                f.validate()?;
                if f.bounds().0 <= 0.0 {
                    return Err(MicrostructureError::InvalidParameter(
                        "reciprocal profile must stay positive".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn lower_bound(&self) -> f64 {
        match self {
            PlanarField::Constant { value } => *value,
            PlanarField::Quadrants { values } => values.iter().cloned().fold(f64::INFINITY, f64::min),
            PlanarField::Layer { profile, .. } => profile.bounds().0,
            PlanarField::TensorProduct { f, g, .. } => {
                let (fl, gl) = (f.bounds().0, g.bounds().0);
                if fl > 0.0 && gl > 0.0 {
                    fl * gl
                } else {
                    f64::NEG_INFINITY
                }
            }
            PlanarField::Reciprocal { scale, f, .. } => scale / f.bounds().1,
        }
    }

    fn has_interfaces(&self) -> bool {
        match self {
            PlanarField::Quadrants { .. } => true,
            PlanarField::Layer { profile, .. } => !profile.breakpoints().is_empty(),
            PlanarField::TensorProduct { f, g, .. } => {
                !f.breakpoints().is_empty() || !g.breakpoints().is_empty()
            }
            PlanarField::Reciprocal { f, .. } => !f.breakpoints().is_empty(),
            PlanarField::Constant { .. } => false,
        }
    }
}

/// A periodic microstructure, tagged as `{"variant": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params")]
pub enum MaterialSpec {
    Homogeneous {
        conductivity: f64,
        hall: f64,
    },
    /// Depends on `n . y` only, `n` an integer lattice vector.
    Layered {
        normal: [i64; 3],
        conductivity: Profile1d,
        hall: Profile1d,
    },
    /// Independent of `y3`.
    Columnar {
        conductivity: PlanarField,
        hall: PlanarField,
    },
    Checkerboard4 {
        alpha: [f64; 4],
        hall: [f64; 4],
    },
    /// Two phases normal to `e1`: phase 1 on `y1 < theta` with
    /// `sigma(h) = (I + hodge(h)) / theta`, phase 2 with
    /// `sigma(h) = alpha2 I + hodge(h)`. With `zero_hall` the odd part is
    /// dropped and the even part of each phase is kept exactly.
    LaminateRank1 {
        theta: f64,
        alpha2: f64,
        #[serde(default)]
        zero_hall: bool,
    },
    SmoothRandom {
        seed: u64,
        modes: usize,
        contrast: f64,
        hall_amplitude: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<(), MicrostructureError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MicrostructureError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<(), MicrostructureError> {
        match self {
            MaterialSpec::Homogeneous { conductivity, hall } => {
                positive("conductivity", *conductivity)?;
                if !hall.is_finite() {
                    return Err(MicrostructureError::InvalidParameter("hall".into()));
                }
            }
            MaterialSpec::Layered {
                normal,
                conductivity,
                hall,
            } => {
                if *normal == [0, 0, 0] {
                    return Err(MicrostructureError::InvalidParameter("zero normal".into()));
                }
                conductivity.validate()?;
                hall.validate()?;
                positive("conductivity lower bound", conductivity.bounds().0)?;
            }
            MaterialSpec::Columnar { conductivity, hall } => {
                conductivity.validate()?;
                hall.validate()?;
                positive("conductivity lower bound", conductivity.lower_bound())?;
            }
            MaterialSpec::Checkerboard4 { alpha, hall } => {
                for a in alpha {
                    positive("alpha", *a)?;
                }
                if hall.iter().any(|r| !r.is_finite()) {
                    return Err(MicrostructureError::InvalidParameter("hall".into()));
                }
            }
            MaterialSpec::LaminateRank1 { theta, alpha2, .. } => {
                if !(*theta > 0.0 && *theta < 1.0) {
                    return Err(MicrostructureError::InvalidParameter(format!(
                        "theta must lie in (0, 1), got {theta}"
                    )));
                }
                positive("alpha2", *alpha2)?;
            }
            MaterialSpec::SmoothRandom {
                contrast,
                hall_amplitude,
                ..
            } => {
                if !(*contrast >= 1.0 && contrast.is_finite()) {
                    return Err(MicrostructureError::InvalidParameter(
                        "contrast must be >= 1".into(),
                    ));
                }
                if !hall_amplitude.is_finite() {
                    return Err(MicrostructureError::InvalidParameter("hall_amplitude".into()));
                }
            }
        }
        Ok(())
    }

    /// Whether the material has a nonzero second-order term in `h`.
    pub fn has_quadratic(&self) -> bool {
        matches!(self, MaterialSpec::LaminateRank1 { zero_hall: true, .. })
    }
}

/// Material data of one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMaterial {
    pub sigma: Mat3,
    pub s: Mat3,
    pub quadratic: Option<[Mat3; 6]>,
}

fn isotropic(a: f64, r: f64) -> LocalMaterial {
    LocalMaterial {
        sigma: Mat3::identity() * a,
        s: Mat3::identity() * (-a * a * r),
        quadratic: None,
    }
}

/// Slots of `c (|h|^2 I - h h^T)`.
pub fn transverse_quadratic(c: f64) -> [Mat3; 6] {
    let mut slots = [Mat3::zeros(); 6];
    for (k, &(i, j)) in QUAD_PAIRS.iter().enumerate() {
        let mut m = Mat3::zeros();
        if i == j {
            m = Mat3::identity() * c;
            m[(i, i)] -= c;
        } else {
            m[(i, j)] = -c;
            m[(j, i)] = -c;
        }
        slots[k] = m;
    }
    slots
}

/// Random trigonometric polynomial normalized to `|T| <= 1`.
#[derive(Debug, Clone)]
struct TrigPoly {
    modes: Vec<([f64; 3], f64, f64)>,
}

impl TrigPoly {
    fn random(rng: &mut ChaCha8Rng, m: usize) -> Self {
        let mut modes = Vec::new();
        let mi = m as i64;
        for a in -mi..=mi {
            for b in -mi..=mi {
                for c in -mi..=mi {
                    // one representative of each +-k pair
                    if (a, b, c) <= (0, 0, 0) {
                        continue;
                    }
                    let k2 = (a * a + b * b + c * c) as f64;
                    let w = 1.0 / (1.0 + k2);
                    let ca: f64 = StandardNormal.sample(rng);
                    let sa: f64 = StandardNormal.sample(rng);
                    modes.push(([a as f64, b as f64, c as f64], ca * w, sa * w));
                }
            }
        }
        let mut poly = TrigPoly { modes };
        if !poly.modes.is_empty() {
            let n = 4 * m + 4;
            let mut peak: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let y = [i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64];
                        peak = peak.max(poly.raw(&y).abs());
                    }
                }
            }
            for md in poly.modes.iter_mut() {
                md.1 /= peak;
                md.2 /= peak;
            }
        }
        poly
    }

    fn raw(&self, y: &[f64; 3]) -> f64 {
        self.modes
            .iter()
            .map(|(k, c, s)| {
                let ph = TAU * (k[0] * y[0] + k[1] * y[1] + k[2] * y[2]);
                c * ph.cos() + s * ph.sin()
            })
            .sum()
    }

    fn eval(&self, y: &[f64; 3]) -> f64 {
        self.raw(y).clamp(-1.0, 1.0)
    }
}

enum Sampler<'a> {
    Spec(&'a MaterialSpec),
    Random {
        log_a: TrigPoly,
        s: TrigPoly,
        contrast: f64,
        amplitude: f64,
    },
}

impl Sampler<'_> {
    fn at(&self, y: [f64; 3]) -> LocalMaterial {
        match self {
            Sampler::Random {
                log_a,
                s,
                contrast,
                amplitude,
            } => {
                let a = contrast.powf(log_a.eval(&y));
                LocalMaterial {
                    sigma: Mat3::identity() * a,
                    s: Mat3::identity() * (amplitude * s.eval(&y)),
                    quadratic: None,
                }
            }
            Sampler::Spec(spec) => local_material(spec, y),
        }
    }
}

/// Material data at a point of the unit cell. Smooth random media are
/// not point-evaluable without their coefficient draw; use [`sample`].
fn local_material(spec: &MaterialSpec, y: [f64; 3]) -> LocalMaterial {
    match spec {
        MaterialSpec::Homogeneous { conductivity, hall } => isotropic(*conductivity, *hall),
        MaterialSpec::Layered {
            normal,
            conductivity,
            hall,
        } => {
            let t = normal[0] as f64 * y[0] + normal[1] as f64 * y[1] + normal[2] as f64 * y[2];
            isotropic(conductivity.eval(t), hall.eval(t))
        }
        MaterialSpec::Columnar { conductivity, hall } => {
            isotropic(conductivity.eval(y[0], y[1]), hall.eval(y[0], y[1]))
        }
        MaterialSpec::Checkerboard4 { alpha, hall } => {
            let q = quadrant(y[0], y[1]);
            isotropic(alpha[q], hall[q])
        }
        MaterialSpec::LaminateRank1 {
            theta,
            alpha2,
            zero_hall,
        } => {
            let (a, s, c2) = if y[0] - y[0].floor() < *theta {
                (1.0 / theta, 1.0 / theta, 1.0 / theta)
            } else {
                (*alpha2, 1.0, 1.0 / alpha2)
            };
            if *zero_hall {
                LocalMaterial {
                    sigma: Mat3::identity() * a,
                    s: Mat3::zeros(),
                    quadratic: Some(transverse_quadratic(c2)),
                }
            } else {
                LocalMaterial {
                    sigma: Mat3::identity() * a,
                    s: Mat3::identity() * s,
                    quadratic: None,
                }
            }
        }
        MaterialSpec::SmoothRandom { .. } => unreachable!("handled by the random sampler"),
    }
}

/// Voxel material data on a periodic grid, row-major with the last axis
/// fastest. Grids produced by [`sample`] are cubic; [`GridField::compacted`]
/// may collapse axes along which the data is invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub(crate) dims: [usize; 3],
    pub(crate) sigma: Vec<Mat3>,
    pub(crate) s: Vec<Mat3>,
    pub(crate) quadratic: Option<Vec<[Mat3; 6]>>,
}

impl GridField {
    pub fn new(
        dims: [usize; 3],
        sigma: Vec<Mat3>,
        s: Vec<Mat3>,
        quadratic: Option<Vec<[Mat3; 6]>>,
    ) -> Result<Self, MicrostructureError> {
        let n = dims.iter().product::<usize>();
        if n == 0 || sigma.len() != n || s.len() != n || quadratic.as_ref().is_some_and(|q| q.len() != n) {
            return Err(MicrostructureError::InvalidParameter(
                "voxel arrays do not match the grid dimensions".into(),
            ));
        }
        Ok(Self {
            dims,
            sigma,
            s,
            quadratic,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn sigma(&self) -> &[Mat3] {
        &self.sigma
    }

    pub fn s(&self) -> &[Mat3] {
        &self.s
    }

    pub fn quadratic(&self) -> Option<&[[Mat3; 6]]> {
        self.quadratic.as_deref()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    /// Cell-centre coordinates of voxel `(i, j, k)`.
    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (i as f64 + 0.5) / self.dims[0] as f64,
            (j as f64 + 0.5) / self.dims[1] as f64,
            (k as f64 + 0.5) / self.dims[2] as f64,
        ]
    }

    pub fn has_hall(&self) -> bool {
        self.s.iter().any(|m| m.iter().any(|v| *v != 0.0))
    }

    /// Smallest and largest eigenvalue of `sigma0` over all voxels.
    pub fn eigen_band(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for m in &self.sigma {
            let off = m[(0, 1)] != 0.0 || m[(0, 2)] != 0.0 || m[(1, 2)] != 0.0;
            let e = if !off {
                [m[(0, 0)], m[(1, 1)], m[(2, 2)]]
            } else {
                crate::tensor::sym_eigenvalues(m)
            };
            for v in e {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    pub fn check_band(&self, alpha: f64, beta: f64) -> Result<(), MicrostructureError> {
        for (idx, m) in self.sigma.iter().enumerate() {
            let e = crate::tensor::sym_eigenvalues(m);
            if e[0] < alpha || e[2] > beta {
                return Err(MicrostructureError::OutOfBand {
                    alpha,
                    beta,
                    voxel: idx,
                });
            }
        }
        Ok(())
    }

    fn same_voxel(&self, a: usize, b: usize) -> bool {
        self.sigma[a] == self.sigma[b]
            && self.s[a] == self.s[b]
            && self.quadratic.as_ref().is_none_or(|q| q[a] == q[b])
    }

    fn invariant_along(&self, axis: usize) -> bool {
        let [nx, ny, nz] = self.dims;
        if self.dims[axis] == 1 {
            return true;
        }
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let mut base = [i, j, k];
                    base[axis] = 0;
                    if !self.same_voxel(self.index(i, j, k), self.index(base[0], base[1], base[2])) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Collapse every axis along which the voxel data is exactly
    /// invariant. The discrete cell problems on the collapsed grid have
    /// the same solutions, broadcast along the removed axes.
    pub fn compacted(&self) -> Cow<'_, GridField> {
        let keep: Vec<bool> = (0..3).map(|a| !self.invariant_along(a)).collect();
        if (0..3).all(|a| keep[a] || self.dims[a] == 1) {
            return Cow::Borrowed(self);
        }
        let dims = [
            if keep[0] { self.dims[0] } else { 1 },
            if keep[1] { self.dims[1] } else { 1 },
            if keep[2] { self.dims[2] } else { 1 },
        ];
        let n = dims.iter().product::<usize>();
        let mut sigma = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        let mut quad = self.quadratic.as_ref().map(|_| Vec::with_capacity(n));
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let idx = self.index(i, j, k);
                    sigma.push(self.sigma[idx]);
                    s.push(self.s[idx]);
                    if let (Some(q), Some(src)) = (quad.as_mut(), self.quadratic.as_ref()) {
                        q.push(src[idx]);
                    }
                }
            }
        }
        Cow::Owned(GridField {
            dims,
            sigma,
            s,
            quadratic: quad,
        })
    }
}

fn check_resolution(n: usize) -> Result<(), MicrostructureError> {
    if n < 4 || n % 2 != 0 {
        return Err(MicrostructureError::ResolutionMismatch {
            n,
            reason: "resolution must be even and at least 4".into(),
        });
    }
    Ok(())
}

fn aligned(x: f64, n: usize) -> bool {
    let s = x * n as f64;
    (s - s.round()).abs() < 1e-9
}

fn warn_misaligned(spec: &MaterialSpec, n: usize) {
    let profiles: Vec<&Profile1d> = match spec {
        MaterialSpec::Layered {
            conductivity, hall, ..
        } => vec![conductivity, hall],
        _ => Vec::new(),
    };
    for p in profiles {
        if p.breakpoints().iter().any(|b| !aligned(*b, n)) {
            log::warn!("profile interfaces do not fall on voxel faces at resolution {n}");
        }
    }
    if let MaterialSpec::LaminateRank1 { theta, .. } = spec {
        if !aligned(*theta, n) {
            log::warn!("theta = {theta} is not a multiple of 1/{n}; the sampled volume fraction differs");
        }
    }
    if let MaterialSpec::Columnar { conductivity, hall } = spec {
        if (conductivity.has_interfaces() || hall.has_interfaces()) && n % 4 != 0 {
            log::warn!("piecewise-constant cross-section at resolution {n}: use a multiple of 4 for exact symmetry");
        }
    }
}

/// Sample a material on a cubic `n^3` grid at voxel centres.
pub fn sample(spec: &MaterialSpec, n: usize) -> Result<GridField, MicrostructureError> {
    spec.validate()?;
    check_resolution(n)?;
    if let MaterialSpec::SmoothRandom {
        seed,
        modes,
        contrast,
        hall_amplitude,
    } = spec
    {
        return sample_smooth_random(*seed, *modes, *contrast, *hall_amplitude, n);
    }
    warn_misaligned(spec, n);
    let grid = sample_with(&Sampler::Spec(spec), n, spec.has_quadratic())?;
    let (lo, hi) = grid
        .s
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), m| (lo.min(m[(2, 2)]), hi.max(m[(2, 2)])));
    if lo < 0.0 && hi > 0.0 {
        log::warn!("Hall coefficient changes sign; equality tests that divide by r are not meaningful");
    }
    Ok(grid)
}

fn sample_with(sampler: &Sampler, n: usize, quadratic: bool) -> Result<GridField, MicrostructureError> {
    let dims = [n, n, n];
    let total = n * n * n;
    let mut sigma = Vec::with_capacity(total);
    let mut s = Vec::with_capacity(total);
    let mut quad = if quadratic {
        Some(Vec::with_capacity(total))
    } else {
        None
    };
    let c = |i: usize| (i as f64 + 0.5) / n as f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let m = sampler.at([c(i), c(j), c(k)]);
                sigma.push(m.sigma);
                s.push(m.s);
                if let Some(q) = quad.as_mut() {
                    q.push(m.quadratic.unwrap_or([Mat3::zeros(); 6]));
                }
            }
        }
    }
    GridField::new(dims, sigma, s, quad)
}

/// Smooth random isotropic medium: `a = contrast^T(y)` for a random
/// trigonometric polynomial with `|T| <= 1` and frequencies up to `modes`
/// per axis, and `S = hall_amplitude * T'(y) I` for an independent `T'`.
pub fn sample_smooth_random(
    seed: u64,
    modes: usize,
    contrast: f64,
    hall_amplitude: f64,
    n: usize,
) -> Result<GridField, MicrostructureError> {
    check_resolution(n)?;
    if n < 2 * modes + 2 {
        return Err(MicrostructureError::ResolutionMismatch {
            n,
            reason: format!("need at least {} voxels per axis for {modes} modes", 2 * modes + 2),
        });
    }
    if !(contrast >= 1.0) {
        return Err(MicrostructureError::InvalidParameter("contrast must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_a = TrigPoly::random(&mut rng, modes);
    let s = TrigPoly::random(&mut rng, modes);
    sample_with(
        &Sampler::Random {
            log_a,
            s,
            contrast,
            amplitude: hall_amplitude,
        },
        n,
        false,
    )
}

/// Columnar medium `sigma = f(d . y') g(J d . y')` with Hall coefficient
/// `r = c / f(d . y')`.
pub fn columnar_from_tensor_product(
    f: Profile1d,
    g: Profile1d,
    direction: [i64; 2],
    c: f64,
) -> MaterialSpec {
    MaterialSpec::Columnar {
        conductivity: PlanarField::TensorProduct {
            direction,
            f: f.clone(),
            g,
        },
        hall: PlanarField::Reciprocal {
            direction,
            scale: c,
            f,
        },
    }
}

/// Unit vector of an integer lattice direction.
pub fn lattice_unit(n: &[i64; 3]) -> Vec3 {
    Vec3::new(n[0] as f64, n[1] as f64, n[2] as f64).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laminate_slabs() {
        let spec = MaterialSpec::LaminateRank1 {
            theta: 0.5,
            alpha2: 2.0,
            zero_hall: false,
        };
        let g = sample(&spec, 16).unwrap();
        let ones = g.sigma.iter().filter(|m| m[(0, 0)] == 2.0 && m[(1, 1)] == 2.0).count();
        assert_eq!(ones, 16 * 16 * 16);
        let phase1 = g.s.iter().filter(|m| m[(0, 0)] == 2.0).count();
        assert_eq!(phase1, 16 * 16 * 8);
        let c = g.compacted();
        assert_eq!(c.dims(), [16, 1, 1]);
    }

    #[test]
    fn checkerboard_quadrant_placement() {
        let spec = MaterialSpec::Checkerboard4 {
            alpha: [1.0, 2.0, 3.0, 4.0],
            hall: [0.0; 4],
        };
        let g = sample(&spec, 8).unwrap();
        for k in 0..8 {
            assert_eq!(g.sigma[g.index(6, 6, k)][(0, 0)], 1.0);
            assert_eq!(g.sigma[g.index(6, 1, k)][(0, 0)], 2.0);
            assert_eq!(g.sigma[g.index(1, 1, k)][(0, 0)], 3.0);
            assert_eq!(g.sigma[g.index(1, 6, k)][(0, 0)], 4.0);
        }
        assert_eq!(g.compacted().dims(), [8, 8, 1]);
    }

    #[test]
    fn odd_resolution_rejected() {
        let spec = MaterialSpec::Homogeneous {
            conductivity: 1.0,
            hall: 0.0,
        };
        assert!(matches!(
            sample(&spec, 7),
            Err(MicrostructureError::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn smooth_random_band_and_determinism() {
        let a = sample_smooth_random(7, 2, 4.0, 0.5, 8).unwrap();
        let b = sample_smooth_random(7, 2, 4.0, 0.5, 8).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = a.eigen_band();
        assert!(lo >= 0.25 && hi <= 4.0);
        assert!(hi / lo > 4.0);
        let flat = sample_smooth_random(7, 0, 4.0, 0.5, 8).unwrap();
        assert_eq!(flat.compacted().dims(), [1, 1, 1]);
        assert!(sample_smooth_random(7, 4, 4.0, 0.5, 8).is_err());
    }

    #[test]
    fn tensor_product_values() {
        let f = Profile1d::Fourier {
            mean: 2.0,
            cos: vec![0.5],
            sin: vec![],
        };
        let g = Profile1d::phases(&[0.5, 0.5], &[1.0, 3.0]);
        let spec = columnar_from_tensor_product(f.clone(), g.clone(), [1, 1], 2.0);
        let grid = sample(&spec, 8).unwrap();
        let y = grid.center(2, 5, 0);
        let expect = f.eval(y[0] + y[1]) * g.eval(-y[0] + y[1]);
        assert_eq!(grid.sigma[grid.index(2, 5, 3)][(1, 1)], expect);
        let a = expect;
        let r = 2.0 / f.eval(y[0] + y[1]);
        assert!((grid.s[grid.index(2, 5, 3)][(2, 2)] + a * a * r).abs() < 1e-14);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = MaterialSpec::Layered {
            normal: [1, 0, 0],
            conductivity: Profile1d::phases(&[0.25, 0.75], &[1.0, 5.0]),
            hall: Profile1d::constant(0.3),
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"variant\":\"Layered\""));
        let back: MaterialSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
