//! Acceptance suites. Each suite runs a battery of checks and reports the
//! measured value of every check against a fixed bound.

use crate::effective::{
    curl_defect, dissipation_gap, effective_conductivity, effective_magnetoresistance, effective_s_matrix,
    fourth_order_gap, gap_tolerance, EffectiveError,
};
use crate::microstructure::{
    columnar_from_tensor_product, sample, transverse_quadratic, GridField, MaterialSpec, MicrostructureError,
    Profile1d,
};
use crate::oracles::{
    checkerboard_equality_check, columnar_equality_check, laminate_effective_conductivity, laminate_gap_2p,
    laminate_magnetoresistance, laminate_series_gap, layered_equality_classify, layered_gap,
    second_order_conductivity, LayeredEquality, LayeredProfile, OracleError, SeriesPhase, Verdict,
};
use crate::solver::{solve_p0, solve_p1, solve_p2_zero_hall, CorrectorGrid, SolverConfig, SolverError};
use crate::tensor::{
    cofactor, conjugate_identity_check, eval_quadratic, hall_from_s, hodge, hodge_inv, invert_series,
    s_from_hall, sym, sym_eigenvalues, Mat3, PerturbSeries, TensorError, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Microstructure(#[from] MicrostructureError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Effective(#[from] EffectiveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    AtMost,
    Below,
    AtLeast,
    Above,
}

impl Relation {
    fn holds(self, measured: f64, bound: f64) -> bool {
        match self {
            Relation::AtMost => measured <= bound,
            Relation::Below => measured < bound,
            Relation::AtLeast => measured >= bound,
            Relation::Above => measured > bound,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::AtLeast => ">=",
            Relation::Above => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {}: {}: {:.4e} {} {:.4e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.measured,
            self.relation.symbol(),
            self.bound
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Series,
    Laminate,
    Layered,
    PsdGap,
    Equality,
    FourthOrder,
    SignChange,
    Checkerboard,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Identities,
        Suite::Series,
        Suite::Laminate,
        Suite::Layered,
        Suite::PsdGap,
        Suite::Equality,
        Suite::FourthOrder,
        Suite::SignChange,
        Suite::Checkerboard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Series => "series",
            Suite::Laminate => "laminate",
            Suite::Layered => "layered",
            Suite::PsdGap => "psd-gap",
            Suite::Equality => "equality",
            Suite::FourthOrder => "fourth-order",
            Suite::SignChange => "sign-change",
            Suite::Checkerboard => "checkerboard",
        }
    }

    pub fn criterion(self) -> u8 {
        Suite::ALL.iter().position(|s| *s == self).unwrap() as u8 + 1
    }

    /// Wall-clock budget in seconds.
    pub fn budget(self) -> f64 {
        match self {
            Suite::Identities | Suite::SignChange => 1.0,
            Suite::Series => 5.0,
            Suite::Laminate | Suite::FourthOrder => 120.0,
            Suite::Layered => 180.0,
            Suite::PsdGap | Suite::Equality => 600.0,
            Suite::Checkerboard => 900.0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| VerifyError::UnknownSuite(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub elapsed: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Recorder {
    criterion: u8,
    checks: Vec<Check>,
}

impl Recorder {
    fn push(&mut self, name: impl Into<String>, measured: f64, relation: Relation, bound: f64) -> bool {
        let passed = relation.holds(measured, bound);
        let c = Check {
            criterion: self.criterion,
            name: name.into(),
            measured,
            relation,
            bound,
            passed,
        };
        log::info!("{c}");
        self.checks.push(c);
        passed
    }

    fn at_most(&mut self, name: impl Into<String>, measured: f64, bound: f64) -> bool {
        self.push(name, measured, Relation::AtMost, bound)
    }

    fn below(&mut self, name: impl Into<String>, measured: f64, bound: f64) -> bool {
        self.push(name, measured, Relation::Below, bound)
    }

    fn at_least(&mut self, name: impl Into<String>, measured: f64, bound: f64) -> bool {
        self.push(name, measured, Relation::AtLeast, bound)
    }

    fn above(&mut self, name: impl Into<String>, measured: f64, bound: f64) -> bool {
        self.push(name, measured, Relation::Above, bound)
    }

    /// Boolean outcome reported as 1 (true) against the bound 1.
    fn holds(&mut self, name: impl Into<String>, ok: bool) -> bool {
        self.push(name, if ok { 1.0 } else { 0.0 }, Relation::AtLeast, 1.0)
    }
}

/// Run one suite with the given solver settings.
pub fn run(suite: Suite, cfg: &SolverConfig) -> Result<SuiteReport, VerifyError> {
    let start = Instant::now();
    let mut rec = Recorder {
        criterion: suite.criterion(),
        checks: Vec::new(),
    };
    match suite {
        Suite::Identities => identities(&mut rec),
        Suite::Series => series(&mut rec)?,
        Suite::Laminate => laminate(&mut rec, cfg)?,
        Suite::Layered => layered(&mut rec, cfg)?,
        Suite::PsdGap => psd_gap(&mut rec, cfg)?,
        Suite::Equality => equality(&mut rec, cfg)?,
        Suite::FourthOrder => fourth_order(&mut rec, cfg)?,
        Suite::SignChange => sign_change(&mut rec)?,
        Suite::Checkerboard => checkerboard(&mut rec, cfg)?,
    }
    let elapsed = start.elapsed().as_secs_f64();
    rec.below("runtime [s]", elapsed, suite.budget());
    Ok(SuiteReport {
        suite,
        checks: rec.checks,
        elapsed,
    })
}

fn gaussian_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::from_fn(|_, _| rng.sample(StandardNormal))
}

fn gaussian_mat(rng: &mut ChaCha8Rng) -> Mat3 {
    Mat3::from_fn(|_, _| rng.sample(StandardNormal))
}

fn spd(rng: &mut ChaCha8Rng) -> Mat3 {
    let b = gaussian_mat(rng);
    b * b.transpose() * 0.25 + Mat3::identity()
}

fn identities(rec: &mut Recorder) {
    const REL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1de7);
    let mut worst = [0.0f64; 5];
    for _ in 0..1000 {
        let eta = gaussian_vec(&mut rng);
        let v = gaussian_vec(&mut rng);
        let a = gaussian_mat(&mut rng);
        let p = gaussian_mat(&mut rng);
        let xi = gaussian_vec(&mut rng);
        let sigma0 = spd(&mut rng);
        let r = gaussian_mat(&mut rng);

        let back = hodge_inv(&hodge(&eta)).map_or(f64::INFINITY, |e| (e - eta).norm() / eta.norm());
        worst[0] = worst[0].max(back);
        let cross = (hodge(&eta) * v - eta.cross(&v)).norm() / (eta.norm() * v.norm());
        worst[1] = worst[1].max(cross);
        let adj = (cofactor(&a).transpose() * a - Mat3::identity() * a.determinant()).norm() / a.norm().powi(3);
        worst[2] = worst[2].max(adj);
        let conj = conjugate_identity_check(&p, &xi) / (p.norm().powi(2) * xi.norm());
        worst[3] = worst[3].max(conj);
        let rt = hall_from_s(&sigma0, &s_from_hall(&sigma0, &r))
            .map_or(f64::INFINITY, |x| (x - r).norm() / r.norm());
        worst[4] = worst[4].max(rt);
    }
    let names = [
        "hodge round trip",
        "hodge is the cross product",
        "Cof(A)^T A = det(A) I",
        "P^T hodge(xi) P = hodge(Cof(P)^T xi)",
        "Hall matrix round trip",
    ];
    for (name, w) in names.iter().zip(worst) {
        rec.at_most(format!("{name}, worst of 1000"), w, REL);
    }
}

fn random_quadratic(rng: &mut ChaCha8Rng) -> [Mat3; 6] {
    std::array::from_fn(|_| sym(&gaussian_mat(rng)) * 0.5)
}

/// Convergence order of `|| rho_n(t d) - sigma(t d)^{-1} ||` under halving of `t`.
fn measured_order(
    sigma: &PerturbSeries,
    rho: &PerturbSeries,
    d: &Vec3,
    t0: f64,
) -> Result<f64, VerifyError> {
    let err = |t: f64| -> Result<f64, VerifyError> {
        let h = d * t;
        let exact = sigma
            .evaluate(&h)?
            .try_inverse()
            .ok_or(TensorError::SingularZeroOrder)?;
        Ok((rho.evaluate(&h)? - exact).norm())
    };
    Ok((err(t0)? / err(t0 / 2.0)?).log2())
}

fn series(rec: &mut Recorder) -> Result<(), VerifyError> {
    const SLACK: f64 = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e41e5);
    let mut worst2 = f64::INFINITY;
    let mut worst4 = f64::INFINITY;
    for _ in 0..50 {
        let d = gaussian_vec(&mut rng).normalize();
        let sigma = PerturbSeries::new(spd(&mut rng), gaussian_mat(&mut rng), random_quadratic(&mut rng));
        let rho = invert_series(&sigma, 2, None)?;
        worst2 = worst2.min(measured_order(&sigma, &rho, &d, 2e-4)?);

        let sigma4 = PerturbSeries::new(spd(&mut rng), Mat3::zeros(), random_quadratic(&mut rng))
            .with_higher(d, vec![Mat3::zeros(), sym(&gaussian_mat(&mut rng)) * 0.5])?;
        let rho4 = invert_series(&sigma4, 4, None)?;
        worst4 = worst4.min(measured_order(&sigma4, &rho4, &d, 2e-2)?);
    }
    rec.at_least("order n=2, worst of 50", worst2, 3.0 - SLACK);
    rec.at_least("order n=4 zero-Hall, worst of 50", worst4, 5.0 - SLACK);
    Ok(())
}

/// Numeric first-order quantities for one field at one `h`.
struct FirstOrder {
    sigma_star: Mat3,
    s_star: Mat3,
    n_star: Mat3,
    m_star: Mat3,
    gap: Mat3,
    defect: f64,
}

fn first_order_with(
    field: &GridField,
    p0: &CorrectorGrid,
    h: &Vec3,
    cfg: &SolverConfig,
) -> Result<FirstOrder, VerifyError> {
    let p1 = solve_p1(field, h, p0, cfg)?;
    let sigma_star = effective_conductivity(field, p0)?;
    let s_star = effective_s_matrix(field, p0)?;
    let gap = dissipation_gap(field, p0, &p1, h)?;
    let (m_star, n_star) = effective_magnetoresistance(field, p0, &p1, h)?;
    let defect = curl_defect(field, p0, h)?;
    Ok(FirstOrder {
        sigma_star,
        s_star,
        n_star,
        m_star,
        gap,
        defect,
    })
}

fn first_order(field: &GridField, h: &Vec3, cfg: &SolverConfig) -> Result<FirstOrder, VerifyError> {
    let field = field.compacted();
    let p0 = solve_p0(&field, cfg)?.p0;
    first_order_with(&field, &p0, h, cfg)
}

fn rel(a: &Mat3, b: &Mat3) -> f64 {
    (a - b).norm() / b.norm()
}

fn laminate_errors(theta: f64, alpha2: f64, h3: f64, n: usize, cfg: &SolverConfig) -> Result<(f64, f64), VerifyError> {
    let spec = MaterialSpec::LaminateRank1 {
        theta,
        alpha2,
        zero_hall: false,
    };
    let h = Vec3::new(0.0, 0.0, h3);
    let fo = first_order(&sample(&spec, n)?, &h, cfg)?;
    let sigma_h = second_order_conductivity(&fo.sigma_star, &fo.s_star, &fo.n_star, &h);
    let e_sigma = rel(&sigma_h, &laminate_effective_conductivity(theta, alpha2, h3)?);
    let e_m = rel(&fo.m_star, &laminate_magnetoresistance(theta, alpha2, h3)?);
    Ok((e_sigma, e_m))
}

fn laminate(rec: &mut Recorder, cfg: &SolverConfig) -> Result<(), VerifyError> {
    const REL: f64 = 0.01;
    let floor = 10.0 * cfg.tolerance;
    let (theta, alpha2, h3) = (0.5, 2.0, 0.3);
    let ns = [16, 32, 64, 128];
    let mut errs = Vec::new();
    for n in ns {
        let (es, em) = laminate_errors(theta, alpha2, h3, n, cfg)?;
        rec.at_most(format!("sigma*(h) relative error N={n}"), es, REL);
        rec.at_most(format!("M*(h,h) relative error N={n}"), em, REL);
        errs.push((es, em));
    }
    // non-increasing under refinement, up to the solver floor
    let mut worst_increase = f64::NEG_INFINITY;
    for w in errs.windows(2) {
        for (a, b) in [(w[0].0, w[1].0), (w[0].1, w[1].1)] {
            if b > floor {
                worst_increase = worst_increase.max(b - a);
            }
        }
    }
    rec.at_most("largest error increase under N-doubling above solver floor", worst_increase.max(0.0), 0.0);
    let (es, em) = laminate_errors(0.25, 5.0, 0.7, 64, cfg)?;
    rec.at_most("sigma*(h) relative error, contrasted laminate N=64", es, REL);
    rec.at_most("M*(h,h) relative error, contrasted laminate N=64", em, REL);
    Ok(())
}

fn layered_case(
    rec: &mut Recorder,
    label: &str,
    spec: &MaterialSpec,
    h: &Vec3,
    n: usize,
    bound: f64,
    cfg: &SolverConfig,
) -> Result<(), VerifyError> {
    let profile = LayeredProfile::from_spec(spec).expect("layered spec");
    let oracle = layered_gap(&profile, h);
    let fo = first_order(&sample(spec, n)?, h, cfg)?;
    rec.at_most(format!("gap relative error, {label}, N={n}"), rel(&fo.gap, &oracle), bound);
    Ok(())
}

fn layered(rec: &mut Recorder, cfg: &SolverConfig) -> Result<(), VerifyError> {
    let two_phase = MaterialSpec::Layered {
        normal: [1, 0, 0],
        conductivity: Profile1d::phases(&[0.5, 0.5], &[1.0, 2.0]),
        hall: Profile1d::phases(&[0.5, 0.5], &[1.0, 2.0]),
    };
    let cases = [
        ("h parallel to xi", Vec3::new(1.0, 0.0, 0.0)),
        ("h orthogonal to xi", Vec3::new(0.0, 1.0, 0.0)),
        ("h oblique", Vec3::new(0.6, 0.48, 0.64)),
    ];
    for (label, h) in cases {
        layered_case(rec, label, &two_phase, &h, 64, 0.01, cfg)?;
    }
    let smooth = MaterialSpec::Layered {
        normal: [1, 2, 0],
        conductivity: Profile1d::Fourier {
            mean: 1.5,
            cos: vec![0.4],
            sin: vec![0.2],
        },
        hall: Profile1d::Fourier {
            mean: 1.0,
            cos: vec![0.0, 0.3],
            sin: vec![0.5],
        },
    };
    layered_case(rec, "smooth profile, oblique normal and h", &smooth, &Vec3::new(0.3, -0.5, 0.8), 32, 1e-4, cfg)?;
    Ok(())
}

fn psd_gap(rec: &mut Recorder, cfg: &SolverConfig) -> Result<(), VerifyError> {
    let mut worst_margin = f64::INFINITY;
    let mut smallest_norm = f64::INFINITY;
    for seed in 1..=20u64 {
        let spec = MaterialSpec::SmoothRandom {
            seed,
            modes: 3,
            contrast: 4.0,
            hall_amplitude: 1.0,
        };
        let field = sample(&spec, 32)?;
        let field = field.compacted();
        let p0 = solve_p0(&field, cfg)?.p0;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for k in 0..5 {
            let h = gaussian_vec(&mut rng);
            let fo = first_order_with(&field, &p0, &h, cfg)?;
            let tol = gap_tolerance(&fo.gap, &fo.sigma_star, &h, cfg.tolerance);
            let eig = sym_eigenvalues(&fo.gap);
            rec.at_least(format!("min eigenvalue of gap, seed {seed}, h #{k}"), eig[0], -tol);
            worst_margin = worst_margin.min(eig[0] + tol);
            smallest_norm = smallest_norm.min(fo.gap.norm() / h.norm_squared());
        }
    }
    log::info!("psd-gap: worst margin {worst_margin:e}, smallest |gap|/|h|^2 {smallest_norm:e}");
    Ok(())
}

fn equality(rec: &mut Recorder, cfg: &SolverConfig) -> Result<(), VerifyError> {
    let zero_tol = 100.0 * cfg.tolerance;

    let constant_r = MaterialSpec::Checkerboard4 {
        alpha: [1.0, 2.0, 3.0, 4.0],
        hall: [1.0; 4],
    };
    let e3 = Vec3::z();
    let fo = first_order(&sample(&constant_r, 64)?, &e3, cfg)?;
    rec.at_most("constant-r columnar, h=e3: |gap|", fo.gap.norm(), zero_tol);
    rec.at_most("constant-r columnar, h=e3: curl defect", fo.defect, zero_tol);
    rec.holds(
        "constant-r columnar, h=e3: classifier says equality",
        checkerboard_equality_check(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], &e3)? == Verdict::Equality,
    );

    let f = Profile1d::Fourier {
        mean: 1.5,
        cos: vec![0.5],
        sin: vec![],
    };
    let g = Profile1d::Fourier {
        mean: 2.0,
        cos: vec![0.3],
        sin: vec![0.6],
    };
    let tensor = columnar_from_tensor_product(f.clone(), g.clone(), [1, 1], 1.0);
    let h = Vec3::new(1.0, 1.0, 0.0) / 2f64.sqrt();
    let fo = first_order(&sample(&tensor, 64)?, &h, cfg)?;
    rec.at_most("tensor-product columnar, h=(h',0): |gap|", fo.gap.norm(), zero_tol);
    rec.at_most("tensor-product columnar, h=(h',0): curl defect", fo.defect, zero_tol);
    let (sig, hall) = match &tensor {
        MaterialSpec::Columnar { conductivity, hall } => (conductivity.clone(), hall.clone()),
        _ => unreachable!(),
    };
    let verdict = columnar_equality_check(&|a, b| sig.eval(a, b), &|a, b| hall.eval(a, b), &h)?;
    rec.holds(
        "tensor-product columnar: classifier says equality",
        verdict.verdict == Verdict::Equality,
    );

    let ns = [32usize, 64, 128];
    let e1 = Vec3::x();
    let mut gaps = Vec::new();
    let mut defects = Vec::new();
    for n in ns {
        let fo = first_order(&sample(&constant_r, n)?, &e1, cfg)?;
        log::info!("checkerboard h=e1 N={n}: |gap| {:e}, defect {:e}", fo.gap.norm(), fo.defect);
        gaps.push(fo.gap.norm());
        defects.push(fo.defect);
    }
    let gap_plateau = 0.5 * gaps[0];
    let defect_plateau = 0.5 * defects[0];
    rec.above("checkerboard h=e1: gap plateau threshold", gap_plateau, zero_tol);
    rec.above("checkerboard h=e1: defect plateau threshold", defect_plateau, zero_tol);
    for (i, n) in ns.iter().enumerate() {
        rec.at_least(format!("checkerboard h=e1: |gap| N={n}"), gaps[i], gap_plateau);
        rec.at_least(format!("checkerboard h=e1: curl defect N={n}"), defects[i], defect_plateau);
    }
    rec.holds(
        "checkerboard h=e1: classifier says not equal",
        checkerboard_equality_check(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], &e1)? == Verdict::NotEqual,
    );

    let layered_ortho = MaterialSpec::Layered {
        normal: [1, 0, 0],
        conductivity: Profile1d::phases(&[0.5, 0.5], &[1.0, 2.0]),
        hall: Profile1d::constant(1.5),
    };
    let fo = first_order(&sample(&layered_ortho, 32)?, &Vec3::y(), cfg)?;
    rec.at_most("layered constant Hall, h orthogonal: |gap|", fo.gap.norm(), zero_tol);
    rec.at_most("layered constant Hall, h orthogonal: curl defect", fo.defect, zero_tol);
    let profile = LayeredProfile::from_spec(&layered_ortho).expect("layered");
    rec.holds(
        "layered constant Hall, h orthogonal: classifier",
        layered_equality_classify(&profile, &Vec3::y()) == LayeredEquality::OrthogonalConstantHall,
    );
    Ok(())
}

/// Zero-Hall laminate phases as truncated series along `d`.
fn zero_hall_phases(theta: f64, alpha2: f64, d: &Vec3) -> Vec<SeriesPhase> {
    let field = |a: f64, c: f64| {
        vec![Mat3::identity() * a, Mat3::zeros(), eval_quadratic(&transverse_quadratic(c), d)]
    };
    vec![
        SeriesPhase {
            fraction: theta,
            coefficients: field(1.0 / theta, 1.0 / theta),
        },
        SeriesPhase {
            fraction: 1.0 - theta,
            coefficients: field(alpha2, 1.0 / alpha2),
        },
    ]
}

fn fourth_order(rec: &mut Recorder, cfg: &SolverConfig) -> Result<(), VerifyError> {
    let (theta, alpha2) = (0.25, 8.0);
    let spec = MaterialSpec::LaminateRank1 {
        theta,
        alpha2,
        zero_hall: true,
    };
    let field = sample(&spec, 32)?;
    let field = field.compacted();
    let p0 = solve_p0(&field, cfg)?.p0;
    for (label, h) in [("h=e3", Vec3::z()), ("h oblique", Vec3::new(0.6, 0.0, 0.8))] {
        let p2 = solve_p2_zero_hall(&field, &h, &p0, cfg)?;
        let fo = fourth_order_gap(&field, &p0, &p2, &h)?;
        let sigma_star = effective_conductivity(&field, &p0)?;
        let tol = (1e-6 * fo.gap.norm()).max(10.0 * cfg.tolerance * sigma_star.norm() * h.norm_squared().powi(2));
        let eig = sym_eigenvalues(&fo.gap);
        rec.at_most(format!("{label}: max eigenvalue of fourth-order gap"), eig[2], tol);
        rec.below(format!("{label}: min eigenvalue of fourth-order gap"), eig[0], -10.0 * tol);
        let oracle = laminate_series_gap(&zero_hall_phases(theta, alpha2, &h), 4)
            .ok_or(TensorError::SingularZeroOrder)?;
        rec.at_most(format!("{label}: relative error against series laminate"), rel(&fo.gap, &oracle), 0.01);
        rec.at_most(
            format!("{label}: two assemblies of the gap agree"),
            rel(&fo.gap_via_resistivity, &fo.gap),
            1e-6,
        );
    }
    Ok(())
}

fn sign_change(rec: &mut Recorder) -> Result<(), VerifyError> {
    let p = 2;
    let (d11, d22) = laminate_gap_2p(0.01, 100.0, 1.0, p)?;
    rec.above("d11 at p=2, theta=0.01, alpha2=100", d11, 0.0);
    rec.below("d22 at p=2, theta=0.01, alpha2=100", d22, 0.0);
    // theta = alpha2^-4 along the path
    let mut last = (0.0, 0.0);
    for alpha2 in [10.0f64, 100.0, 1000.0] {
        let theta = alpha2.powi(-4);
        let (d11, d22) = laminate_gap_2p(theta, alpha2, 1.0, p)?;
        last = (d11 * alpha2.powi(p as i32), d22);
        if alpha2 == 100.0 {
            rec.above("d11 at p=2, alpha2=100, theta=alpha2^-4", d11, 0.0);
            rec.below("d22 at p=2, alpha2=100, theta=alpha2^-4", d22, 0.0);
        }
        log::info!("alpha2={alpha2}: d11*alpha2^p = {:.6}, d22 = {:.6}", last.0, last.1);
    }
    rec.at_most("|d11 alpha2^p - 1| at alpha2=1000, theta=alpha2^-4", (last.0 - 1.0).abs(), 0.05);
    rec.at_most("|d22 + 1| at alpha2=1000, theta=alpha2^-4", (last.1 + 1.0).abs(), 0.05);
    Ok(())
}

fn checkerboard(rec: &mut Recorder, cfg: &SolverConfig) -> Result<(), VerifyError> {
    let zero_tol = 100.0 * cfg.tolerance;
    let sets: [([f64; 4], [f64; 4], &str); 2] = [
        ([2.0, 1.0, 2.0, 4.0], [2.0, 2.0, 1.0, 1.0], "alpha=(2,1,2,4), r matched"),
        ([1.0, 2.0, 3.0, 4.0], [1.0; 4], "alpha=(1,2,3,4), r=1"),
    ];
    let hs = [
        ("h=0", Vec3::zeros()),
        ("h=e1", Vec3::x()),
        ("h=e3", Vec3::z()),
        ("h=(1,1,0)/sqrt2", Vec3::new(1.0, 1.0, 0.0) / 2f64.sqrt()),
    ];
    for (alpha, r, label) in sets {
        let spec = MaterialSpec::Checkerboard4 { alpha, hall: r };
        let field = sample(&spec, 64)?;
        let field = field.compacted();
        let p0 = solve_p0(&field, cfg)?.p0;
        for (hl, h) in hs {
            let fo = first_order_with(&field, &p0, &h, cfg)?;
            let numeric_equal = fo.gap.norm() <= zero_tol;
            let verdict = checkerboard_equality_check(&alpha, &r, &h)?;
            log::info!("{label}, {hl}: |gap| {:e}, defect {:e}, verdict {verdict:?}", fo.gap.norm(), fo.defect);
            rec.holds(
                format!("{label}, {hl}: classifier {verdict:?} matches numeric |gap|={:.3e}", fo.gap.norm()),
                numeric_equal == (verdict == Verdict::Equality),
            );
            if hl == "h=e1" {
                if alpha[0] == 2.0 {
                    rec.at_most(format!("{label}, {hl}: |gap|"), fo.gap.norm(), zero_tol);
                } else {
                    rec.above(format!("{label}, {hl}: max eigenvalue of gap"), sym_eigenvalues(&fo.gap)[2], zero_tol);
                }
            }
        }
    }
    Ok(())
}
