use crate::config::{parse_vec4, RunConfig};
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use kohler_core::microstructure::MaterialSpec;
use kohler_core::oracles::{
    checkerboard_equality_check, laminate_effective_conductivity, laminate_effective_resistivity, laminate_gap_2p,
    laminate_magnetoresistance, layered_equality_classify, layered_gap, LayeredProfile, Verdict,
};
use kohler_core::tensor::{to_rows, Mat3, Vec3};
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    /// Effective conductivity of the two-phase Hall laminate.
    LaminateSigma,
    /// Effective resistivity of the two-phase Hall laminate.
    LaminateRho,
    /// Second-order effective resistivity of the laminate.
    LaminateM,
    /// Order-2p gap entries (d11, d22) of the laminate.
    LaminateGap,
    /// Gap matrix of a layered medium.
    LayeredGap,
    /// Equality branch of a layered medium.
    LayeredClassify,
    /// Equality verdict for a four-phase checkerboard.
    CheckerboardCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub which: Which,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h3: f64,
    #[arg(long, default_value_t = 1)]
    pub p: u32,
    /// Four phase conductivities `a1,a2,a3,a4`.
    #[arg(long, value_parser = parse_vec4)]
    pub alpha: Option<[f64; 4]>,
    /// Four phase Hall coefficients.
    #[arg(long, value_parser = parse_vec4)]
    pub r: Option<[f64; 4]>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

fn print_matrix(name: &str, m: &Mat3, format: Format) {
    let rows = to_rows(m);
    match format {
        Format::Text => {
            println!("{name} =");
            for r in rows {
                println!("  {:>+.12e} {:>+.12e} {:>+.12e}", r[0], r[1], r[2]);
            }
        }
        Format::Json => println!("{}", json!({ name: rows })),
        Format::Csv => {
            println!("c1,c2,c3");
            for r in rows {
                println!("{},{},{}", r[0], r[1], r[2]);
            }
        }
    }
}

fn load_layered(path: &PathBuf) -> Result<LayeredProfile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: MaterialSpec = match serde_json::from_str::<MaterialSpec>(&text) {
        Ok(s) => s,
        Err(_) => RunConfig::load(path)?.material()?.clone(),
    };
    spec.validate()?;
    LayeredProfile::from_spec(&spec).context("material is not layered")
}

/// Layered oracles read the material from `config`, a run config or a bare material file.
pub fn run(args: &OracleArgs, h: Option<[f64; 3]>, config: Option<&PathBuf>) -> Result<()> {
    let (theta, alpha2, h3) = (args.theta, args.alpha2, args.h3);
    let h = Vec3::from(h.unwrap_or([0.0, 0.0, 1.0]));
    match args.which {
        Which::LaminateSigma => print_matrix("sigma_star", &laminate_effective_conductivity(theta, alpha2, h3)?, args.format),
        Which::LaminateRho => print_matrix("rho_star", &laminate_effective_resistivity(theta, alpha2, h3)?, args.format),
        Which::LaminateM => print_matrix("m_star", &laminate_magnetoresistance(theta, alpha2, h3)?, args.format),
        Which::LaminateGap => {
            let (d11, d22) = laminate_gap_2p(theta, alpha2, h3, args.p)?;
            let sign = |x: f64| if x > 0.0 { "+" } else if x < 0.0 { "-" } else { "0" };
            match args.format {
                Format::Text => {
                    println!("d11 = {d11:+.12e}");
                    println!("d22 = {d22:+.12e}");
                    println!("signs = ({},{})", sign(d11), sign(d22));
                }
                Format::Json => println!("{}", json!({"p": args.p, "d11": d11, "d22": d22})),
                Format::Csv => println!("p,theta,alpha2,h3,d11,d22\n{},{theta},{alpha2},{h3},{d11},{d22}", args.p),
            }
        }
        Which::LayeredGap => {
            let path = config.context("layered-gap needs --config")?;
            print_matrix("gap", &layered_gap(&load_layered(path)?, &h), args.format);
        }
        Which::LayeredClassify => {
            let path = config.context("layered-classify needs --config")?;
            let c = layered_equality_classify(&load_layered(path)?, &h);
            match args.format {
                Format::Json => println!("{}", json!({ "branch": format!("{c:?}") })),
                _ => println!("{c:?}"),
            }
        }
        Which::CheckerboardCheck => {
            let alpha = args.alpha.context("checkerboard-check needs --alpha")?;
            let r = args.r.context("checkerboard-check needs --r")?;
            let v = checkerboard_equality_check(&alpha, &r, &h)?;
            let word = match v {
                Verdict::Equality => "EQUALITY",
                Verdict::NotEqual => "NOT EQUAL",
            };
            match args.format {
                Format::Json => println!("{}", json!({ "verdict": word })),
                _ => println!("{word}"),
            }
        }
    }
    Ok(())
}
