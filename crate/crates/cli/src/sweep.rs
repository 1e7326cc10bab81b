use crate::config::RunConfig;
use crate::pipeline;
use anyhow::{bail, Context, Result};
use kohler_core::effective::EffectiveReport;
use kohler_core::microstructure::MaterialSpec;
use kohler_core::oracles::{
    laminate_effective_conductivity, laminate_magnetoresistance, layered_gap, second_order_conductivity,
    LayeredProfile,
};
use kohler_core::tensor::{sym_eigenvalues, Vec3};
use rayon::prelude::*;
use serde_json::Value;
use std::io::Write;

pub const COLUMNS: [&str; 15] = [
    "index",
    "value",
    "status",
    "dims",
    "iterations_p0",
    "sigma_xx",
    "sigma_yy",
    "sigma_zz",
    "hall_norm",
    "m_star_norm",
    "gap_norm",
    "gap_min_eig",
    "gap_max_eig",
    "curl_defect",
    "oracle_error",
];

const INTEGER_AXES: [&str; 3] = ["resolution", "seed", "modes"];

/// Copy of `base` with one parameter replaced: `resolution`, `h1`..`h3`, or
/// a scalar parameter of the material.
pub fn with_value(base: &RunConfig, axis: &str, value: f64) -> Result<RunConfig> {
    let mut doc = serde_json::to_value(base)?;
    let number = if INTEGER_AXES.contains(&axis) {
        if value < 0.0 || value.fract() != 0.0 {
            bail!("{axis} takes non-negative integers, got {value}");
        }
        Value::from(value as u64)
    } else {
        Value::from(value)
    };
    let slot = match axis {
        "resolution" => &mut doc["resolution"],
        "h1" | "h2" | "h3" => &mut doc["h"][axis[1..].parse::<usize>()? - 1],
        _ => {
            let params = doc
                .pointer_mut("/material/params")
                .context("config has no inline material")?;
            match params.get_mut(axis) {
                Some(v) if v.is_number() => v,
                _ => bail!("material has no scalar parameter {axis:?}"),
            }
        }
    };
    *slot = number;
    Ok(serde_json::from_value(doc)?)
}

/// Relative distance to the closed form, where one exists.
fn oracle_error(cfg: &RunConfig, rep: &EffectiveReport) -> Option<f64> {
    let h = Vec3::from(cfg.h);
    match cfg.material.as_ref()? {
        MaterialSpec::LaminateRank1 {
            theta,
            alpha2,
            zero_hall: false,
        } if h[0] == 0.0 && h[1] == 0.0 => {
            let sigma = second_order_conductivity(&rep.sigma_star, &rep.s_star, &rep.n_star, &h);
            let exact = laminate_effective_conductivity(*theta, *alpha2, h[2]).ok()?;
            let e_sigma = (sigma - exact).norm() / exact.norm();
            let m = laminate_magnetoresistance(*theta, *alpha2, h[2]).ok()?;
            let e_m = if m.norm() > 0.0 {
                (rep.m_star - m).norm() / m.norm()
            } else {
                rep.m_star.norm()
            };
            Some(e_sigma.max(e_m))
        }
        spec @ MaterialSpec::Layered { .. } => {
            let exact = layered_gap(&LayeredProfile::from_spec(spec)?, &h);
            let scale = exact.norm();
            let d = (rep.gap - exact).norm();
            Some(if scale > 0.0 { d / scale } else { d })
        }
        _ => None,
    }
}

fn row(index: usize, value: f64, cfg: Result<RunConfig>) -> Vec<String> {
    let mut out = vec![index.to_string(), value.to_string()];
    let result = cfg.and_then(|cfg| pipeline::run(&cfg).map(|r| (cfg, r)));
    match result {
        Err(e) => {
            let msg = format!("{e:#}").replace([',', '\n'], ";");
            log::warn!("row {index} failed: {msg}");
            out.push(format!("error: {msg}"));
            out.resize(COLUMNS.len(), String::new());
        }
        Ok((cfg, rep)) => {
            let eig = sym_eigenvalues(&rep.gap);
            out.push("ok".into());
            out.push(format!("{}x{}x{}", rep.dims[0], rep.dims[1], rep.dims[2]));
            out.push(rep.iterations_p0.iter().max().unwrap().to_string());
            for i in 0..3 {
                out.push(rep.sigma_star[(i, i)].to_string());
            }
            out.push(rep.hall_star.norm().to_string());
            out.push(rep.m_star.norm().to_string());
            out.push(rep.gap.norm().to_string());
            out.push(eig[0].to_string());
            out.push(eig[2].to_string());
            out.push(rep.curl_defect.to_string());
            out.push(oracle_error(&cfg, &rep).map_or(String::new(), |e| e.to_string()));
        }
    }
    out
}

/// Run one report per value, in parallel, and write rows in input order.
pub fn run(base: &RunConfig, axis: &str, values: &[f64], out: &mut dyn Write) -> Result<usize> {
    // reject a bad axis before any solve
    if let Some(v) = values.first() {
        with_value(base, axis, *v)?;
    }
    let rows: Vec<Vec<String>> = values
        .par_iter()
        .enumerate()
        .map(|(i, v)| row(i, *v, with_value(base, axis, *v)))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    let mut failed = 0;
    for r in &rows {
        if r[2] != "ok" {
            failed += 1;
        }
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(failed)
}
