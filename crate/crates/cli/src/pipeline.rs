use crate::config::{Output, RunConfig};
use anyhow::Result;
use kohler_core::effective::{analyze, assemble, EffectiveReport};
use kohler_core::io::{field_hash, CorrectorCache, CorrectorKind};
use kohler_core::microstructure::{sample, GridField};
use kohler_core::solver::{solve_p0, solve_p1, solve_p2_zero_hall};
use kohler_core::tensor::Vec3;
use serde_json::{Map, Value};

pub fn sample_config(cfg: &RunConfig) -> Result<GridField> {
    cfg.validate()?;
    Ok(sample(cfg.material()?, cfg.resolution)?)
}

/// Solve and assemble, going through the corrector cache when configured.
pub fn run(cfg: &RunConfig) -> Result<EffectiveReport> {
    let field = sample_config(cfg)?;
    let h = Vec3::from(cfg.h);
    let Some(dir) = &cfg.cache else {
        return Ok(analyze(&field, &h, &cfg.solver)?);
    };
    let cache = CorrectorCache::new(dir)?;
    let field = field.compacted();
    let fh = field_hash(&field);
    let sc = &cfg.solver;
    let p0 = cache.get_or_solve(&CorrectorCache::key(&fh, sc, CorrectorKind::P0, None), || {
        Ok::<_, anyhow::Error>(solve_p0(&field, sc)?.p0)
    })?;
    let p1 = cache.get_or_solve(&CorrectorCache::key(&fh, sc, CorrectorKind::P1, Some(&h)), || {
        Ok::<_, anyhow::Error>(solve_p1(&field, &h, &p0, sc)?)
    })?;
    let p2 = if field.has_hall() {
        None
    } else {
        Some(cache.get_or_solve(&CorrectorCache::key(&fh, sc, CorrectorKind::P2, Some(&h)), || {
            Ok::<_, anyhow::Error>(solve_p2_zero_hall(&field, &h, &p0, sc)?)
        })?)
    };
    Ok(assemble(&field, &h, sc, &p0, &p1, p2.as_ref())?)
}

const ALWAYS: [&str; 6] = ["dims", "h", "residuals_p0", "residuals_p1", "iterations_p0", "iterations_p1"];

/// Report as JSON restricted to the requested outputs.
pub fn filtered(report: &EffectiveReport, outputs: &[Output]) -> Result<Value> {
    let Value::Object(full) = serde_json::to_value(report)? else {
        unreachable!("reports serialize to objects")
    };
    let keep: Vec<&str> = ALWAYS
        .iter()
        .copied()
        .chain(outputs.iter().flat_map(|o| o.keys().iter().copied()))
        .collect();
    let out: Map<String, Value> = full.into_iter().filter(|(k, _)| keep.contains(&k.as_str())).collect();
    Ok(Value::Object(out))
}
