use anyhow::{bail, Context, Result};
use kohler_core::microstructure::MaterialSpec;
use kohler_core::solver::SolverConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Quantities that can be requested in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    SigmaStar,
    Hall,
    MagnetoResistance,
    Gap,
    CurlDefect,
    FourthOrder,
}

impl Output {
    pub const ALL: [Output; 6] = [
        Output::SigmaStar,
        Output::Hall,
        Output::MagnetoResistance,
        Output::Gap,
        Output::CurlDefect,
        Output::FourthOrder,
    ];

    /// Report keys belonging to this output.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Output::SigmaStar => &["sigma_star", "sigma_star_skew", "energy_mismatch"],
            Output::Hall => &["s_star", "hall_star", "hall_star_local"],
            Output::MagnetoResistance => &["m_star", "n_star", "n_star_direct"],
            Output::Gap => &["gap", "gap_eigenvalues", "gap_tolerance", "gap_psd"],
            Output::CurlDefect => &["curl_defect"],
            Output::FourthOrder => &["fourth_order"],
        }
    }
}

fn all_outputs() -> Vec<Output> {
    Output::ALL.to_vec()
}

fn default_resolution() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Inline material description.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialSpec>,
    /// Material description in a separate JSON file, relative to the config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_file: Option<PathBuf>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub h: [f64; 3],
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "all_outputs")]
    pub outputs: Vec<Output>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Directory for cached correctors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(file) = cfg.material_file.take() {
            if cfg.material.is_some() {
                bail!("give either `material` or `material_file`, not both");
            }
            let file = path.parent().unwrap_or(Path::new(".")).join(file);
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            cfg.material = Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?);
        }
        Ok(cfg)
    }

    pub fn material(&self) -> Result<&MaterialSpec> {
        self.material.as_ref().context("config has no material")
    }

    pub fn validate(&self) -> Result<()> {
        self.material()?.validate()?;
        if self.resolution < 4 || self.resolution % 2 != 0 {
            bail!("resolution must be even and at least 4, got {}", self.resolution);
        }
        if self.h.iter().any(|x| !x.is_finite()) {
            bail!("h must be finite");
        }
        self.solver.validate()?;
        Ok(())
    }

    /// Replace the seed of a smooth random material.
    pub fn set_seed(&mut self, seed: u64) -> Result<()> {
        match self.material.as_mut() {
            Some(MaterialSpec::SmoothRandom { seed: s, .. }) => {
                *s = seed;
                Ok(())
            }
            _ => bail!("--seed applies to smooth random materials only"),
        }
    }
}

/// Parse `x,y,z`.
pub fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = parse_list(s)?;
    parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 3 components, got {}", v.len()))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

pub fn parse_vec4(s: &str) -> Result<[f64; 4], String> {
    let parts = parse_list(s)?;
    parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 components, got {}", v.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = RunConfig {
            material: Some(MaterialSpec::SmoothRandom {
                seed: 3,
                modes: 2,
                contrast: 4.0,
                hall_amplitude: 0.5,
            }),
            material_file: None,
            resolution: 16,
            h: [0.0, 0.5, 1.0],
            solver: SolverConfig::default(),
            outputs: vec![Output::Gap, Output::Hall],
            out: Some("r.json".into()),
            cache: None,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"material": {"variant": "Homogeneous", "params": {"conductivity": 2.0, "hall": 0.0}}}"#)
                .unwrap();
        assert_eq!(cfg.resolution, 32);
        assert_eq!(cfg.outputs.len(), 6);
        cfg.validate().unwrap();
    }

    #[test]
    fn vectors_parse() {
        assert_eq!(parse_vec3("1, 0,-2.5").unwrap(), [1.0, 0.0, -2.5]);
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_list("").unwrap().is_empty());
    }
}
