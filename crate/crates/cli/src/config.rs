//! Run configuration: a TOML file whose dimensional values all carry units.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use zefoz::eseem::HostNucleus;
use zefoz::fitting::T2FieldLaw;
use zefoz::spin::{euler_zyz, hyperfine_from_ladder};
use zefoz::zeeman::{GridAxis, Plane};
use zefoz::{presets, FieldVector, InteractionTensor, LevelPair, LevelTensors, SpinSystem};

use crate::error::{CliError, CliResult, Origin};
use crate::units::{Dim, Quantity};

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemBlock>,
    pub pair: Option<PairBlock>,
    pub nuclei: Option<NucleiBlock>,
    pub model: Option<ModelBlock>,
    pub levels: Option<LevelsBlock>,
    pub map_s1: Option<MapS1Block>,
    pub map_echo: Option<MapEchoBlock>,
    pub zefoz: Option<ZefozBlock>,
    pub rabi: Option<RabiBlock>,
    pub eseem: Option<EseemBlock>,
    pub fit: Option<FitBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(default = "default_level")]
    pub level: String,
    pub gamma_host: Quantity,
    pub ground: Option<TensorBlock>,
    pub excited: Option<TensorBlock>,
}

fn default_level() -> String {
    "ground".into()
}

/// Hyperfine tensor either as principal values or as the zero-field ladder.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorBlock {
    pub hyperfine: Option<[Quantity; 3]>,
    pub ladder: Option<[Quantity; 3]>,
    pub g: [f64; 3],
    pub euler_zyz: Option<[Quantity; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairBlock {
    pub labels: [usize; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleiBlock {
    /// `"default"` for the built-in shell, `"none"` for no nuclei.
    pub shell: Option<String>,
    pub gamma: Option<Quantity>,
    #[serde(default)]
    pub site: Vec<SiteBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteBlock {
    pub position: Option<[Quantity; 3]>,
    pub secular: Option<Quantity>,
    pub pseudo_secular: Option<Quantity>,
    pub gamma: Option<Quantity>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub e0: f64,
    pub mims_m: f64,
    pub t2_zero: Quantity,
    pub kappa: Quantity,
    pub b0: Quantity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsBlock {
    pub field: Option<[Quantity; 3]>,
    pub merge_tolerance: Option<Quantity>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start: Quantity,
    pub stop: Quantity,
    pub steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapS1Block {
    pub plane: String,
    pub axis1: Sweep,
    pub axis2: Sweep,
    pub offset: Quantity,
    pub angle_magnitude: Quantity,
    pub angle_steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEchoBlock {
    pub axis: String,
    pub sweep: Sweep,
    pub fixed: [Quantity; 3],
    pub lab_bias: Option<[Quantity; 3]>,
    pub tau: Sweep,
    pub ridge_min_depth: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZefozBlock {
    pub start: [Quantity; 3],
    pub lab_bias: Option<[Quantity; 3]>,
    pub half_width: Quantity,
    pub restarts: Option<usize>,
    #[serde(default)]
    pub random_starts: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiBlock {
    /// Ω/2π.
    pub rabi_frequency: Quantity,
    pub inhomogeneous_fwhm: Quantity,
    pub time: Sweep,
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EseemBlock {
    pub field: [Quantity; 3],
    pub tau: Sweep,
    #[serde(default = "default_revivals")]
    pub revivals: usize,
}

fn default_revivals() -> usize {
    3
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    pub m_bounds: Option<[f64; 2]>,
    pub fixed_b0: Option<Quantity>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<String>,
    pub format: Option<String>,
}

/// A parsed config and the digest of the text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub source: String,
}

pub fn load(path: Option<&Path>) -> CliResult<LoadedConfig> {
    let (text, source) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
            p.display().to_string(),
        ),
        None => (DEFAULT_CONFIG.to_string(), "<built-in default>".to_string()),
    };
    let config = parse(&text).map_err(|e| CliError::Config(format!("{source}: {e}")))?;
    Ok(LoadedConfig {
        config,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
        source,
    })
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

fn missing(block: &str, command: &str) -> CliError {
    CliError::Usage(format!(
        "'{command}' needs a [{block}] block in the config; see configs/default.toml for an example"
    ))
}

pub fn require<'a, T>(block: &'a Option<T>, name: &str, command: &str) -> CliResult<&'a T> {
    block.as_ref().ok_or_else(|| missing(name, command))
}

fn si(q: &Quantity, dim: Dim, name: &str) -> CliResult<f64> {
    q.si(dim, name).map_err(CliError::Config)
}

pub fn field(v: &[Quantity; 3], name: &str) -> CliResult<FieldVector> {
    let c = [
        si(&v[0], Dim::FIELD, name)?,
        si(&v[1], Dim::FIELD, name)?,
        si(&v[2], Dim::FIELD, name)?,
    ];
    FieldVector::new(c[0], c[1], c[2]).map_err(|e| CliError::core(e, Origin::Config))
}

impl Sweep {
    /// Sample points; an empty range is a usage error.
    pub fn axis(&self, dim: Dim, name: &str) -> CliResult<GridAxis> {
        let start = si(&self.start, dim, name)?;
        let stop = si(&self.stop, dim, name)?;
        if self.steps == 0 || (self.steps > 1 && start == stop) {
            return Err(CliError::Usage(format!(
                "{name}: empty sweep ({} to {} in {} steps)",
                self.start, self.stop, self.steps
            )));
        }
        GridAxis::new(start, stop, self.steps).map_err(|e| CliError::core(e, Origin::Config))
    }

    pub fn values(&self, dim: Dim, name: &str) -> CliResult<Vec<f64>> {
        Ok(self.axis(dim, name)?.values())
    }
}

impl TensorBlock {
    fn tensors(&self, name: &str) -> CliResult<LevelTensors> {
        let principal = match (&self.hyperfine, &self.ladder) {
            (Some(a), None) => [
                si(&a[0], Dim::FREQUENCY, name)?,
                si(&a[1], Dim::FREQUENCY, name)?,
                si(&a[2], Dim::FREQUENCY, name)?,
            ],
            (None, Some(l)) => hyperfine_from_ladder([
                si(&l[0], Dim::FREQUENCY, name)?,
                si(&l[1], Dim::FREQUENCY, name)?,
                si(&l[2], Dim::FREQUENCY, name)?,
            ]),
            _ => {
                return Err(CliError::Config(format!(
                    "[system.{name}] needs exactly one of 'hyperfine' or 'ladder'"
                )))
            }
        };
        let rotation = match &self.euler_zyz {
            Some(e) => euler_zyz(
                si(&e[0], Dim::ANGLE, name)?,
                si(&e[1], Dim::ANGLE, name)?,
                si(&e[2], Dim::ANGLE, name)?,
            ),
            None => nalgebra::Matrix3::identity(),
        };
        let core = |e| CliError::core(e, Origin::Config);
        Ok(LevelTensors::new(
            InteractionTensor::new(principal, rotation).map_err(core)?,
            InteractionTensor::new(self.g, rotation).map_err(core)?,
        ))
    }
}

impl RunConfig {
    pub fn spin_system(&self, command: &str) -> CliResult<(SpinSystem, zefoz::ElectronicLevel)> {
        let block = require(&self.system, "system", command)?;
        let ground = block.ground.as_ref().ok_or_else(|| {
            CliError::Usage(format!(
                "'{command}' needs the ground-state tensors: add [system.ground] with 'hyperfine' (or 'ladder'), 'g' and 'euler_zyz'"
            ))
        })?;
        let excited = block.excited.as_ref().map(|t| t.tensors("excited")).transpose()?;
        let gamma = si(&block.gamma_host, Dim::FREQUENCY_PER_FIELD, "system.gamma_host")?;
        let system = SpinSystem::new(ground.tensors("ground")?, excited, gamma)
            .map_err(|e| CliError::core(e, Origin::Config))?;
        let level = match block.level.as_str() {
            "ground" => zefoz::ElectronicLevel::Ground,
            "excited" => zefoz::ElectronicLevel::Excited,
            other => {
                return Err(CliError::Config(format!(
                    "system.level must be 'ground' or 'excited', got '{other}'"
                )))
            }
        };
        Ok((system, level))
    }

    pub fn level_pair(&self) -> CliResult<LevelPair> {
        match &self.pair {
            Some(p) => LevelPair::from_labels(p.labels[0], p.labels[1])
                .map_err(|e| CliError::core(e, Origin::Config)),
            None => Ok(presets::clock_pair()),
        }
    }

    pub fn nuclei(&self, system: &SpinSystem, command: &str) -> CliResult<Vec<HostNucleus>> {
        let block = require(&self.nuclei, "nuclei", command)?;
        let core = |e| CliError::core(e, Origin::Config);
        let gamma = match &block.gamma {
            Some(g) => si(g, Dim::FREQUENCY_PER_FIELD, "nuclei.gamma")?,
            None => system.gamma_host,
        };
        let mut out = match block.shell.as_deref() {
            None | Some("none") => Vec::new(),
            Some("default") => presets::default_nuclei()
                .map_err(core)?
                .into_iter()
                .map(|n| HostNucleus { gamma, ..n })
                .collect(),
            Some(other) => {
                return Err(CliError::Config(format!(
                    "nuclei.shell must be 'default' or 'none', got '{other}'"
                )))
            }
        };
        for (i, site) in block.site.iter().enumerate() {
            let name = format!("nuclei.site[{i}]");
            let g = match &site.gamma {
                Some(g) => si(g, Dim::FREQUENCY_PER_FIELD, &name)?,
                None => gamma,
            };
            let nucleus = match (&site.position, &site.secular, &site.pseudo_secular) {
                (Some(p), None, None) => HostNucleus::at(
                    nalgebra::Vector3::new(
                        si(&p[0], Dim::LENGTH, &name)?,
                        si(&p[1], Dim::LENGTH, &name)?,
                        si(&p[2], Dim::LENGTH, &name)?,
                    ),
                    g,
                ),
                (None, Some(a), Some(b)) => HostNucleus::explicit(
                    si(a, Dim::FREQUENCY, &name)?,
                    si(b, Dim::FREQUENCY, &name)?,
                    g,
                ),
                _ => {
                    return Err(CliError::Config(format!(
                        "{name} needs either 'position' or both 'secular' and 'pseudo_secular'"
                    )))
                }
            }
            .map_err(core)?;
            out.push(nucleus);
        }
        Ok(out)
    }

    pub fn t2_law(&self, command: &str) -> CliResult<(T2FieldLaw, f64, f64)> {
        let m = require(&self.model, "model", command)?;
        let law = T2FieldLaw {
            t2_zero: si(&m.t2_zero, Dim::TIME, "model.t2_zero")?,
            kappa: si(&m.kappa, Dim::FREQUENCY_PER_FIELD, "model.kappa")?,
            b0: si(&m.b0, Dim::FIELD, "model.b0")?,
        };
        Ok((law, m.e0, m.mims_m))
    }
}

pub fn plane(name: &str) -> CliResult<Plane> {
    name.parse().map_err(|e| CliError::core(e, Origin::Config))
}

pub fn axis_index(name: &str) -> CliResult<usize> {
    match name.to_ascii_lowercase().as_str() {
        "d1" => Ok(0),
        "d2" => Ok(1),
        "b" => Ok(2),
        _ => Err(CliError::Config(format!("axis must be D1, D2 or b, got '{name}'"))),
    }
}

pub fn optional_si(q: &Option<Quantity>, dim: Dim, name: &str) -> CliResult<Option<f64>> {
    q.as_ref().map(|q| si(q, dim, name)).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_resolves() {
        let c = parse(DEFAULT_CONFIG).unwrap();
        let (sys, _) = c.spin_system("levels").unwrap();
        let reference = presets::default_system().unwrap();
        let a = sys.ground.hyperfine.matrix() - reference.ground.hyperfine.matrix();
        assert!(a.amax() < 1e-3);
        assert!((sys.ground.g.matrix() - reference.ground.g.matrix()).amax() < 1e-12);
        assert_eq!(c.level_pair().unwrap(), presets::clock_pair());
        assert_eq!(c.nuclei(&sys, "eseem").unwrap().len(), 6);
        let (law, _, _) = c.t2_law("map-echo").unwrap();
        assert_eq!(law.kappa, presets::KAPPA);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[system]\ngamma_host = \"1 MHz/T\"\ncolour = 3\n").is_err());
    }

    #[test]
    fn missing_blocks_are_usage_errors() {
        let c = parse("").unwrap();
        assert!(matches!(c.spin_system("levels"), Err(CliError::Usage(_))));
        let c = parse("[system]\ngamma_host = \"1 MHz/T\"\n").unwrap();
        assert!(matches!(c.spin_system("levels"), Err(CliError::Usage(_))));
    }

    #[test]
    fn empty_sweep_is_a_usage_error() {
        let s: Sweep = toml::from_str("start = \"1 uT\"\nstop = \"1 uT\"\nsteps = 5").unwrap();
        assert!(matches!(s.axis(Dim::FIELD, "s"), Err(CliError::Usage(_))));
        let s: Sweep = toml::from_str("start = \"0 uT\"\nstop = \"1 uT\"\nsteps = 0").unwrap();
        assert!(matches!(s.axis(Dim::FIELD, "s"), Err(CliError::Usage(_))));
    }
}
