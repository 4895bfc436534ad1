use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paramtrack_core::metric::MetricConfig;
use paramtrack_core::optimizer::OptimizerConfig;
use paramtrack_core::TargetSpec;
use serde::{Deserialize, Serialize};

/// Presets shipped with the repository.
pub const PRESETS: [&str; 3] = ["exp1", "exp2", "exp3"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Planar triangle mesh.
    Volume2d,
    /// Triangulated surface in 3D, standalone or inside a tetrahedral hold-all.
    Surface3d,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// MSH file, relative to the config file.
    pub path: PathBuf,
    pub mode: Mode,
    /// Physical tag of the shape facets when `path` is a tetrahedral hold-all.
    #[serde(default)]
    pub shape_tag: Option<i32>,
}

/// Displacement applied to interior vertices before optimization.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distortion {
    #[serde(default = "zero")]
    pub x: String,
    #[serde(default = "zero")]
    pub y: String,
    #[serde(default = "zero")]
    pub z: String,
}

/// `base.join(p)` with `..` components folded where possible.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in base.join(p).components() {
        match c {
            std::path::Component::ParentDir if out.file_name().is_some() => {
                out.pop();
            }
            c => out.push(c),
        }
    }
    out
}

fn zero() -> String {
    "0".into()
}

/// Where the initial node density comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensitySource {
    /// Estimated from the cell volumes of the (distorted) input mesh.
    #[default]
    Estimate,
    /// Constant `1 / total volume`.
    Uniform,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    #[serde(default)]
    pub source: DensitySource,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// Unnormalized target `q(x, y, z)`; absent means uniform.
    #[serde(default)]
    pub expression: Option<String>,
}

impl TargetSection {
    pub fn spec(&self) -> Result<TargetSpec> {
        Ok(match &self.expression {
            None => TargetSpec::Uniform,
            Some(src) => TargetSpec::analytic(src)?,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write zero wall times so identical runs give identical logs.
    pub deterministic_log: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            deterministic_log: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub directions: usize,
    pub steps: usize,
    pub samples: usize,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            directions: 20,
            steps: 12,
            samples: 50,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    #[serde(default)]
    pub initial_distortion: Option<Distortion>,
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub check: CheckSection,
}

impl RunConfig {
    /// Parses a config; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        cfg.mesh.path = resolve(base, &cfg.mesh.path);
        cfg.output.dir = resolve(base, &cfg.output.dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn preset_path(name: &str) -> Result<PathBuf> {
        if !PRESETS.contains(&name) {
            bail!(
                "unknown preset `{name}` (available: {})",
                PRESETS.join(", ")
            );
        }
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
        let dir = dir
            .canonicalize()
            .with_context(|| format!("locating presets in {}", dir.display()))?;
        Ok(dir.join(format!("{name}.toml")))
    }

    pub fn preset(name: &str) -> Result<RunConfig> {
        RunConfig::load(&RunConfig::preset_path(name)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.target.spec()?;
        self.optimizer.validate()?;
        if let Some(d) = &self.initial_distortion {
            for e in [&d.x, &d.y, &d.z] {
                paramtrack_core::Expr::parse(e)?;
            }
            if self.mesh.shape_tag.is_some() {
                bail!("an initial distortion cannot be combined with a hold-all mesh");
            }
        }
        if self.mesh.mode == Mode::Volume2d && self.mesh.shape_tag.is_some() {
            bail!("shape_tag only applies to surface3d meshes");
        }
        if self.optimizer.reproject && self.mesh.mode == Mode::Volume2d {
            bail!("reproject only applies to surface3d meshes");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse(
            "[mesh]\npath = \"m.msh\"\nmode = \"volume2d\"\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.mesh.path, PathBuf::from("/base/m.msh"));
        assert_eq!(cfg.output.dir, PathBuf::from("/base/out"));
        assert_eq!(cfg.optimizer, OptimizerConfig::default());
        assert_eq!(cfg.metric, MetricConfig::default());
        assert!(matches!(cfg.target.spec().unwrap(), TargetSpec::Uniform));
    }

    #[test]
    fn unknown_keys_and_bad_expressions_fail() {
        let base = Path::new(".");
        assert!(RunConfig::parse(
            "[mesh]\npath = \"m\"\nmode = \"volume2d\"\ncolour = 1\n",
            base
        )
        .is_err());
        let bad = "[mesh]\npath = \"m\"\nmode = \"volume2d\"\n[target]\nexpression = \"1 + (x\"\n";
        assert!(RunConfig::parse(bad, base).is_err());
        let tag = "[mesh]\npath = \"m\"\nmode = \"volume2d\"\nshape_tag = 1\n";
        assert!(RunConfig::parse(tag, base).is_err());
    }

    #[test]
    fn tolerances_parse_as_tables() {
        let text = "[mesh]\npath = \"m\"\nmode = \"surface3d\"\n[optimizer]\ncomponent = \"tangential\"\ngrad_tol = { absolute = 1e-6 }\n";
        let cfg = RunConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(
            cfg.optimizer.grad_tol,
            paramtrack_core::optimizer::Tolerance::Absolute(1e-6)
        );
        assert_eq!(
            cfg.optimizer.component,
            paramtrack_core::Component::Tangential
        );
    }

    #[test]
    fn presets_parse() {
        for p in PRESETS {
            RunConfig::preset(p).unwrap();
        }
    }
}
