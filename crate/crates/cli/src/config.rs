//! Scenario configuration: defaults, overlaid by a TOML file, overlaid by
//! command-line flags (flags win). Every report embeds the resolved copy.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sphere_symm::Grid;
use std::sync::Arc;

/// Raw layer as read from TOML or collected from flags.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub d: Option<u8>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub a: Option<f64>,
    pub n_phi: Option<usize>,
    pub n_t: Option<usize>,
    pub n_cells: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<u64>,
    pub n_max: Option<u32>,
    pub degree: Option<u32>,
    pub s_values: Option<Vec<f64>>,
    pub max_steps: Option<usize>,
    pub target: Option<f64>,
    pub band: Option<[f64; 2]>,
    pub collar: Option<f64>,
    pub threads: Option<usize>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Overlays `other` on top of `self` (set fields of `other` win).
    pub fn overlaid(mut self, other: ConfigLayer) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            d, e1, e2, a, n_phi, n_t, n_cells, seed, seeds, n_max, degree, s_values, max_steps,
            target, band, collar, threads
        );
        self
    }
}

/// Fully resolved scenario, embedded verbatim in every report.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioConfig {
    pub d: u8,
    pub e1: f64,
    pub e2: f64,
    pub a: f64,
    pub n_phi: usize,
    pub n_t: usize,
    pub n_cells: usize,
    pub seed: u64,
    pub seeds: u64,
    pub n_max: u32,
    pub degree: u32,
    pub s_values: Vec<f64>,
    pub max_steps: usize,
    pub target: f64,
    pub band: [f64; 2],
    pub collar: f64,
}

impl ScenarioConfig {
    pub fn resolve(layer: ConfigLayer) -> anyhow::Result<ScenarioConfig> {
        let d = layer.d.unwrap_or(2);
        let cfg = ScenarioConfig {
            d,
            e1: layer.e1.unwrap_or(0.5),
            e2: layer.e2.unwrap_or(0.5),
            a: layer.a.unwrap_or(0.0),
            n_phi: layer.n_phi.unwrap_or(256),
            n_t: layer.n_t.unwrap_or(256),
            n_cells: layer.n_cells.unwrap_or(4096),
            seed: layer.seed.unwrap_or(1),
            seeds: layer.seeds.unwrap_or(100),
            n_max: layer.n_max.unwrap_or(8),
            degree: layer.degree.unwrap_or(2),
            s_values: layer
                .s_values
                .unwrap_or_else(sphere_symm::PerturbationFamily::default_amplitudes),
            max_steps: layer.max_steps.unwrap_or(500),
            target: layer.target.unwrap_or(0.05),
            band: layer.band.unwrap_or([0.01, 0.2]),
            collar: layer.collar.unwrap_or(0.25),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Field-level validation before any computation starts.
    fn validate(&self) -> anyhow::Result<()> {
        if self.d == 0 || self.d > 2 {
            bail!(
                "field d: set experiments support dimensions 1 and 2, got {}",
                self.d
            );
        }
        for (name, e) in [("e1", self.e1), ("e2", self.e2)] {
            if !(e > 0.0 && e < 1.0) {
                bail!("field {name}: cap measure must lie in (0, 1), got {e}");
            }
        }
        if !(-1.0..1.0).contains(&self.a) {
            bail!("field a: threshold must lie in [-1, 1), got {}", self.a);
        }
        if self.d == 2 && (self.n_phi < 4 || self.n_t < 2) {
            bail!("fields n_phi/n_t: sphere grid needs n_phi >= 4 and n_t >= 2");
        }
        if self.d == 1 && self.n_cells < 4 {
            bail!("field n_cells: circle grid needs at least 4 cells");
        }
        if self.s_values.iter().any(|s| !s.is_finite() || *s == 0.0) {
            bail!("field s_values: amplitudes must be finite and nonzero");
        }
        if !(self.band[0].is_finite() && self.band[1].is_finite() && self.band[0] < self.band[1]) {
            bail!("field band: lower edge must sit below the upper edge");
        }
        if self.target <= 0.0 {
            bail!("field target: convergence target must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> Arc<Grid> {
        match self.d {
            1 => Grid::circle(self.n_cells),
            _ => Grid::sphere(self.n_phi, self.n_t),
        }
    }
}

/// Output destinations shared by every subcommand.
#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}
