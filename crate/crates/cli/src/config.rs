//! Experiment configuration: a JSON file with defaults for every field, with
//! command-line flags overriding individual values. All nested values are
//! validated through the library constructors before any computation runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use teleportsim::freqgrid::FrequencyGrid;
use teleportsim::povm::OutcomePolicy;
use teleportsim::scheme::SchemeConfig;
use teleportsim::states::{EprSpec, SinglePhotonAmplitude};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub pump: f64,
    pub packet: PacketConfig,
    /// Optional per-node spectral envelope for the entangled pair
    /// (flat when absent).
    pub envelope: Option<Vec<f64>>,
    /// Coupling values; the first drives single runs, the full list feeds
    /// the scaling-exponent fit.
    pub chi: Vec<f64>,
    /// Measurement outcome selection; `null` means fixed `(t = 0, Ω₊ = pump)`.
    pub outcome: Option<OutcomePolicyConfig>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            pump: 10.0,
            packet: PacketConfig::default(),
            envelope: None,
            chi: vec![0.01, 0.02, 0.04],
            outcome: None,
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { omega_min: 0.0, omega_max: 10.0, n_points: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketShape {
    Gaussian,
    Lorentzian,
    Monochromatic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub shape: PacketShape,
    pub center: f64,
    /// Ignored for monochromatic packets.
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_width() -> f64 {
    0.8
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self { shape: PacketShape::Gaussian, center: 5.0, width: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase", deny_unknown_fields)]
pub enum OutcomePolicyConfig {
    Fixed { t: f64, omega_plus: f64 },
    Sample { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output file; stdout when absent.
    pub path: Option<String>,
    /// Defaults per command: CSV for sweeps, JSON otherwise.
    pub format: Option<OutputFormat>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            message: format!("cannot read {}: {e}", path.display()),
            field: None,
        })?;
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::Config {
            message: e.inner().to_string(),
            field: Some(e.path().to_string()),
        })
    }

    /// Applies flag overrides on top of the file (or default) config.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        chi: &[f64],
        out: Option<&str>,
        format: Option<OutputFormat>,
    ) {
        if let Some(seed) = seed {
            self.outcome = Some(OutcomePolicyConfig::Sample { seed });
        }
        if !chi.is_empty() {
            self.chi = chi.to_vec();
        }
        if let Some(path) = out {
            self.output.path = Some(path.to_string());
        }
        if format.is_some() {
            self.output.format = format;
        }
    }

    pub fn build_grid(&self) -> Result<FrequencyGrid, CliError> {
        FrequencyGrid::new(self.grid.omega_min, self.grid.omega_max, self.grid.n_points)
            .map_err(|e| CliError::Config { message: e.to_string(), field: Some("grid".into()) })
    }

    pub fn build_packet(&self, grid: &FrequencyGrid) -> Result<SinglePhotonAmplitude, CliError> {
        let p = &self.packet;
        let made = match p.shape {
            PacketShape::Gaussian => {
                SinglePhotonAmplitude::gaussian(grid.clone(), p.center, p.width)
            }
            PacketShape::Lorentzian => {
                SinglePhotonAmplitude::lorentzian(grid.clone(), p.center, p.width)
            }
            PacketShape::Monochromatic => {
                SinglePhotonAmplitude::monochromatic(grid.clone(), p.center)
            }
        };
        made.map_err(|e| CliError::Config {
            message: e.to_string(),
            field: Some("packet".into()),
        })
    }

    pub fn build_epr_spec(&self, grid: &FrequencyGrid) -> Result<EprSpec, CliError> {
        let spec = EprSpec::new(grid, self.pump).map_err(|e| CliError::Config {
            message: e.to_string(),
            field: Some("pump".into()),
        })?;
        match &self.envelope {
            None => Ok(spec),
            Some(g) => spec.with_envelope(grid, g.clone()).map_err(|e| CliError::Config {
                message: e.to_string(),
                field: Some("envelope".into()),
            }),
        }
    }

    pub fn build_policy(&self, grid: &FrequencyGrid) -> Result<OutcomePolicy, CliError> {
        match self.outcome {
            None => Ok(OutcomePolicy::Fixed { t: 0.0, omega_plus: self.pump }),
            Some(OutcomePolicyConfig::Sample { seed }) => Ok(OutcomePolicy::Sample { seed }),
            Some(OutcomePolicyConfig::Fixed { t, omega_plus }) => {
                if grid.time_grid().index_of(t).is_none() {
                    return Err(CliError::Config {
                        message: format!("time {t} is not a node of the dual time grid"),
                        field: Some("outcome.t".into()),
                    });
                }
                if grid.sum_grid().index_of(omega_plus).is_none() {
                    return Err(CliError::Config {
                        message: format!("sum frequency {omega_plus} is not a sum-grid node"),
                        field: Some("outcome.omega_plus".into()),
                    });
                }
                Ok(OutcomePolicy::Fixed { t, omega_plus })
            }
        }
    }

    /// First coupling value, validated.
    pub fn first_chi(&self) -> Result<f64, CliError> {
        match self.chi.first() {
            Some(&chi) if chi > 0.0 && chi.is_finite() => Ok(chi),
            Some(&chi) => Err(CliError::Config {
                message: format!("coupling must be positive, got {chi}"),
                field: Some("chi".into()),
            }),
            None => Err(CliError::Config {
                message: "chi list is empty".into(),
                field: Some("chi".into()),
            }),
        }
    }

    /// Scheme configuration with the detector taken from a fixed outcome's
    /// `Ω₊` (the pump frequency otherwise).
    pub fn build_scheme(&self, grid: &FrequencyGrid) -> Result<SchemeConfig, CliError> {
        let packet = self.build_packet(grid)?;
        let cfg = SchemeConfig::new(grid.clone(), self.first_chi()?, self.pump, packet)
            .map_err(|e| CliError::Config {
                message: e.to_string(),
                field: Some("pump".into()),
            })?;
        match self.outcome {
            Some(OutcomePolicyConfig::Fixed { omega_plus, .. }) => {
                cfg.with_detector(omega_plus).map_err(|e| CliError::Config {
                    message: e.to_string(),
                    field: Some("outcome.omega_plus".into()),
                })
            }
            _ => Ok(cfg),
        }
    }

    pub fn resolved_format(&self, default: OutputFormat) -> OutputFormat {
        self.output.format.unwrap_or(default)
    }
}
