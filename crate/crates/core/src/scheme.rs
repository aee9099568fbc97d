//! Perturbative simulation of the two-crystal optical setup: the first
//! crystal down-converts a monochromatic pump into the entangled pair on
//! channels 1 and 2, the second crystal up-converts channels 1 and 3, and an
//! ideally filtered detector projects the up-converted photon onto a single
//! frequency. Conditioning on the detector firing leaves the teleported
//! state in channel 2.
//!
//! The crystal Hamiltonians are not carried as Fock-space operators; only
//! the two matrix elements that feed the process are implemented, as vertex
//! rules on the photon-number sectors they connect. The stationary time
//! integration becomes exact energy conservation on the grid, and phase
//! matching is absorbed into the effective coupling `χ`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freqgrid::FrequencyGrid;
use crate::states::{DensityMatrix, SinglePhotonAmplitude, StateError, TwoChannelAmplitude};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("pump frequency {0} is not a sum-grid node")]
    OffGridPump(f64),
    #[error("detector frequency {0} is not a sum-grid node")]
    OffGridDetector(f64),
    #[error("coupling must be positive, got {0}")]
    InvalidChi(f64),
    #[error("need at least 2 distinct coupling values to fit an exponent")]
    DegenerateFit,
    #[error("detector weight is identically zero for this configuration")]
    ZeroDetectionWeight,
    #[error("sweep output failed: {0}")]
    Io(String),
    #[error(transparent)]
    State(#[from] StateError),
}

pub type SchemeOpResult<T> = Result<T, SchemeError>;

/// Configuration of the optical setup: grid, effective second-order coupling
/// `χ` (phase matching already absorbed), pump frequency, the channel-3 input
/// packet, and the detector filter frequency (defaults to the pump).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    grid: FrequencyGrid,
    chi: f64,
    pump: f64,
    packet: SinglePhotonAmplitude,
    detector: f64,
}

impl SchemeConfig {
    pub fn new(
        grid: FrequencyGrid,
        chi: f64,
        pump: f64,
        packet: SinglePhotonAmplitude,
    ) -> SchemeOpResult<Self> {
        if chi <= 0.0 || !chi.is_finite() {
            return Err(SchemeError::InvalidChi(chi));
        }
        if grid.sum_grid().index_of(pump).is_none() {
            return Err(SchemeError::OffGridPump(pump));
        }
        Ok(Self { grid: grid.clone(), chi, pump, packet, detector: pump })
    }

    pub fn with_detector(mut self, detector: f64) -> SchemeOpResult<Self> {
        if self.grid.sum_grid().index_of(detector).is_none() {
            return Err(SchemeError::OffGridDetector(detector));
        }
        self.detector = detector;
        Ok(self)
    }

    pub fn with_chi(mut self, chi: f64) -> SchemeOpResult<Self> {
        if chi <= 0.0 || !chi.is_finite() {
            return Err(SchemeError::InvalidChi(chi));
        }
        self.chi = chi;
        Ok(self)
    }

    pub fn grid(&self) -> &FrequencyGrid { &self.grid }

    pub fn chi(&self) -> f64 { self.chi }

    pub fn pump(&self) -> f64 { self.pump }

    pub fn packet(&self) -> &SinglePhotonAmplitude { &self.packet }

    pub fn detector(&self) -> f64 { self.detector }

    /// Checks that the packet's significant support sits inside the grid and
    /// inside the window `[Ω − ω_max, Ω − ω_min]` where the first crystal can
    /// supply a channel-1 partner. Returns a note describing any violation.
    pub fn support_note(&self) -> Option<String> {
        if !self.packet.support_inside_grid() {
            return Some("packet support reaches the grid edge".into());
        }
        let n = self.grid.n_points();
        let pump_index = self.grid.sum_grid().index_of(self.pump)?;
        let max = self
            .packet
            .amps()
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        for j in 0..n {
            if self.packet.amp(j).norm() > crate::states::SUPPORT_TOL * max {
                let partner = pump_index as i64 - j as i64;
                if partner < 0 || partner >= n as i64 {
                    return Some(format!(
                        "packet node ω₃ = {} has no channel-1 partner for pump {}",
                        self.grid.node(j),
                        self.pump
                    ));
                }
            }
        }
        None
    }
}

/// Output of one scheme run: the conditioned channel-2 state with its `χ⁴`
/// prefactor intact, the detection weight, and the trace-normalized state.
#[derive(Debug, Clone)]
pub struct SchemeOutput {
    pub channel2_state: DensityMatrix,
    pub detection_weight: f64,
    pub normalized: DensityMatrix,
    pub support_note: Option<String>,
}

impl SchemeOutput {
    pub fn record(&self, config: &SchemeConfig) -> SchemeRecord {
        SchemeRecord {
            chi: config.chi(),
            pump: config.pump(),
            detector: config.detector(),
            detection_weight: self.detection_weight,
            fidelity: self
                .normalized
                .fidelity(&DensityMatrix::from_amplitude(config.packet(), 0.0))
                .unwrap_or(f64::NAN),
        }
    }
}

/// Serializable summary of a scheme run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRecord {
    pub chi: f64,
    pub pump: f64,
    pub detector: f64,
    pub detection_weight: f64,
    pub fidelity: f64,
}

/// First-order action of the down-conversion vertex on the monochromatic
/// pump: amplitude `χ` on every channel-1⊗2 node pair with
/// `ω₁ + ω₂ = Ω`. Reproduces the flat entangled pair scaled by `χ`.
pub fn spdc_first_order(config: &SchemeConfig) -> SchemeOpResult<TwoChannelAmplitude> {
    let grid = config.grid();
    let n = grid.n_points();
    let m = grid
        .sum_grid()
        .index_of(config.pump())
        .ok_or(SchemeError::OffGridPump(config.pump()))?;
    let mut amps = nalgebra::DMatrix::from_element(n, n, Complex64::ZERO);
    let mut any = false;
    for (i, l) in grid.pairs_with_sum(m) {
        amps[(i, l)] = Complex64::new(config.chi(), 0.0);
        any = true;
    }
    if !any {
        return Err(StateError::EmptyEpr(config.pump()).into());
    }
    Ok(TwoChannelAmplitude::from_matrix(grid.clone(), amps)?)
}

/// Runs the full second-order process with the configured detector.
///
/// Crystal 2 annihilates channel-1 and channel-3 photons into the output
/// channel under exact energy conservation `ω₁ + ω₃ = ω_out`; the filtered
/// detector keeps `ω_out` equal to the detector frequency. The surviving
/// channel-2 amplitude is `χ²·f` shifted by the pump−detector offset, so the
/// tuned detector reproduces the input packet and the detection weight
/// scales as `χ⁴` independently of the packet.
pub fn run_scheme(config: &SchemeConfig) -> SchemeOpResult<SchemeOutput> {
    let grid = config.grid();
    let n = grid.n_points();
    let pump_index = grid
        .sum_grid()
        .index_of(config.pump())
        .ok_or(SchemeError::OffGridPump(config.pump()))?;
    let det_index = grid
        .sum_grid()
        .index_of(config.detector())
        .ok_or(SchemeError::OffGridDetector(config.detector()))? as i64;
    let chi2 = Complex64::new(config.chi() * config.chi(), 0.0);
    let packet = config.packet();

    let mut psi2 = DVector::from_element(n, Complex64::ZERO);
    for l in 0..n {
        // channel-1 partner fixed by the first vertex, channel-3 component
        // fixed by energy conservation at the second vertex
        let i = pump_index as i64 - l as i64;
        if i < 0 || i >= n as i64 {
            continue;
        }
        let j = det_index - i;
        if j < 0 || j >= n as i64 {
            continue;
        }
        psi2[l] = chi2 * packet.amp(j as usize);
    }

    let detection_weight: f64 = psi2.iter().map(|z| z.norm_sqr()).sum();
    if detection_weight <= 0.0 || detection_weight.is_nan() {
        return Err(SchemeError::ZeroDetectionWeight);
    }
    let channel2_state = DensityMatrix::from_pure_vector(grid.clone(), psi2);
    let normalized = channel2_state.normalized()?;
    Ok(SchemeOutput {
        channel2_state,
        detection_weight,
        normalized,
        support_note: config.support_note(),
    })
}

/// [`run_scheme`] with the detector retuned to `detector_frequency`.
pub fn detune_detector(
    config: &SchemeConfig,
    detector_frequency: f64,
) -> SchemeOpResult<SchemeOutput> {
    let detuned = config.clone().with_detector(detector_frequency)?;
    run_scheme(&detuned)
}

/// Least-squares slope of `log(detection_weight)` against `log(χ)` over the
/// given couplings; the leading-order process gives exactly 4.
pub fn chi_scaling_exponent(config: &SchemeConfig, chi_values: &[f64]) -> SchemeOpResult<f64> {
    for &chi in chi_values {
        if chi <= 0.0 || !chi.is_finite() {
            return Err(SchemeError::InvalidChi(chi));
        }
    }
    let mut distinct: Vec<f64> = chi_values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(SchemeError::DegenerateFit);
    }
    let points: Vec<(f64, f64)> = chi_values
        .iter()
        .map(|&chi| {
            let cfg = config.clone().with_chi(chi)?;
            let out = run_scheme(&cfg)?;
            Ok((chi.ln(), out.detection_weight.ln()))
        })
        .collect::<SchemeOpResult<_>>()?;
    let k = points.len() as f64;
    let mean_x: f64 = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    Ok(sxy / sxx)
}

/// Detector-frequency sweep as CSV with header
/// `detector_frequency,detection_weight,fidelity`.
pub fn write_detector_sweep_csv<W: std::io::Write>(
    config: &SchemeConfig,
    detector_frequencies: &[f64],
    out: &mut W,
) -> SchemeOpResult<()> {
    let io_err = |e: std::io::Error| SchemeError::Io(e.to_string());
    writeln!(out, "detector_frequency,detection_weight,fidelity").map_err(io_err)?;
    let reference = DensityMatrix::from_amplitude(config.packet(), 0.0);
    for &det in detector_frequencies {
        let result = detune_detector(config, det)?;
        let fidelity = result.normalized.fidelity(&reference)?;
        writeln!(
            out,
            "{},{},{}",
            crate::jsonfmt::fmt_f64(det),
            crate::jsonfmt::fmt_f64(result.detection_weight),
            crate::jsonfmt::fmt_f64(fidelity),
        )
        .map_err(io_err)?;
    }
    Ok(())
}
