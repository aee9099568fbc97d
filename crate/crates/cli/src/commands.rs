//! The four subcommands: single protocol runs, detuning sweeps, the optical
//! scheme, and the invariant check suite.

use rayon::prelude::*;
use serde::Serialize;

use teleportsim::freqgrid::FrequencyGrid;
use teleportsim::jsonfmt;
use teleportsim::oracle;
use teleportsim::povm::{
    self, OutcomeDistribution, OutcomePolicy, PovmOutcome,
};
use teleportsim::scheme::{self, SchemeConfig};
use teleportsim::states::{Channel, DensityMatrix, SinglePhotonAmplitude, TwoChannelAmplitude};

use crate::config::{OutputFormat, RunConfig};
use crate::error::CliError;

fn warn(component: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "warning": { "component": component, "message": message } })
    );
}

fn warn_on_edge_support(packet: &SinglePhotonAmplitude) {
    if !packet.support_inside_grid() {
        warn("states", "packet support reaches the grid edge; truncation is uncontrolled");
    }
}

/// Inclusive detuning range `min..=max` with `steps` points.
#[derive(Debug, Clone, Copy)]
pub struct DetuningRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl DetuningRange {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.steps == 0 {
            return Err(CliError::Config {
                message: "sweep needs at least one step".into(),
                field: Some("detuning".into()),
            });
        }
        if self.steps == 1 {
            return Ok(vec![self.min]);
        }
        let step = (self.max - self.min) / (self.steps as f64 - 1.0);
        Ok((0..self.steps).map(|k| self.min + k as f64 * step).collect())
    }
}

pub fn cmd_teleport(config: &RunConfig) -> Result<String, CliError> {
    let grid = config.build_grid()?;
    let packet = config.build_packet(&grid)?;
    warn_on_edge_support(&packet);
    let spec = config.build_epr_spec(&grid)?;
    let policy = config.build_policy(&grid)?;
    match config.resolved_format(OutputFormat::Json) {
        OutputFormat::Json => {
            let run = povm::teleport_once(&grid, &spec, &packet, policy)
                .map_err(|e| CliError::run("povm", e))?;
            let mut text = jsonfmt::to_string_pretty(&run.record)
                .map_err(|e| CliError::run("povm", e))?;
            text.push('\n');
            Ok(text)
        }
        OutputFormat::Csv => {
            // the full outcome-weight table for this configuration
            let epr = TwoChannelAmplitude::epr(grid.clone(), &spec)
                .map_err(|e| CliError::run("states", e))?;
            let dist = OutcomeDistribution::compute(&epr, &packet)
                .map_err(|e| CliError::run("povm", e))?;
            let mut buf = Vec::new();
            dist.write_csv(&mut buf).map_err(|e| CliError::run("povm", e))?;
            String::from_utf8(buf).map_err(|e| CliError::run("povm", e))
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    detuning: f64,
    weight: f64,
    fidelity_before: f64,
    fidelity_after: f64,
}

pub fn cmd_sweep(config: &RunConfig, range: DetuningRange) -> Result<String, CliError> {
    let grid = config.build_grid()?;
    let packet = config.build_packet(&grid)?;
    warn_on_edge_support(&packet);
    let spec = config.build_epr_spec(&grid)?;
    let epr = TwoChannelAmplitude::epr(grid.clone(), &spec)
        .map_err(|e| CliError::run("states", e))?;
    // a fixed outcome policy pins the registration time; sampling does not
    let t = match config.build_policy(&grid)? {
        OutcomePolicy::Fixed { t, .. } => t,
        OutcomePolicy::Sample { .. } => 0.0,
    };
    let detunings = range.values()?;
    let sum_grid = grid.sum_grid();
    let outcomes: Vec<(f64, PovmOutcome)> = detunings
        .iter()
        .map(|&delta| {
            let omega_plus = config.pump - delta;
            if sum_grid.index_of(omega_plus).is_none() {
                return Err(CliError::Config {
                    message: format!(
                        "detuning {delta} puts the detector at {omega_plus}, not a sum-grid node"
                    ),
                    field: Some("detuning".into()),
                });
            }
            PovmOutcome::from_values(&grid, t, omega_plus)
                .map(|o| (delta, o))
                .map_err(|e| CliError::Config {
                    message: e.to_string(),
                    field: Some("detuning".into()),
                })
        })
        .collect::<Result<_, _>>()?;

    let reference = DensityMatrix::from_amplitude(&packet, 0.0);
    let rows: Vec<SweepRow> = outcomes
        .par_iter()
        .map(|&(delta, outcome)| {
            let rho = povm::condition_on_outcome(&epr, &packet, outcome)
                .map_err(|e| CliError::run("povm", e))?;
            let msg = povm::ClassicalMessage::Fired {
                t,
                omega_plus: outcome.omega_plus(&grid),
            };
            let corrected = povm::phase_correct(&rho, &msg)
                .map_err(|e| CliError::run("povm", e))?;
            Ok(SweepRow {
                detuning: delta,
                weight: rho.trace(),
                fidelity_before: rho
                    .fidelity(&reference)
                    .map_err(|e| CliError::run("states", e))?,
                fidelity_after: corrected
                    .fidelity(&reference)
                    .map_err(|e| CliError::run("states", e))?,
            })
        })
        .collect::<Result<_, CliError>>()?;

    match config.resolved_format(OutputFormat::Csv) {
        OutputFormat::Csv => {
            let mut text = String::from("detuning,weight,fidelity_before,fidelity_after\n");
            for row in &rows {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    jsonfmt::fmt_f64(row.detuning),
                    jsonfmt::fmt_f64(row.weight),
                    jsonfmt::fmt_f64(row.fidelity_before),
                    jsonfmt::fmt_f64(row.fidelity_after),
                ));
            }
            Ok(text)
        }
        OutputFormat::Json => {
            let mut text =
                jsonfmt::to_string_pretty(&rows).map_err(|e| CliError::run("povm", e))?;
            text.push('\n');
            Ok(text)
        }
    }
}

#[derive(Serialize)]
struct SchemeCliRecord {
    chi: Vec<f64>,
    pump: f64,
    detector: f64,
    detection_weight: f64,
    fidelity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exponent: Option<f64>,
}

pub fn cmd_scheme(config: &RunConfig, range: DetuningRange) -> Result<String, CliError> {
    let grid = config.build_grid()?;
    let scheme_config = config.build_scheme(&grid)?;
    if let Some(note) = scheme_config.support_note() {
        warn("scheme", &note);
    }
    match config.resolved_format(OutputFormat::Json) {
        OutputFormat::Json => {
            let output = scheme::run_scheme(&scheme_config)
                .map_err(|e| CliError::run("scheme", e))?;
            let record = output.record(&scheme_config);
            let distinct = {
                let mut v = config.chi.clone();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v.dedup();
                v.len()
            };
            let exponent = if distinct >= 2 {
                Some(
                    scheme::chi_scaling_exponent(&scheme_config, &config.chi).map_err(|e| {
                        CliError::Config { message: e.to_string(), field: Some("chi".into()) }
                    })?,
                )
            } else {
                None
            };
            let mut text = jsonfmt::to_string_pretty(&SchemeCliRecord {
                chi: config.chi.clone(),
                pump: record.pump,
                detector: record.detector,
                detection_weight: record.detection_weight,
                fidelity: record.fidelity,
                exponent,
            })
            .map_err(|e| CliError::run("scheme", e))?;
            text.push('\n');
            Ok(text)
        }
        OutputFormat::Csv => {
            // detector sweep: detector = pump − detuning for each range point
            let detectors: Vec<f64> = range
                .values()?
                .into_iter()
                .map(|delta| config.pump - delta)
                .collect();
            for &det in &detectors {
                if grid.sum_grid().index_of(det).is_none() {
                    return Err(CliError::Config {
                        message: format!("detector frequency {det} is not a sum-grid node"),
                        field: Some("detuning".into()),
                    });
                }
            }
            let mut buf = Vec::new();
            scheme::write_detector_sweep_csv(&scheme_config, &detectors, &mut buf)
                .map_err(|e| CliError::run("scheme", e))?;
            String::from_utf8(buf).map_err(|e| CliError::run("scheme", e))
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Serialize)]
struct CheckReport {
    name: &'static str,
    status: CheckStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl CheckReport {
    fn measured(name: &'static str, value: f64, threshold: f64) -> Self {
        CheckReport {
            name,
            status: if value <= threshold { CheckStatus::Pass } else { CheckStatus::Fail },
            value: Some(value),
            threshold: Some(threshold),
            note: None,
        }
    }

    fn skipped(name: &'static str, note: String) -> Self {
        CheckReport { name, status: CheckStatus::Skipped, value: None, threshold: None, note: Some(note) }
    }

    fn passed(&self) -> bool {
        !matches!(self.status, CheckStatus::Fail)
    }
}

#[derive(Serialize)]
struct CheckSuiteReport {
    checks: Vec<CheckReport>,
    all_passed: bool,
}

/// Deterministic probe packet distinct from the configured one: a two-peak
/// superposition placed symmetrically about the packet window.
fn probe_packet(grid: &FrequencyGrid) -> Result<SinglePhotonAmplitude, CliError> {
    let mid = 0.5 * (grid.omega_min() + grid.omega_max());
    let span = grid.omega_max() - grid.omega_min();
    let a = SinglePhotonAmplitude::gaussian(grid.clone(), mid - span / 8.0, span / 16.0)
        .map_err(|e| CliError::run("states", e))?;
    let b = SinglePhotonAmplitude::gaussian(grid.clone(), mid + span / 8.0, span / 16.0)
        .map_err(|e| CliError::run("states", e))?;
    SinglePhotonAmplitude::superpose(
        &a,
        &b,
        num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
    )
    .map_err(|e| CliError::run("states", e))
}

/// Deterministic family of structured packets for the reference-agreement
/// check: varying centers, widths, and time phases.
fn case_packet(grid: &FrequencyGrid, k: usize) -> Result<SinglePhotonAmplitude, CliError> {
    let span = grid.omega_max() - grid.omega_min();
    let center = grid.omega_min() + span * (0.3 + 0.05 * (k % 9) as f64);
    let width = span * (0.05 + 0.02 * (k % 5) as f64);
    let tau = 0.37 * k as f64;
    Ok(SinglePhotonAmplitude::gaussian(grid.clone(), center, width)
        .map_err(|e| CliError::run("states", e))?
        .time_evolve(tau))
}

pub fn cmd_check(config: &RunConfig, truncate_time_grid: bool) -> Result<(String, bool), CliError> {
    let grid = config.build_grid()?;
    let packet = config.build_packet(&grid)?;
    let spec = config.build_epr_spec(&grid)?;
    let epr = TwoChannelAmplitude::epr(grid.clone(), &spec)
        .map_err(|e| CliError::run("states", e))?;
    let n = grid.n_points();
    let n_time = if truncate_time_grid { (n / 2).max(1) } else { n };
    let mut checks = Vec::new();

    // identity resolution on the discrete outcome lattice
    let defect = povm::completeness_defect_over_times(&grid, n_time);
    checks.push(CheckReport::measured("povm_completeness", defect, 1e-8));

    // total outcome weight against the squared input norm
    let dist = OutcomeDistribution::compute(&epr, &packet)
        .map_err(|e| CliError::run("povm", e))?;
    let expected = epr.norm_sqr() * packet.norm_sqr();
    checks.push(CheckReport::measured(
        "total_probability",
        (dist.total() - expected).abs() / expected,
        1e-8,
    ));

    // tuned-detector weights: time-uniform and identical across inputs.
    // this is a claim about the idealized flat pair with the packet fully
    // inside the reachable window; outside that regime the truncated model
    // legitimately departs from it, so the check is skipped with a notice.
    let flat_pair = config.envelope.is_none();
    {
        let m = grid.sum_grid().index_of(config.pump).expect("validated pump");
        let probe = probe_packet(&grid)?;
        let reach = |p: &SinglePhotonAmplitude| -> Result<Option<String>, CliError> {
            SchemeConfig::new(grid.clone(), 1.0, config.pump, p.clone())
                .map(|c| c.support_note())
                .map_err(|e| CliError::run("scheme", e))
        };
        let blocker = if !flat_pair {
            Some("pair envelope departs from the idealized flat pair".to_string())
        } else {
            reach(&packet)?.or(reach(&probe)?)
        };
        match blocker {
            Some(note) => checks.push(CheckReport::skipped("no_information", note)),
            None => {
                let dist_probe = OutcomeDistribution::compute(&epr, &probe)
                    .map_err(|e| CliError::run("povm", e))?;
                let mean: f64 = (0..dist.n_time()).map(|k| dist.normalized(k, m)).sum::<f64>()
                    / dist.n_time() as f64;
                let mut dev = 0.0f64;
                for k in 0..dist.n_time() {
                    dev = dev.max((dist.normalized(k, m) - mean).abs() / mean);
                    dev = dev
                        .max((dist_probe.normalized(k, m) - dist.normalized(k, m)).abs() / mean);
                }
                checks.push(CheckReport::measured("no_information", dev, 1e-12));
            }
        }
    }

    // the optical scheme against the abstract measurement, entrywise.
    // the scheme models the flat pair, so an enveloped configuration has no
    // optical counterpart to compare against.
    if !flat_pair {
        checks.push(CheckReport::skipped(
            "path_equivalence",
            "pair envelope departs from the idealized flat pair".into(),
        ));
    } else {
        let scheme_config = config.build_scheme(&grid)?;
        let m_pump = grid.sum_grid().index_of(config.pump).unwrap();
        let mut dev = 0.0f64;
        let mut compared = 0;
        for offset in -2i64..=2 {
            let m = m_pump as i64 + offset;
            if m < 0 || m >= grid.sum_grid().n_points() as i64 {
                continue;
            }
            let m = m as usize;
            let detector = grid.sum_grid().node(m);
            let scheme_out = match scheme::detune_detector(&scheme_config, detector) {
                Ok(out) => out,
                Err(scheme::SchemeError::ZeroDetectionWeight) => continue,
                Err(e) => return Err(CliError::run("scheme", e)),
            };
            let outcome = PovmOutcome {
                time_index: grid.time_grid().index_of(0.0).expect("dual grid holds t = 0"),
                sum_index: m,
            };
            let conditioned = match povm::condition_on_outcome(&epr, &packet, outcome) {
                Ok(rho) => rho,
                Err(povm::PovmError::ZeroWeightOutcome { .. }) => continue,
                Err(e) => return Err(CliError::run("povm", e)),
            };
            let a = scheme_out.normalized;
            let b = conditioned
                .normalized()
                .map_err(|e| CliError::run("states", e))?;
            let d = (a.matrix() - b.matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            dev = dev.max(d);
            compared += 1;
        }
        if compared == 0 {
            checks.push(CheckReport::skipped(
                "path_equivalence",
                "no detector frequency with nonzero weight".into(),
            ));
        } else {
            checks.push(CheckReport::measured("path_equivalence", dev, 1e-9));
        }
    }

    // dense-reference agreement, guarded to small grids
    if n <= oracle::MAX_COMPLETENESS_N {
        let mut dev = 0.0f64;
        let mut case = 0usize;
        let mut done = 0usize;
        while done < 10 && case < 200 {
            let test_packet = case_packet(&grid, case)?;
            let outcome = PovmOutcome {
                time_index: case % grid.time_grid().n_points(),
                sum_index: (7 * case + 3) % grid.sum_grid().n_points(),
            };
            case += 1;
            let fast = match povm::condition_on_outcome(&epr, &test_packet, outcome) {
                Ok(rho) => rho,
                Err(povm::PovmError::ZeroWeightOutcome { .. }) => continue,
                Err(e) => return Err(CliError::run("povm", e)),
            };
            let (dense, weight) = oracle::dense_condition(&grid, &epr, &test_packet, outcome)
                .map_err(|e| CliError::run("oracle", e))?;
            dev = dev.max((weight - fast.trace()).abs());
            let d = (dense.matrix() - fast.matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            dev = dev.max(d);
            done += 1;
        }
        checks.push(CheckReport::measured("oracle_condition", dev, 1e-10));

        let dense = oracle::dense_completeness_over_times(&grid, n_time)
            .map_err(|e| CliError::run("oracle", e))?;
        checks.push(CheckReport::measured(
            "oracle_completeness",
            (dense - defect).abs(),
            1e-10,
        ));
    } else {
        let note = format!("grid has {n} nodes; dense reference guarded at {}", oracle::MAX_COMPLETENESS_N);
        checks.push(CheckReport::skipped("oracle_condition", note.clone()));
        checks.push(CheckReport::skipped("oracle_completeness", note));
    }

    // summing all conditioned states recovers the reduced channel-2 state
    {
        let mut sum = nalgebra::DMatrix::from_element(n, n, num_complex::Complex64::ZERO);
        for k in 0..grid.time_grid().n_points() {
            for m in 0..grid.sum_grid().n_points() {
                match povm::condition_on_outcome(
                    &epr,
                    &packet,
                    PovmOutcome { time_index: k, sum_index: m },
                ) {
                    Ok(rho) => sum += rho.matrix(),
                    Err(povm::PovmError::ZeroWeightOutcome { .. }) => continue,
                    Err(e) => return Err(CliError::run("povm", e)),
                }
            }
        }
        let reduced = epr.partial_trace(Channel::Second);
        let expect = reduced.matrix().map(|z| z * packet.norm_sqr());
        let dev = (&sum - &expect).iter().map(|z| z.norm()).fold(0.0, f64::max);
        checks.push(CheckReport::measured("law_of_total_probability", dev, 1e-9));
    }

    let all_passed = checks.iter().all(CheckReport::passed);
    let mut text = jsonfmt::to_string_pretty(&CheckSuiteReport { checks, all_passed })
        .map_err(|e| CliError::run("check", e))?;
    text.push('\n');
    Ok((text, all_passed))
}
