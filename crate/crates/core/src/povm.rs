//! The joint time/sum-frequency measurement on channels 1⊗3, outcome
//! statistics, the conditioned channel-2 state, and the classical-message
//! phase correction — the abstract teleportation protocol.
//!
//! Outcomes live on the lattice `TimeGrid × SumFrequencyGrid`. Each outcome
//! cell carries the measure weight `Δt·ΔΩ₊/(2π)`; with the DFT-dual time grid
//! the weighted POVM elements sum to the identity on the discrete space to
//! machine precision, so probabilities are conserved exactly rather than up
//! to discretization error.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freqgrid::FrequencyGrid;
use crate::states::{DensityMatrix, SinglePhotonAmplitude, StateError, TwoChannelAmplitude};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PovmError {
    #[error("time {0} is not a node of the dual time grid")]
    OffGridTime(f64),
    #[error("sum frequency {0} is not a node of the sum grid")]
    OffGridOmegaPlus(f64),
    #[error("outcome ({t}, {omega_plus}) has zero weight for this input")]
    ZeroWeightOutcome { t: f64, omega_plus: f64 },
    #[error("total outcome weight is zero; packet support is unreachable")]
    ZeroTotal,
    #[error("no detector firing recorded; nothing to correct")]
    NotFired,
    #[error(transparent)]
    State(#[from] StateError),
}

pub type PovmResult<T> = Result<T, PovmError>;

/// One measurement outcome: a node of the dual time grid and a node of the
/// sum-frequency grid (`Ω₊ = 2ω₊`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PovmOutcome {
    pub time_index: usize,
    pub sum_index: usize,
}

impl PovmOutcome {
    /// Resolves raw `(t, Ω₊)` values onto the outcome lattice.
    pub fn from_values(grid: &FrequencyGrid, t: f64, omega_plus: f64) -> PovmResult<Self> {
        let time_index = grid
            .time_grid()
            .index_of(t)
            .ok_or(PovmError::OffGridTime(t))?;
        let sum_index = grid
            .sum_grid()
            .index_of(omega_plus)
            .ok_or(PovmError::OffGridOmegaPlus(omega_plus))?;
        Ok(Self { time_index, sum_index })
    }

    pub fn t(&self, grid: &FrequencyGrid) -> f64 {
        grid.time_grid().node(self.time_index)
    }

    pub fn omega_plus(&self, grid: &FrequencyGrid) -> f64 {
        grid.sum_grid().node(self.sum_index)
    }
}

/// The amplitude factor of one rank-1 POVM element: support on the basis
/// pairs `(i, j)` with `ω_i + ω_j = Ω₊`, entry phase `e^{iω₋t}` with
/// `ω₋ = (ω_i − ω_j)/2`. All nonzero entries have unit modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionVector {
    outcome: PovmOutcome,
    entries: Vec<(usize, usize, Complex64)>,
}

impl ReductionVector {
    pub fn new(grid: &FrequencyGrid, outcome: PovmOutcome) -> Self {
        let t = outcome.t(grid);
        let entries = grid
            .pairs_with_sum(outcome.sum_index)
            .map(|(i, j)| {
                let (_, omega_minus) = grid.pair_to_sum_diff(i, j);
                (i, j, Complex64::cis(omega_minus * t))
            })
            .collect();
        Self { outcome, entries }
    }

    pub fn outcome(&self) -> PovmOutcome { self.outcome }

    /// Support entries `(i, j, phase)` in increasing `i`.
    pub fn entries(&self) -> &[(usize, usize, Complex64)] { &self.entries }

    /// Dense vector on the channel-1 ⊗ channel-3 product basis
    /// (index `i·n + j`).
    pub fn to_dense(&self, grid: &FrequencyGrid) -> DVector<Complex64> {
        let n = grid.n_points();
        let mut v = DVector::from_element(n * n, Complex64::ZERO);
        for &(i, j, phase) in &self.entries {
            v[i * n + j] = phase;
        }
        v
    }

    /// Materializes the POVM element `M = |R⟩⟨R|·Δt·ΔΩ₊/(2π)` as a full
    /// `n²×n²` matrix. Only for small grids and tests; everything else works
    /// off the rank-1 structure.
    pub fn povm_matrix(&self, grid: &FrequencyGrid) -> DMatrix<Complex64> {
        let v = self.to_dense(grid);
        let mu = grid.outcome_measure();
        let n2 = v.len();
        DMatrix::from_fn(n2, n2, |a, b| v[a] * v[b].conj() * mu)
    }
}

/// Applies `⟨R(outcome)|` to `epr ⊗ packet`, yielding the unnormalized
/// channel-2 amplitude. Fixed summation order over the anti-diagonal.
fn reduce_to_channel2(
    epr: &TwoChannelAmplitude,
    packet: &SinglePhotonAmplitude,
    outcome: PovmOutcome,
) -> DVector<Complex64> {
    let grid = epr.grid();
    let n = grid.n_points();
    let t = outcome.t(grid);
    let mut psi = DVector::from_element(n, Complex64::ZERO);
    for (i, j) in grid.pairs_with_sum(outcome.sum_index) {
        let f = packet.amp(j);
        if f == Complex64::ZERO {
            continue;
        }
        let (_, omega_minus) = grid.pair_to_sum_diff(i, j);
        let phase = Complex64::cis(-omega_minus * t);
        for l in 0..n {
            let e = epr.amp(i, l);
            if e != Complex64::ZERO {
                psi[l] += phase * e * f;
            }
        }
    }
    psi
}

/// Relative weights of all outcomes on the `(t, Ω₊)` lattice, exposed both
/// raw and normalized by the total. Only ratios are physical: the entangled
/// pair is unnormalizable, so absolute continuum densities are not defined.
#[derive(Debug, Clone)]
pub struct OutcomeDistribution {
    grid: FrequencyGrid,
    /// Row `k` = time node, column `m` = sum node.
    weights: DMatrix<f64>,
    total: f64,
}

impl OutcomeDistribution {
    pub fn compute(
        epr: &TwoChannelAmplitude,
        packet: &SinglePhotonAmplitude,
    ) -> PovmResult<Self> {
        if epr.grid() != packet.grid() {
            return Err(StateError::GridMismatch.into());
        }
        let grid = epr.grid().clone();
        let n_t = grid.time_grid().n_points();
        let n_s = grid.sum_grid().n_points();
        let mu = grid.outcome_measure();
        let mut weights = DMatrix::from_element(n_t, n_s, 0.0);
        for k in 0..n_t {
            for m in 0..n_s {
                let outcome = PovmOutcome { time_index: k, sum_index: m };
                let psi = reduce_to_channel2(epr, packet, outcome);
                weights[(k, m)] = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * mu;
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || total.is_nan() {
            return Err(PovmError::ZeroTotal);
        }
        Ok(Self { grid, weights, total })
    }

    pub fn grid(&self) -> &FrequencyGrid { &self.grid }

    pub fn weight(&self, time_index: usize, sum_index: usize) -> f64 {
        self.weights[(time_index, sum_index)]
    }

    pub fn normalized(&self, time_index: usize, sum_index: usize) -> f64 {
        self.weights[(time_index, sum_index)] / self.total
    }

    pub fn total(&self) -> f64 { self.total }

    pub fn n_time(&self) -> usize { self.weights.nrows() }

    pub fn n_sum(&self) -> usize { self.weights.ncols() }

    /// Draws an outcome from the normalized distribution by a cumulative
    /// scan in row-major order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> PovmOutcome {
        let u: f64 = rng.random::<f64>() * self.total;
        let mut acc = 0.0;
        let mut last = PovmOutcome { time_index: 0, sum_index: 0 };
        for k in 0..self.n_time() {
            for m in 0..self.n_sum() {
                let w = self.weights[(k, m)];
                if w == 0.0 {
                    continue;
                }
                last = PovmOutcome { time_index: k, sum_index: m };
                acc += w;
                if u < acc {
                    return last;
                }
            }
        }
        last
    }

    /// CSV rows over the full lattice, header
    /// `t,omega_plus,weight,normalized_weight`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,omega_plus,weight,normalized_weight")?;
        let tg = self.grid.time_grid();
        let sg = self.grid.sum_grid();
        for k in 0..self.n_time() {
            for m in 0..self.n_sum() {
                writeln!(
                    out,
                    "{},{},{},{}",
                    crate::jsonfmt::fmt_f64(tg.node(k)),
                    crate::jsonfmt::fmt_f64(sg.node(m)),
                    crate::jsonfmt::fmt_f64(self.weights[(k, m)]),
                    crate::jsonfmt::fmt_f64(self.weights[(k, m)] / self.total),
                )?;
            }
        }
        Ok(())
    }
}

/// Operator-norm distance between the measure-weighted POVM sum and the
/// identity on the channel-1⊗3 space.
///
/// The sum is block-diagonal over fixed-sum classes, so the norm is the
/// largest block norm; the dense reference in [`crate::oracle`] checks this
/// shortcut.
pub fn completeness_defect(grid: &FrequencyGrid) -> f64 {
    completeness_defect_over_times(grid, grid.time_grid().n_points())
}

/// Same defect with the time grid truncated to its first `n_time` nodes.
/// Dropping nodes breaks the identity resolution; used as a negative control.
pub fn completeness_defect_over_times(grid: &FrequencyGrid, n_time: usize) -> f64 {
    let n = grid.n_points();
    let tg = grid.time_grid();
    let n_time = n_time.min(tg.n_points());
    let mu = grid.outcome_measure();
    // phase sums S(q) = Σ_k e^{iqΔω t_k} for q = i − i'
    let phase_sum: Vec<Complex64> = (0..n)
        .map(|q| {
            (0..n_time)
                .map(|k| Complex64::cis(q as f64 * grid.delta_omega() * tg.node(k)))
                .sum()
        })
        .collect();
    let mut defect = 0.0f64;
    for m in 0..grid.sum_grid().n_points() {
        let pairs: Vec<(usize, usize)> = grid.pairs_with_sum(m).collect();
        let b = pairs.len();
        let block = DMatrix::from_fn(b, b, |p, q| {
            let (i, _) = pairs[p];
            let (ip, _) = pairs[q];
            let s = if i >= ip {
                phase_sum[i - ip]
            } else {
                phase_sum[ip - i].conj()
            };
            let ident = if p == q { Complex64::ONE } else { Complex64::ZERO };
            s * mu - ident
        });
        let se = SymmetricEigen::new(block);
        let norm = se.eigenvalues.iter().fold(0.0f64, |acc, ev| acc.max(ev.abs()));
        defect = defect.max(norm);
    }
    defect
}

/// Unnormalized conditioned channel-2 state for one outcome; its trace is
/// the outcome weight, so summing over the whole lattice reproduces the
/// reduced pre-measurement state.
pub fn condition_on_outcome(
    epr: &TwoChannelAmplitude,
    packet: &SinglePhotonAmplitude,
    outcome: PovmOutcome,
) -> PovmResult<DensityMatrix> {
    if epr.grid() != packet.grid() {
        return Err(StateError::GridMismatch.into());
    }
    let grid = epr.grid();
    let psi = reduce_to_channel2(epr, packet, outcome);
    let mu = grid.outcome_measure();
    let weight: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * mu;
    if weight <= 0.0 || weight.is_nan() {
        return Err(PovmError::ZeroWeightOutcome {
            t: outcome.t(grid),
            omega_plus: outcome.omega_plus(grid),
        });
    }
    let scaled = psi.map(|z| z * Complex64::new(mu.sqrt(), 0.0));
    Ok(DensityMatrix::from_pure_vector(grid.clone(), scaled))
}

/// What the sender transmits over the classical channel: whether a detector
/// fired, and if so at which time and sum frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalMessage {
    Fired { t: f64, omega_plus: f64 },
    NotFired,
}

#[derive(Serialize, Deserialize)]
struct MessageWire {
    fired: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_plus: Option<f64>,
}

impl Serialize for ClassicalMessage {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let wire = match *self {
            ClassicalMessage::Fired { t, omega_plus } => MessageWire {
                fired: true,
                t: Some(t),
                omega_plus: Some(omega_plus),
            },
            ClassicalMessage::NotFired => MessageWire { fired: false, t: None, omega_plus: None },
        };
        wire.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ClassicalMessage {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let wire = MessageWire::deserialize(de)?;
        match (wire.fired, wire.t, wire.omega_plus) {
            (true, Some(t), Some(omega_plus)) => Ok(ClassicalMessage::Fired { t, omega_plus }),
            (false, None, None) => Ok(ClassicalMessage::NotFired),
            _ => Err(serde::de::Error::custom(
                "fired messages carry t and omega_plus; unfired messages carry neither",
            )),
        }
    }
}

/// Undoes the registration-time phases: conjugates by `U = diag(e^{−iω_l t})`.
/// For the outcome tuned to the pump frequency this maps the conditioned
/// state back onto the input state exactly; eigenvalues are untouched.
///
/// The sign of the exponent is pinned by the dense-contraction reference
/// test, not assumed.
pub fn phase_correct(rho: &DensityMatrix, msg: &ClassicalMessage) -> PovmResult<DensityMatrix> {
    match *msg {
        ClassicalMessage::NotFired => Err(PovmError::NotFired),
        ClassicalMessage::Fired { t, .. } => {
            let grid = rho.grid().clone();
            Ok(rho.apply_diagonal_phase(|l| -grid.node(l) * t))
        }
    }
}

/// How the measurement outcome of a protocol run is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum OutcomePolicy {
    /// The experimenter picks the detector: registration time `t` and sum
    /// frequency `Ω₊`, both on their grids.
    Fixed { t: f64, omega_plus: f64 },
    /// Draw from the normalized outcome distribution with a seeded generator.
    Sample { seed: u64 },
}

/// Serializable summary of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportRecord {
    pub seed: Option<u64>,
    pub outcome: OutcomeValues,
    pub weight: f64,
    pub fidelity_before: f64,
    pub fidelity_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeValues {
    pub t: f64,
    pub omega_plus: f64,
}

/// Full output of one protocol run: the classical message, the conditioned
/// channel-2 state before and after correction, and the summary record.
#[derive(Debug, Clone)]
pub struct TeleportRun {
    pub message: ClassicalMessage,
    pub before: DensityMatrix,
    pub after: DensityMatrix,
    pub record: TeleportRecord,
}

/// Runs the protocol once: prepare the pair, measure channels 1⊗3 with the
/// chosen outcome, condition channel 2, send the classical message, correct
/// phases, and score fidelity against the input packet's density matrix.
pub fn teleport_once(
    grid: &FrequencyGrid,
    epr_spec: &crate::states::EprSpec,
    packet: &SinglePhotonAmplitude,
    policy: OutcomePolicy,
) -> PovmResult<TeleportRun> {
    let epr = TwoChannelAmplitude::epr(grid.clone(), epr_spec)?;
    let (outcome, seed) = match policy {
        OutcomePolicy::Fixed { t, omega_plus } => {
            (PovmOutcome::from_values(grid, t, omega_plus)?, None)
        }
        OutcomePolicy::Sample { seed } => {
            let dist = OutcomeDistribution::compute(&epr, packet)?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (dist.sample(&mut rng), Some(seed))
        }
    };
    let before = condition_on_outcome(&epr, packet, outcome)?;
    let message = ClassicalMessage::Fired {
        t: outcome.t(grid),
        omega_plus: outcome.omega_plus(grid),
    };
    let after = phase_correct(&before, &message)?;
    let reference = DensityMatrix::from_amplitude(packet, 0.0);
    let fidelity_before = before.fidelity(&reference)?;
    let fidelity_after = after.fidelity(&reference)?;
    Ok(TeleportRun {
        message,
        record: TeleportRecord {
            seed,
            outcome: OutcomeValues {
                t: outcome.t(grid),
                omega_plus: outcome.omega_plus(grid),
            },
            weight: before.trace(),
            fidelity_before,
            fidelity_after,
        },
        before,
        after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::EprSpec;

    fn unit_grid() -> FrequencyGrid {
        FrequencyGrid::new(1.0, 3.0, 3).unwrap()
    }

    fn flat_epr(grid: &FrequencyGrid, pump: f64) -> TwoChannelAmplitude {
        TwoChannelAmplitude::epr(grid.clone(), &EprSpec::new(grid, pump).unwrap()).unwrap()
    }

    #[test]
    fn reduction_vector_support_and_phases() {
        let g = unit_grid();
        let m4 = g.sum_grid().index_of(4.0).unwrap();
        let k0 = g.time_grid().index_of(0.0).unwrap();
        let r = ReductionVector::new(&g, PovmOutcome { time_index: k0, sum_index: m4 });
        let entries = r.entries();
        assert_eq!(entries.len(), 3);
        for &(i, j, phase) in entries {
            assert_eq!(i + j, m4);
            assert!((phase - Complex64::ONE).norm() < 1e-15);
        }

        // at t != 0 the phases are e^{iω₋t} with ω₋ = -1, 0, +1
        let k = 2usize; // some nonzero time node
        let t = g.time_grid().node(k);
        assert!(t != 0.0);
        let r = ReductionVector::new(&g, PovmOutcome { time_index: k, sum_index: m4 });
        let expect = [
            Complex64::cis(-t),
            Complex64::ONE,
            Complex64::cis(t),
        ];
        for (&(_, _, phase), want) in r.entries().iter().zip(expect) {
            assert!((phase - want).norm() < 1e-14);
        }
    }

    #[test]
    fn reduction_vector_boundary_sum() {
        let g = unit_grid();
        let m2 = g.sum_grid().index_of(2.0).unwrap();
        let r = ReductionVector::new(&g, PovmOutcome { time_index: 0, sum_index: m2 });
        assert_eq!(r.entries().len(), 1);
        assert_eq!((r.entries()[0].0, r.entries()[0].1), (0, 0));
    }

    #[test]
    fn povm_elements_are_rank_one_psd() {
        let g = FrequencyGrid::new(0.0, 3.0, 4).unwrap();
        for k in 0..4 {
            for m in [0usize, 3, 6] {
                let r = ReductionVector::new(&g, PovmOutcome { time_index: k, sum_index: m });
                let mat = r.povm_matrix(&g);
                let se = SymmetricEigen::new(mat);
                let mut ev: Vec<f64> = se.eigenvalues.iter().copied().collect();
                ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
                assert!(ev[0] > 0.0);
                assert!(ev[1].abs() <= 1e-10 * ev[0]);
                assert!(ev.last().unwrap() > &(-1e-12));
            }
        }
    }

    #[test]
    fn completeness_tiny_grid() {
        let g = FrequencyGrid::new(0.0, 1.0, 2).unwrap();
        assert!(completeness_defect(&g) <= 1e-10);
    }

    #[test]
    fn truncated_time_grid_breaks_completeness() {
        let g = FrequencyGrid::new(0.0, 5.0, 6).unwrap();
        let full = completeness_defect(&g);
        let truncated = completeness_defect_over_times(&g, 3);
        assert!(full <= 1e-10);
        assert!(truncated > full + 0.1);
    }

    #[test]
    fn distribution_time_uniform_and_input_independent() {
        let g = FrequencyGrid::new(0.0, 10.0, 16).unwrap();
        let epr = flat_epr(&g, 10.0);
        let f1 = SinglePhotonAmplitude::gaussian(g.clone(), 5.0, 0.8).unwrap();
        let a = SinglePhotonAmplitude::gaussian(g.clone(), 4.0, 0.5).unwrap();
        let b = SinglePhotonAmplitude::gaussian(g.clone(), 6.0, 0.5).unwrap();
        let f2 = SinglePhotonAmplitude::superpose(
            &a,
            &b,
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        )
        .unwrap();
        let d1 = OutcomeDistribution::compute(&epr, &f1).unwrap();
        let d2 = OutcomeDistribution::compute(&epr, &f2).unwrap();
        let m = g.sum_grid().index_of(10.0).unwrap();
        let w0 = d1.normalized(0, m);
        assert!(w0 > 0.0);
        for k in 0..d1.n_time() {
            assert!((d1.normalized(k, m) - w0).abs() <= 1e-12 * w0);
            assert!((d2.normalized(k, m) - d1.normalized(k, m)).abs() <= 1e-12 * w0);
        }
    }

    #[test]
    fn distribution_support_for_monochromatic_packet() {
        let g = unit_grid();
        let epr = flat_epr(&g, 4.0);
        let packet = SinglePhotonAmplitude::monochromatic(g.clone(), 2.0).unwrap();
        let dist = OutcomeDistribution::compute(&epr, &packet).unwrap();
        let sg = g.sum_grid();
        for m in 0..dist.n_sum() {
            let w: f64 = (0..dist.n_time()).map(|k| dist.weight(k, m)).sum();
            let reachable = (3.0..=5.0).contains(&sg.node(m));
            assert_eq!(w > 0.0, reachable, "sum node {}", sg.node(m));
        }
    }

    #[test]
    fn distribution_zero_total() {
        let g = unit_grid();
        let epr = flat_epr(&g, 4.0);
        let zero = SinglePhotonAmplitude::from_weighted_samples(
            g.clone(),
            vec![Complex64::ZERO; 3],
        )
        .unwrap();
        assert!(matches!(
            OutcomeDistribution::compute(&epr, &zero),
            Err(PovmError::ZeroTotal)
        ));
    }

    #[test]
    fn ideal_outcome_reproduces_input() {
        let g = FrequencyGrid::new(0.0, 10.0, 16).unwrap();
        let epr = flat_epr(&g, 10.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 5.0, 0.8).unwrap();
        let outcome = PovmOutcome::from_values(&g, 0.0, 10.0).unwrap();
        let rho = condition_on_outcome(&epr, &packet, outcome).unwrap();
        let reference = DensityMatrix::from_amplitude(&packet, 0.0);
        assert!(rho.normalized().unwrap().fidelity(&reference).unwrap() >= 1.0 - 1e-10);
    }

    #[test]
    fn nonzero_time_corrected_by_classical_message() {
        let g = FrequencyGrid::new(0.0, 10.0, 16).unwrap();
        let epr = flat_epr(&g, 10.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 5.0, 0.8).unwrap();
        let reference = DensityMatrix::from_amplitude(&packet, 0.0);
        let tg = g.time_grid();
        let m = g.sum_grid().index_of(10.0).unwrap();
        for k in [0usize, 3, 12, 15] {
            let outcome = PovmOutcome { time_index: k, sum_index: m };
            let rho = condition_on_outcome(&epr, &packet, outcome).unwrap();
            let ev_ref = reference.eigenvalues();
            let ev = rho.normalized().unwrap().eigenvalues();
            for (a, b) in ev.iter().zip(ev_ref.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
            let msg = ClassicalMessage::Fired { t: tg.node(k), omega_plus: 10.0 };
            let corrected = phase_correct(&rho, &msg).unwrap();
            let f_after = corrected.fidelity(&reference).unwrap();
            assert!(f_after >= 1.0 - 1e-10, "t index {k}: {f_after}");
            if tg.node(k) != 0.0 {
                let f_before = rho.fidelity(&reference).unwrap();
                assert!(f_before < 1.0 - 1e-3, "phases should hurt at t={}", tg.node(k));
            }
        }
    }

    #[test]
    fn detuned_outcome_follows_autocorrelation_law() {
        let g = FrequencyGrid::new(0.0, 12.0, 49).unwrap();
        let epr = flat_epr(&g, 12.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 6.0, 1.0).unwrap();
        let reference = DensityMatrix::from_amplitude(&packet, 0.0);
        for delta in [0.5, 1.0, 2.0] {
            let outcome = PovmOutcome::from_values(&g, 0.0, 12.0 - delta).unwrap();
            let rho = condition_on_outcome(&epr, &packet, outcome).unwrap();
            let f = rho.normalized().unwrap().fidelity(&reference).unwrap();
            let law = (-delta * delta / 4.0).exp();
            assert!(
                (f - law).abs() <= 0.02 * law,
                "delta {delta}: fidelity {f} vs law {law}"
            );
        }
    }

    #[test]
    fn zero_weight_outcome_errors() {
        let g = unit_grid();
        let epr = flat_epr(&g, 4.0);
        let packet = SinglePhotonAmplitude::monochromatic(g.clone(), 2.0).unwrap();
        // sum node 2 pairs only (ω1, ω3) = (1, 1); the packet has no ω3 = 1
        let outcome = PovmOutcome::from_values(&g, 0.0, 2.0).unwrap();
        assert!(matches!(
            condition_on_outcome(&epr, &packet, outcome),
            Err(PovmError::ZeroWeightOutcome { .. })
        ));
    }

    #[test]
    fn phase_correct_identity_at_zero_time() {
        let g = FrequencyGrid::new(0.0, 10.0, 8).unwrap();
        let epr = flat_epr(&g, 10.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 5.0, 1.0).unwrap();
        let outcome = PovmOutcome::from_values(&g, 0.0, 10.0).unwrap();
        let rho = condition_on_outcome(&epr, &packet, outcome).unwrap();
        let msg = ClassicalMessage::Fired { t: 0.0, omega_plus: 10.0 };
        let same = phase_correct(&rho, &msg).unwrap();
        let dev = (rho.matrix() - same.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-15);
    }

    #[test]
    fn phase_correct_preserves_spectrum_and_requires_firing() {
        let g = FrequencyGrid::new(0.0, 10.0, 8).unwrap();
        let epr = flat_epr(&g, 10.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 5.0, 1.0).unwrap();
        let outcome = PovmOutcome { time_index: 6, sum_index: 10 };
        let rho = condition_on_outcome(&epr, &packet, outcome).unwrap();
        let msg = ClassicalMessage::Fired {
            t: outcome.t(&g),
            omega_plus: outcome.omega_plus(&g),
        };
        let corrected = phase_correct(&rho, &msg).unwrap();
        for (a, b) in rho.eigenvalues().iter().zip(corrected.eigenvalues().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            phase_correct(&rho, &ClassicalMessage::NotFired),
            Err(PovmError::NotFired)
        ));
    }

    #[test]
    fn teleport_once_ideal_and_deterministic() {
        let g = FrequencyGrid::new(0.0, 10.0, 12).unwrap();
        let spec = EprSpec::new(&g, 10.0).unwrap();
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 5.0, 0.8).unwrap();

        let run = teleport_once(
            &g,
            &spec,
            &packet,
            OutcomePolicy::Fixed { t: 0.0, omega_plus: 10.0 },
        )
        .unwrap();
        assert!(run.record.fidelity_after >= 1.0 - 1e-10);
        assert_eq!(run.record.seed, None);

        let s1 = teleport_once(&g, &spec, &packet, OutcomePolicy::Sample { seed: 7 }).unwrap();
        let s2 = teleport_once(&g, &spec, &packet, OutcomePolicy::Sample { seed: 7 }).unwrap();
        assert_eq!(s1.record, s2.record);
        assert_eq!(s1.record.seed, Some(7));
    }

    #[test]
    fn teleport_once_zero_weight_outcome() {
        let g = unit_grid();
        let spec = EprSpec::new(&g, 4.0).unwrap();
        let packet = SinglePhotonAmplitude::monochromatic(g.clone(), 2.0).unwrap();
        assert!(matches!(
            teleport_once(&g, &spec, &packet, OutcomePolicy::Fixed { t: 0.0, omega_plus: 2.0 }),
            Err(PovmError::ZeroWeightOutcome { .. })
        ));
    }

    #[test]
    fn conditioning_consistency_sums_to_reduced_state() {
        // law of total probability at the operator level
        let g = FrequencyGrid::new(0.0, 7.0, 8).unwrap();
        let epr = flat_epr(&g, 7.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 3.5, 0.8).unwrap();
        let n = g.n_points();
        let mut sum = DMatrix::from_element(n, n, Complex64::ZERO);
        for k in 0..g.time_grid().n_points() {
            for m in 0..g.sum_grid().n_points() {
                let outcome = PovmOutcome { time_index: k, sum_index: m };
                if let Ok(rho) = condition_on_outcome(&epr, &packet, outcome) {
                    sum += rho.matrix();
                }
            }
        }
        let reduced = epr.partial_trace(crate::states::Channel::Second);
        let expect = reduced.matrix().map(|z| z * packet.norm_sqr());
        let dev = (&sum - &expect).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9, "max deviation {dev}");
    }

    #[test]
    fn total_weight_matches_completeness() {
        let g = FrequencyGrid::new(0.0, 5.0, 6).unwrap();
        let epr = flat_epr(&g, 5.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 2.5, 0.6).unwrap();
        let dist = OutcomeDistribution::compute(&epr, &packet).unwrap();
        let expect = epr.norm_sqr() * packet.norm_sqr();
        assert!((dist.total() - expect).abs() <= 1e-8 * expect);
        let normalized_sum: f64 = (0..dist.n_time())
            .flat_map(|k| (0..dist.n_sum()).map(move |m| (k, m)))
            .map(|(k, m)| dist.normalized(k, m))
            .sum();
        assert!((normalized_sum - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn distribution_weight_equals_conditioned_trace() {
        let g = FrequencyGrid::new(0.0, 5.0, 6).unwrap();
        let epr = flat_epr(&g, 5.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 2.5, 0.6).unwrap();
        let dist = OutcomeDistribution::compute(&epr, &packet).unwrap();
        for k in [0usize, 2, 5] {
            for m in [1usize, 5, 8] {
                let outcome = PovmOutcome { time_index: k, sum_index: m };
                match condition_on_outcome(&epr, &packet, outcome) {
                    Ok(rho) => assert!((rho.trace() - dist.weight(k, m)).abs() < 1e-14),
                    Err(_) => assert_eq!(dist.weight(k, m), 0.0),
                }
            }
        }
    }
}
