//! Brute-force reference implementations: dense three-channel state tensors
//! and fully materialized measurement matrices, with no structural
//! shortcuts. These exist to validate the optimized measurement and scheme
//! paths on small grids; agreement is evidence precisely because nothing
//! here reuses those paths — only the grid bookkeeping and plain complex
//! arithmetic are shared.
//!
//! Everything is deliberately simple and cost-guarded rather than fast.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::freqgrid::FrequencyGrid;
use crate::povm::PovmOutcome;
use crate::states::{DensityMatrix, SinglePhotonAmplitude, StateError, TwoChannelAmplitude};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid has {n} nodes; the dense reference is guarded at {max}")]
    GridTooLarge { n: usize, max: usize },
    #[error("outcome has zero weight for this input")]
    ZeroWeightOutcome,
    #[error(transparent)]
    State(#[from] StateError),
}

pub type OracleResult<T> = Result<T, OracleError>;

/// Largest grid for the dense tensor routines (`n³` storage).
pub const MAX_DENSE_N: usize = 12;
/// Largest grid for the dense completeness sum (`n⁴` matrix accumulation).
pub const MAX_COMPLETENESS_N: usize = 8;

/// Full complex tensor over channels 1⊗2⊗3, stored flat with index
/// `(i·n + l)·n + j` for channel-1 node `i`, channel-2 node `l`,
/// channel-3 node `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    n: usize,
    data: Vec<Complex64>,
}

impl DenseState {
    /// `Ψ[i,l,j] = epr[i,l]·packet[j]`, the literal pre-measurement product
    /// state.
    pub fn from_pair_and_packet(
        epr: &TwoChannelAmplitude,
        packet: &SinglePhotonAmplitude,
    ) -> OracleResult<Self> {
        let n = epr.grid().n_points();
        if n > MAX_DENSE_N {
            return Err(OracleError::GridTooLarge { n, max: MAX_DENSE_N });
        }
        let mut data = vec![Complex64::ZERO; n * n * n];
        for i in 0..n {
            for l in 0..n {
                for j in 0..n {
                    data[(i * n + l) * n + j] = epr.amp(i, l) * packet.amp(j);
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize { self.n }

    pub fn get(&self, i: usize, l: usize, j: usize) -> Complex64 {
        self.data[(i * self.n + l) * self.n + j]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn dense_reduction_vector(grid: &FrequencyGrid, outcome: PovmOutcome) -> Vec<Complex64> {
    let n = grid.n_points();
    let t = grid.time_grid().node(outcome.time_index);
    let mut v = vec![Complex64::ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            if i + j == outcome.sum_index {
                let omega_minus = 0.5 * (grid.node(i) - grid.node(j));
                v[i * n + j] = Complex64::cis(omega_minus * t);
            }
        }
    }
    v
}

/// The measurement element for one outcome as a full `n²×n²` matrix on
/// channels 1⊗3, measure weight included.
pub fn dense_povm_matrix(
    grid: &FrequencyGrid,
    outcome: PovmOutcome,
) -> OracleResult<DMatrix<Complex64>> {
    let n = grid.n_points();
    if n > MAX_DENSE_N {
        return Err(OracleError::GridTooLarge { n, max: MAX_DENSE_N });
    }
    let v = dense_reduction_vector(grid, outcome);
    let mu = grid.outcome_measure();
    Ok(DMatrix::from_fn(n * n, n * n, |a, b| v[a] * v[b].conj() * mu))
}

/// Conditioned channel-2 state by explicit three-channel contraction:
/// `ρ̃[l,l'] = Σ Ψ[i,l,j]·M[(i'j'),(ij)]·Ψ*[i',l',j']`. Returns the
/// unnormalized matrix (trace = outcome weight) and the weight.
pub fn dense_condition(
    grid: &FrequencyGrid,
    epr: &TwoChannelAmplitude,
    packet: &SinglePhotonAmplitude,
    outcome: PovmOutcome,
) -> OracleResult<(DensityMatrix, f64)> {
    let n = grid.n_points();
    if n > MAX_DENSE_N {
        return Err(OracleError::GridTooLarge { n, max: MAX_DENSE_N });
    }
    let psi = DenseState::from_pair_and_packet(epr, packet)?;
    let m = dense_povm_matrix(grid, outcome)?;

    // w(l) = M · Ψ(l), with Ψ(l) the channel-2 slice over the (i,j) basis
    let mut slices = vec![vec![Complex64::ZERO; n * n]; n];
    for (l, slice) in slices.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                slice[i * n + j] = psi.get(i, l, j);
            }
        }
    }
    let applied: Vec<Vec<Complex64>> = slices
        .iter()
        .map(|slice| {
            (0..n * n)
                .map(|q| (0..n * n).map(|p| m[(q, p)] * slice[p]).sum())
                .collect()
        })
        .collect();
    let mat = DMatrix::from_fn(n, n, |l, lp| {
        (0..n * n)
            .map(|q| slices[lp][q].conj() * applied[l][q])
            .sum::<Complex64>()
    });
    let weight: f64 = mat.diagonal().iter().map(|z| z.re).sum();
    if weight <= 0.0 || weight.is_nan() {
        return Err(OracleError::ZeroWeightOutcome);
    }
    let rho = DensityMatrix::from_matrix(grid.clone(), mat)?;
    Ok((rho, weight))
}

/// Reduced channel-2 state of the literal pre-measurement tensor, by
/// explicit summation over channels 1 and 3.
pub fn dense_reduced_channel2(state: &DenseState, grid: &FrequencyGrid) -> OracleResult<DensityMatrix> {
    let n = state.n();
    let mat = DMatrix::from_fn(n, n, |l, lp| {
        let mut acc = Complex64::ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += state.get(i, l, j) * state.get(i, lp, j).conj();
            }
        }
        acc
    });
    Ok(DensityMatrix::from_matrix(grid.clone(), mat)?)
}

/// Operator-norm defect of the explicitly summed measurement over the full
/// outcome lattice. The number the fast block-structured defect must
/// reproduce.
pub fn dense_completeness(grid: &FrequencyGrid) -> OracleResult<f64> {
    dense_completeness_over_times(grid, grid.time_grid().n_points())
}

/// Dense defect with only the first `n_time` time nodes kept.
pub fn dense_completeness_over_times(grid: &FrequencyGrid, n_time: usize) -> OracleResult<f64> {
    let n = grid.n_points();
    if n > MAX_COMPLETENESS_N {
        return Err(OracleError::GridTooLarge { n, max: MAX_COMPLETENESS_N });
    }
    let n_time = n_time.min(grid.time_grid().n_points());
    let mut sum = DMatrix::from_element(n * n, n * n, Complex64::ZERO);
    for k in 0..n_time {
        for m in 0..grid.sum_grid().n_points() {
            let matrix = dense_povm_matrix(grid, PovmOutcome { time_index: k, sum_index: m })?;
            sum += matrix;
        }
    }
    for d in 0..n * n {
        sum[(d, d)] -= Complex64::ONE;
    }
    let se = SymmetricEigen::new(sum);
    Ok(se.eigenvalues.iter().fold(0.0f64, |acc, ev| acc.max(ev.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm;
    use crate::states::EprSpec;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn flat_epr(grid: &FrequencyGrid, pump: f64) -> TwoChannelAmplitude {
        TwoChannelAmplitude::epr(grid.clone(), &EprSpec::new(grid, pump).unwrap()).unwrap()
    }

    #[test]
    fn dense_povm_rank_one_psd_hermitian() {
        let g = FrequencyGrid::new(0.0, 1.0, 2).unwrap();
        let m = dense_povm_matrix(&g, PovmOutcome { time_index: 1, sum_index: 1 }).unwrap();
        let herm_dev = (0..4)
            .flat_map(|a| (0..4).map(move |b| (a, b)))
            .map(|(a, b)| (m[(a, b)] - m[(b, a)].conj()).norm())
            .fold(0.0f64, f64::max);
        assert!(herm_dev < 1e-14);
        let se = SymmetricEigen::new(m);
        let mut ev: Vec<f64> = se.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(ev[0] >= 0.0);
        assert!(ev[1].abs() <= 1e-12 * ev[0].max(1e-300));
        assert!(*ev.last().unwrap() >= -1e-12);
    }

    #[test]
    fn dense_povm_agrees_with_fast_rank_one_form() {
        let g = FrequencyGrid::new(0.0, 3.0, 4).unwrap();
        for k in 0..4 {
            for m in [0usize, 2, 5, 6] {
                let outcome = PovmOutcome { time_index: k, sum_index: m };
                let dense = dense_povm_matrix(&g, outcome).unwrap();
                let fast = povm::ReductionVector::new(&g, outcome).povm_matrix(&g);
                let dev = (&dense - &fast).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(dev < 1e-12, "outcome ({k},{m}): {dev}");
            }
        }
    }

    #[test]
    fn dense_condition_ideal_case() {
        let g = FrequencyGrid::new(1.0, 3.0, 3).unwrap();
        let epr = flat_epr(&g, 4.0);
        let packet = SinglePhotonAmplitude::from_weighted_samples(
            g.clone(),
            vec![
                Complex64::new(0.5, 0.1),
                Complex64::new(-0.3, 0.45),
                Complex64::new(0.2, -0.6),
            ],
        )
        .unwrap()
        .normalized()
        .unwrap();
        let k0 = g.time_grid().index_of(0.0).unwrap();
        let m = g.sum_grid().index_of(4.0).unwrap();
        let (rho, weight) =
            dense_condition(&g, &epr, &packet, PovmOutcome { time_index: k0, sum_index: m })
                .unwrap();
        assert!(weight > 0.0);
        let reference = DensityMatrix::from_amplitude(&packet, 0.0);
        let normalized = rho.normalized().unwrap();
        let dev = (normalized.matrix() - reference.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12);
    }

    #[test]
    fn dense_condition_matches_fast_path_randomized() {
        let g = FrequencyGrid::new(0.0, 5.0, 6).unwrap();
        let epr = flat_epr(&g, 5.0);
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let mut done = 0;
        while done < 12 {
            let amps: Vec<Complex64> = (0..6)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let packet = SinglePhotonAmplitude::from_weighted_samples(g.clone(), amps)
                .unwrap()
                .normalized()
                .unwrap();
            let outcome = PovmOutcome {
                time_index: rng.random_range(0..g.time_grid().n_points()),
                sum_index: rng.random_range(0..g.sum_grid().n_points()),
            };
            let fast = match povm::condition_on_outcome(&epr, &packet, outcome) {
                Ok(rho) => rho,
                Err(_) => continue,
            };
            let (dense, weight) = dense_condition(&g, &epr, &packet, outcome).unwrap();
            assert!((weight - fast.trace()).abs() <= 1e-10);
            let dev = (dense.matrix() - fast.matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(dev <= 1e-10, "outcome {outcome:?}: {dev}");
            done += 1;
        }
    }

    #[test]
    fn dense_law_of_total_probability() {
        let g = FrequencyGrid::new(0.0, 5.0, 6).unwrap();
        let epr = flat_epr(&g, 5.0);
        let packet = SinglePhotonAmplitude::gaussian(g.clone(), 2.5, 0.6).unwrap();
        let state = DenseState::from_pair_and_packet(&epr, &packet).unwrap();
        let n = g.n_points();
        let mut sum = DMatrix::from_element(n, n, Complex64::ZERO);
        for k in 0..g.time_grid().n_points() {
            for m in 0..g.sum_grid().n_points() {
                if let Ok((rho, _)) =
                    dense_condition(&g, &epr, &packet, PovmOutcome { time_index: k, sum_index: m })
                {
                    sum += rho.matrix();
                }
            }
        }
        let reduced = dense_reduced_channel2(&state, &g).unwrap();
        let dev = (&sum - reduced.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-10, "max deviation {dev}");
    }

    #[test]
    fn dense_completeness_small_grids() {
        let g2 = FrequencyGrid::new(0.0, 1.0, 2).unwrap();
        assert!(dense_completeness(&g2).unwrap() <= 1e-10);

        let g4 = FrequencyGrid::new(0.0, 3.0, 4).unwrap();
        let dense = dense_completeness(&g4).unwrap();
        let fast = povm::completeness_defect(&g4);
        assert!((dense - fast).abs() <= 1e-10);

        let halved = dense_completeness_over_times(&g4, 2).unwrap();
        assert!(halved > dense + 0.1);
    }

    #[test]
    fn cost_guards() {
        let big = FrequencyGrid::new(0.0, 10.0, 13).unwrap();
        assert!(matches!(
            dense_povm_matrix(&big, PovmOutcome { time_index: 0, sum_index: 0 }),
            Err(OracleError::GridTooLarge { n: 13, max: MAX_DENSE_N })
        ));
        let g9 = FrequencyGrid::new(0.0, 8.0, 9).unwrap();
        assert!(matches!(
            dense_completeness(&g9),
            Err(OracleError::GridTooLarge { n: 9, max: MAX_COMPLETENESS_N })
        ));
    }
}
