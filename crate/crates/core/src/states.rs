//! Single-photon packets, two-channel amplitudes, and density matrices over a
//! [`FrequencyGrid`], with the constructions the protocol needs: packet
//! shapes, the frequency-anticorrelated pair, free time evolution, partial
//! trace, and fidelity.
//!
//! Density matrices are allowed to carry an arbitrary positive trace;
//! normalization is deferred to comparison points.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freqgrid::FrequencyGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("packet width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("frequency {0} does not coincide with a grid node")]
    OffGridFrequency(f64),
    #[error("no grid node pair is compatible with pump frequency {0}")]
    EmptyEpr(f64),
    #[error("envelope weights must be non-negative")]
    NegativeEnvelope,
    #[error("expected {expected} entries for this grid, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("amplitude has zero norm")]
    ZeroAmplitude,
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("matrix is not Hermitian (max entry deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NonPositiveInput(f64),
    #[error("trace must be real and positive, got {0:.3e}")]
    NonPositiveTrace(f64),
    #[error("matrix is not square over the grid ({rows}x{cols} vs {n} nodes)")]
    ShapeMismatch { rows: usize, cols: usize, n: usize },
}

pub type StateResult<T> = Result<T, StateError>;

/// Entrywise Hermiticity tolerance for density matrices.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue, relative to the trace.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Relative amplitude below which a node does not count as packet support.
pub const SUPPORT_TOL: f64 = 1e-8;
/// Relative edge amplitude above which a packet is flagged as truncated by
/// the grid. A Gaussian whose ±6σ interval just fits has edge amplitude
/// `e^{−9} ≈ 1.2e−4`, safely below this.
pub const EDGE_TRUNCATION_TOL: f64 = 1e-3;

fn inner(a: &DVector<Complex64>, b: &DVector<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// A sampled packet amplitude: node `i` holds the measure-weighted value
/// `F_i = f(ω_i)·√Δω`, so `Σ|F_i|²` discretizes `∫|f|²dω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePhotonAmplitude {
    grid: FrequencyGrid,
    amps: DVector<Complex64>,
}

impl SinglePhotonAmplitude {
    /// Wraps already measure-weighted samples. No normalization is applied.
    pub fn from_weighted_samples(grid: FrequencyGrid, amps: Vec<Complex64>) -> StateResult<Self> {
        if amps.len() != grid.n_points() {
            return Err(StateError::LengthMismatch {
                expected: grid.n_points(),
                got: amps.len(),
            });
        }
        Ok(Self { grid, amps: DVector::from_vec(amps) })
    }

    /// Normalized Gaussian packet `F_i ∝ exp(−(ω_i−ω₀)²/(4σ²))·√Δω`.
    ///
    /// `width` is the standard deviation of `|f|²`. Callers should keep the
    /// ±6σ support inside the grid; [`support_inside_grid`](Self::support_inside_grid)
    /// reports whether the sampled amplitude actually decayed at the edges.
    pub fn gaussian(grid: FrequencyGrid, center: f64, width: f64) -> StateResult<Self> {
        if width <= 0.0 || width.is_nan() {
            return Err(StateError::NonPositiveWidth(width));
        }
        let sqrt_dw = grid.delta_omega().sqrt();
        let amps: Vec<Complex64> = grid
            .nodes()
            .map(|w| {
                let x = (w - center) / width;
                Complex64::new((-x * x / 4.0).exp() * sqrt_dw, 0.0)
            })
            .collect();
        Self::from_weighted_samples(grid, amps)?.normalized()
    }

    /// Normalized Lorentzian packet, `|f(ω)|² ∝ 1/((ω−ω₀)² + γ²)` with
    /// half-width `γ = width`.
    pub fn lorentzian(grid: FrequencyGrid, center: f64, width: f64) -> StateResult<Self> {
        if width <= 0.0 || width.is_nan() {
            return Err(StateError::NonPositiveWidth(width));
        }
        let sqrt_dw = grid.delta_omega().sqrt();
        let amps: Vec<Complex64> = grid
            .nodes()
            .map(|w| sqrt_dw / Complex64::new(w - center, width))
            .collect();
        Self::from_weighted_samples(grid, amps)?.normalized()
    }

    /// Basis vector at the grid node coinciding with `omega`; the discrete
    /// stand-in for an ideally filtered monochromatic state.
    pub fn monochromatic(grid: FrequencyGrid, omega: f64) -> StateResult<Self> {
        let i = grid
            .index_of(omega)
            .ok_or(StateError::OffGridFrequency(omega))?;
        let mut amps = vec![Complex64::ZERO; grid.n_points()];
        amps[i] = Complex64::ONE;
        Self::from_weighted_samples(grid, amps)
    }

    /// Normalized `α·a + β·b`.
    pub fn superpose(
        a: &Self,
        b: &Self,
        alpha: Complex64,
        beta: Complex64,
    ) -> StateResult<Self> {
        if a.grid != b.grid {
            return Err(StateError::GridMismatch);
        }
        let amps = a.amps.map(|x| alpha * x) + b.amps.map(|x| beta * x);
        Self { grid: a.grid.clone(), amps }.normalized()
    }

    pub fn grid(&self) -> &FrequencyGrid { &self.grid }

    pub fn amp(&self, i: usize) -> Complex64 { self.amps[i] }

    pub fn amps(&self) -> &DVector<Complex64> { &self.amps }

    pub fn norm_sqr(&self) -> f64 { self.amps.iter().map(|z| z.norm_sqr()).sum() }

    pub fn normalized(mut self) -> StateResult<Self> {
        let n2 = self.norm_sqr();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(StateError::ZeroAmplitude);
        }
        self.amps /= Complex64::new(n2.sqrt(), 0.0);
        Ok(self)
    }

    /// Free evolution `F_i → e^{−iω_i t}·F_i`; norm-preserving.
    pub fn time_evolve(&self, t: f64) -> Self {
        let amps = DVector::from_iterator(
            self.grid.n_points(),
            self.grid
                .nodes()
                .zip(self.amps.iter())
                .map(|(w, &a)| Complex64::cis(-w * t) * a),
        );
        Self { grid: self.grid.clone(), amps }
    }

    /// Mean frequency `Σ ω_i |F_i|²` of a normalized amplitude.
    pub fn mean_frequency(&self) -> f64 {
        self.grid
            .nodes()
            .zip(self.amps.iter())
            .map(|(w, a)| w * a.norm_sqr())
            .sum()
    }

    /// True when both edge nodes carry less than [`EDGE_TRUNCATION_TOL`] of
    /// the peak amplitude, i.e. the packet has decayed before the grid ends.
    pub fn support_inside_grid(&self) -> bool {
        let max = self.amps.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        if max == 0.0 {
            return false;
        }
        let n = self.grid.n_points();
        self.amps[0].norm() <= EDGE_TRUNCATION_TOL * max
            && self.amps[n - 1].norm() <= EDGE_TRUNCATION_TOL * max
    }

}

/// Which channel of a [`TwoChannelAmplitude`] survives a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    First,
    Second,
}

/// Pure two-channel amplitude, indexed `(node of first, node of second)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoChannelAmplitude {
    grid: FrequencyGrid,
    amps: DMatrix<Complex64>,
}

/// Frequency-anticorrelated pair specification: the pump frequency and an
/// optional per-node spectral envelope (flat by default, which reproduces the
/// idealized unnormalizable pair).
#[derive(Debug, Clone, PartialEq)]
pub struct EprSpec {
    pump: f64,
    envelope: Option<Vec<f64>>,
}

impl EprSpec {
    pub fn new(grid: &FrequencyGrid, pump: f64) -> StateResult<Self> {
        if grid.sum_grid().index_of(pump).is_none() {
            return Err(StateError::EmptyEpr(pump));
        }
        Ok(Self { pump, envelope: None })
    }

    pub fn with_envelope(mut self, grid: &FrequencyGrid, envelope: Vec<f64>) -> StateResult<Self> {
        if envelope.len() != grid.n_points() {
            return Err(StateError::LengthMismatch {
                expected: grid.n_points(),
                got: envelope.len(),
            });
        }
        if envelope.iter().any(|&g| g < 0.0 || g.is_nan()) {
            return Err(StateError::NegativeEnvelope);
        }
        self.envelope = Some(envelope);
        Ok(self)
    }

    pub fn pump(&self) -> f64 { self.pump }

    pub fn envelope_at(&self, i: usize) -> f64 {
        self.envelope.as_ref().map_or(1.0, |g| g[i])
    }
}

impl TwoChannelAmplitude {
    /// Product state `a ⊗ b`.
    pub fn product(a: &SinglePhotonAmplitude, b: &SinglePhotonAmplitude) -> StateResult<Self> {
        if a.grid != b.grid {
            return Err(StateError::GridMismatch);
        }
        let n = a.grid.n_points();
        let amps = DMatrix::from_fn(n, n, |i, l| a.amps[i] * b.amps[l]);
        Ok(Self { grid: a.grid.clone(), amps })
    }

    /// The entangled pair: nonzero only on the anti-diagonal
    /// `ω_first + ω_second = Ω`, with amplitude `g(ω_first)`. Intentionally
    /// unnormalized.
    pub fn epr(grid: FrequencyGrid, spec: &EprSpec) -> StateResult<Self> {
        let m = grid
            .sum_grid()
            .index_of(spec.pump())
            .ok_or(StateError::EmptyEpr(spec.pump()))?;
        let n = grid.n_points();
        let mut amps = DMatrix::from_element(n, n, Complex64::ZERO);
        let mut any = false;
        for (i, l) in grid.pairs_with_sum(m) {
            let g = spec.envelope_at(i);
            if g != 0.0 {
                amps[(i, l)] = Complex64::new(g, 0.0);
                any = true;
            }
        }
        if !any {
            return Err(StateError::EmptyEpr(spec.pump()));
        }
        Ok(Self { grid, amps })
    }

    pub fn from_matrix(grid: FrequencyGrid, amps: DMatrix<Complex64>) -> StateResult<Self> {
        let n = grid.n_points();
        if amps.nrows() != n || amps.ncols() != n {
            return Err(StateError::ShapeMismatch {
                rows: amps.nrows(),
                cols: amps.ncols(),
                n,
            });
        }
        Ok(Self { grid, amps })
    }

    pub fn grid(&self) -> &FrequencyGrid { &self.grid }

    pub fn amp(&self, i: usize, l: usize) -> Complex64 { self.amps[(i, l)] }

    pub fn norm_sqr(&self) -> f64 { self.amps.iter().map(|z| z.norm_sqr()).sum() }

    /// Reduced density matrix of the kept channel; trace equals the squared
    /// norm of the amplitude.
    pub fn partial_trace(&self, keep: Channel) -> DensityMatrix {
        let n = self.grid.n_points();
        let mat = match keep {
            Channel::Second => DMatrix::from_fn(n, n, |l, lp| {
                (0..n).map(|i| self.amps[(i, l)] * self.amps[(i, lp)].conj()).sum()
            }),
            Channel::First => DMatrix::from_fn(n, n, |i, ip| {
                (0..n).map(|l| self.amps[(i, l)] * self.amps[(ip, l)].conj()).sum()
            }),
        };
        DensityMatrix { grid: self.grid.clone(), mat, pure: None }
    }
}

/// Hermitian positive-semidefinite operator over one channel's nodes.
/// The trace is any positive number; [`normalized`](Self::normalized) divides
/// it out. Matrices built from a pure amplitude remember it, which keeps
/// fidelity on the cheap rank-1 path.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    grid: FrequencyGrid,
    mat: DMatrix<Complex64>,
    pure: Option<DVector<Complex64>>,
}

impl DensityMatrix {
    /// Outer product of the time-evolved amplitude,
    /// `ρ_ij = e^{−iω_i t}F_i · (e^{−iω_j t}F_j)*`.
    pub fn from_amplitude(psi: &SinglePhotonAmplitude, t: f64) -> Self {
        let evolved = psi.time_evolve(t);
        Self::from_pure_vector(evolved.grid, evolved.amps)
    }

    pub(crate) fn from_pure_vector(grid: FrequencyGrid, v: DVector<Complex64>) -> Self {
        let n = grid.n_points();
        let mat = DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj());
        Self { grid, mat, pure: Some(v) }
    }

    /// Validating constructor for raw matrices (deserialization, reference
    /// computations). Checks shape, Hermiticity, positivity, and trace.
    pub fn from_matrix(grid: FrequencyGrid, mat: DMatrix<Complex64>) -> StateResult<Self> {
        let n = grid.n_points();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(StateError::ShapeMismatch {
                rows: mat.nrows(),
                cols: mat.ncols(),
                n,
            });
        }
        let dm = Self { grid, mat, pure: None };
        dm.validate()?;
        Ok(dm)
    }

    pub fn grid(&self) -> &FrequencyGrid { &self.grid }

    pub fn matrix(&self) -> &DMatrix<Complex64> { &self.mat }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 { self.mat[(i, j)] }

    /// The stored amplitude when this matrix is a known rank-1 outer product.
    pub fn pure_vector(&self) -> Option<&DVector<Complex64>> { self.pure.as_ref() }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn normalized(&self) -> StateResult<Self> {
        let tr = self.trace();
        if tr <= 0.0 || !tr.is_finite() {
            return Err(StateError::NonPositiveTrace(tr));
        }
        let scale = Complex64::new(1.0 / tr, 0.0);
        Ok(Self {
            grid: self.grid.clone(),
            mat: self.mat.map(|z| z * scale),
            pure: self
                .pure
                .as_ref()
                .map(|v| v.map(|z| z / Complex64::new(tr.sqrt(), 0.0))),
        })
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let se = SymmetricEigen::new(self.mat.clone());
        let mut ev: Vec<f64> = se.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    /// Checks the type invariants: Hermitian within [`HERMITICITY_TOL`],
    /// eigenvalues above `−POSITIVITY_TOL·trace`, positive real trace.
    pub fn validate(&self) -> StateResult<()> {
        let n = self.mat.nrows();
        let mut herm_dev = 0.0f64;
        let mut imag_tr = 0.0f64;
        for i in 0..n {
            imag_tr = imag_tr.max(self.mat[(i, i)].im.abs());
            for j in i..n {
                herm_dev = herm_dev.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        let scale = self.trace().abs().max(1.0);
        if herm_dev > HERMITICITY_TOL * scale || imag_tr > HERMITICITY_TOL * scale {
            return Err(StateError::NotHermitian(herm_dev.max(imag_tr)));
        }
        let tr = self.trace();
        if tr <= 0.0 || tr.is_nan() {
            return Err(StateError::NonPositiveTrace(tr));
        }
        let min_ev = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min_ev < -POSITIVITY_TOL * tr {
            return Err(StateError::NonPositiveInput(min_ev));
        }
        Ok(())
    }

    /// Conjugation by the diagonal unitary `U = diag(e^{iθ_i})`:
    /// `ρ → U ρ U†`. Spectrum-preserving.
    pub fn apply_diagonal_phase(&self, theta: impl Fn(usize) -> f64) -> Self {
        let n = self.mat.nrows();
        let mat = DMatrix::from_fn(n, n, |i, j| {
            Complex64::cis(theta(i) - theta(j)) * self.mat[(i, j)]
        });
        let pure = self
            .pure
            .as_ref()
            .map(|v| DVector::from_fn(n, |i, _| Complex64::cis(theta(i)) * v[i]));
        Self { grid: self.grid.clone(), mat, pure }
    }

    /// Uhlmann fidelity `(Tr√(√ρ σ √ρ))²` of the trace-normalized operators.
    /// Collapses to `|⟨ψ|φ⟩|²` when both sides are known rank-1.
    pub fn fidelity(&self, other: &Self) -> StateResult<f64> {
        if self.grid != other.grid {
            return Err(StateError::GridMismatch);
        }
        let (ta, tb) = (self.trace(), other.trace());
        if ta <= 0.0 || ta.is_nan() {
            return Err(StateError::NonPositiveTrace(ta));
        }
        if tb <= 0.0 || tb.is_nan() {
            return Err(StateError::NonPositiveTrace(tb));
        }
        if let (Some(va), Some(vb)) = (&self.pure, &other.pure) {
            return Ok((inner(va, vb).norm_sqr() / (ta * tb)).min(1.0));
        }
        let a = self.mat.map(|z| z / Complex64::new(ta, 0.0));
        let b = other.mat.map(|z| z / Complex64::new(tb, 0.0));
        let sqrt_a = hermitian_sqrt(&a)?;
        let t = &sqrt_a * b * &sqrt_a;
        let se = SymmetricEigen::new(t);
        let top = se.eigenvalues.iter().fold(0.0f64, |acc, ev| acc.max(*ev));
        // eigenvalues below the solver's noise floor are rank-deficiency
        // artifacts; keeping them inflates the root sum by ~√ε
        let cutoff = EIGENVALUE_NOISE_FLOOR * top;
        let mut root_sum = 0.0;
        for &ev in se.eigenvalues.iter() {
            if ev < -1e-8 {
                return Err(StateError::NonPositiveInput(ev));
            }
            if ev > cutoff {
                root_sum += ev.sqrt();
            }
        }
        Ok((root_sum * root_sum).min(1.0))
    }
}

const EIGENVALUE_NOISE_FLOOR: f64 = 1e-13;

fn hermitian_sqrt(mat: &DMatrix<Complex64>) -> StateResult<DMatrix<Complex64>> {
    let se = SymmetricEigen::new(mat.clone());
    let top = se.eigenvalues.iter().fold(0.0f64, |acc, ev| acc.max(*ev));
    let cutoff = EIGENVALUE_NOISE_FLOOR * top;
    for &ev in se.eigenvalues.iter() {
        if ev < -1e-8 {
            return Err(StateError::NonPositiveInput(ev));
        }
    }
    let d = DMatrix::from_diagonal(&se.eigenvalues.map(|ev| {
        Complex64::new(if ev > cutoff { ev.sqrt() } else { 0.0 }, 0.0)
    }));
    Ok(&se.eigenvectors * d * se.eigenvectors.adjoint())
}

// ---- JSON forms: complex entries as [re, im] pairs plus a grid header ----

#[derive(Serialize, Deserialize)]
struct AmplitudeJson {
    grid: FrequencyGrid,
    amps: Vec<[f64; 2]>,
}

impl Serialize for SinglePhotonAmplitude {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        AmplitudeJson {
            grid: self.grid.clone(),
            amps: self.amps.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SinglePhotonAmplitude {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = AmplitudeJson::deserialize(de)?;
        let amps = raw.amps.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        SinglePhotonAmplitude::from_weighted_samples(raw.grid, amps)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct DensityJson {
    grid: FrequencyGrid,
    mat: Vec<Vec<[f64; 2]>>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let n = self.mat.nrows();
        DensityJson {
            grid: self.grid.clone(),
            mat: (0..n)
                .map(|i| (0..n).map(|j| [self.mat[(i, j)].re, self.mat[(i, j)].im]).collect())
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = DensityJson::deserialize(de)?;
        let n = raw.grid.n_points();
        if raw.mat.len() != n || raw.mat.iter().any(|row| row.len() != n) {
            return Err(serde::de::Error::custom("density matrix shape mismatch"));
        }
        let mat = DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(raw.mat[i][j][0], raw.mat[i][j][1])
        });
        DensityMatrix::from_matrix(raw.grid, mat).map_err(serde::de::Error::custom)
    }
}
