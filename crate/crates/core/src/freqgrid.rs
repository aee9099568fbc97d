//! Uniform discretization of the frequency axis, together with its DFT-dual
//! time grid and the grid of pairwise frequency sums.
//!
//! Everything downstream computes on these finite-dimensional spaces. The one
//! measure convention used throughout the crate lives here: a continuum
//! amplitude `f(ω)` is stored node-wise as `F_i = f(ω_i)·√Δω`, so that
//! `Σ|F_i|²` discretizes `∫|f|²dω` and the continuum `δ(ω−ω′)` becomes
//! `δ_ij/Δω`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("omega_min must be non-negative, got {0}")]
    NegativeOmegaMin(String),
    #[error("omega_max must exceed omega_min (got omega_min {0}, omega_max {1})")]
    EmptySpan(String, String),
    #[error("grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
}

pub type GridResult<T> = Result<T, GridError>;

/// Relative tolerance for matching a raw frequency or time to a grid node.
pub const NODE_MATCH_TOL: f64 = 1e-9;

/// Uniform frequency grid on `[omega_min, omega_max]` with `n_points` nodes.
///
/// Nodes are `ω_i = omega_min + i·Δω`, `Δω = (omega_max − omega_min)/(n − 1)`.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrequencyGrid {
    omega_min: f64,
    omega_max: f64,
    n_points: usize,
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, n_points: usize) -> GridResult<Self> {
        if !omega_min.is_finite() || omega_min < 0.0 {
            return Err(GridError::NegativeOmegaMin(format!("{omega_min}")));
        }
        if !omega_max.is_finite() || omega_max <= omega_min {
            return Err(GridError::EmptySpan(
                format!("{omega_min}"),
                format!("{omega_max}"),
            ));
        }
        if n_points < 2 {
            return Err(GridError::TooFewPoints(n_points));
        }
        Ok(Self { omega_min, omega_max, n_points })
    }

    pub fn omega_min(&self) -> f64 { self.omega_min }

    pub fn omega_max(&self) -> f64 { self.omega_max }

    pub fn n_points(&self) -> usize { self.n_points }

    pub fn delta_omega(&self) -> f64 {
        (self.omega_max - self.omega_min) / (self.n_points as f64 - 1.0)
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_points);
        self.omega_min + i as f64 * self.delta_omega()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.node(i))
    }

    /// Index of the node coinciding with `omega`, within `NODE_MATCH_TOL·Δω`.
    pub fn index_of(&self, omega: f64) -> Option<usize> {
        let d = self.delta_omega();
        let x = (omega - self.omega_min) / d;
        let i = x.round();
        if i < 0.0 || i as usize >= self.n_points {
            return None;
        }
        ((x - i).abs() <= NODE_MATCH_TOL).then_some(i as usize)
    }

    /// DFT-dual time grid: `Δt·Δω·n = 2π` exactly.
    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid {
            n_points: self.n_points,
            delta_t: std::f64::consts::TAU / (self.n_points as f64 * self.delta_omega()),
        }
    }

    pub fn sum_grid(&self) -> SumFrequencyGrid {
        SumFrequencyGrid {
            min: 2.0 * self.omega_min,
            delta: self.delta_omega(),
            n_points: 2 * self.n_points - 1,
        }
    }

    /// Maps a node pair to its sum node and half-difference
    /// `ω₋ = (ω_i − ω_j)/2`.
    pub fn pair_to_sum_diff(&self, i: usize, j: usize) -> (usize, f64) {
        debug_assert!(i < self.n_points && j < self.n_points);
        (i + j, 0.5 * (self.node(i) - self.node(j)))
    }

    /// Inverse of [`pair_to_sum_diff`](Self::pair_to_sum_diff).
    pub fn sum_diff_to_pair(&self, sum_index: usize, omega_minus: f64) -> (usize, usize) {
        let q = (2.0 * omega_minus / self.delta_omega()).round() as i64;
        let i = (sum_index as i64 + q) / 2;
        let j = (sum_index as i64 - q) / 2;
        debug_assert!(i >= 0 && j >= 0);
        (i as usize, j as usize)
    }

    /// Node pairs `(i, j)` with `ω_i + ω_j` equal to the given sum node,
    /// ordered by increasing `i`.
    pub fn pairs_with_sum(&self, sum_index: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_points;
        let m = sum_index;
        let lo = m.saturating_sub(n - 1);
        let hi = m.min(n - 1);
        (lo..=hi).map(move |i| (i, m - i))
    }

    /// Discrete weight of one `(t, Ω₊)` outcome cell, `Δt·ΔΩ₊/(2π)`.
    ///
    /// This is the lattice form of the measure in the identity resolution;
    /// with the DFT-dual time grid the weighted outcome sum reconstructs the
    /// identity exactly.
    pub fn outcome_measure(&self) -> f64 {
        self.time_grid().delta_t() * self.delta_omega() / std::f64::consts::TAU
    }
}

/// DFT-dual time grid: `n` nodes `t_k = (k − ⌊n/2⌋)·Δt` with
/// `Δt = 2π/(n·Δω)`, symmetric about zero up to one node.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    n_points: usize,
    delta_t: f64,
}

impl TimeGrid {
    pub fn n_points(&self) -> usize { self.n_points }

    pub fn delta_t(&self) -> f64 { self.delta_t }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k < self.n_points);
        (k as f64 - (self.n_points / 2) as f64) * self.delta_t
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|k| self.node(k))
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.delta_t + (self.n_points / 2) as f64;
        let k = x.round();
        if k < 0.0 || k as usize >= self.n_points {
            return None;
        }
        ((x - k).abs() <= NODE_MATCH_TOL).then_some(k as usize)
    }
}

/// Grid of achievable pairwise sums `s_m = ω_i + ω_j`: `2n − 1` nodes on
/// `[2·omega_min, 2·omega_max]` with step `Δω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumFrequencyGrid {
    min: f64,
    delta: f64,
    n_points: usize,
}

impl SumFrequencyGrid {
    pub fn n_points(&self) -> usize { self.n_points }

    pub fn delta(&self) -> f64 { self.delta }

    pub fn node(&self, m: usize) -> f64 {
        debug_assert!(m < self.n_points);
        self.min + m as f64 * self.delta
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|m| self.node(m))
    }

    pub fn index_of(&self, s: f64) -> Option<usize> {
        let x = (s - self.min) / self.delta;
        let m = x.round();
        if m < 0.0 || m as usize >= self.n_points {
            return None;
        }
        ((x - m).abs() <= NODE_MATCH_TOL).then_some(m as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn unit_step_grid_nodes() {
        let g = FrequencyGrid::new(0.0, 10.0, 11).unwrap();
        assert_eq!(g.delta_omega(), 1.0);
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, (0..=10).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn dual_time_grid_spacing() {
        let g = FrequencyGrid::new(0.0, 10.0, 11).unwrap();
        let t = g.time_grid();
        assert!((t.delta_t() - std::f64::consts::TAU / 11.0).abs() < 1e-15);
        // DFT-dual pairing within 1e-12 relative
        let prod = t.delta_t() * g.delta_omega() * g.n_points() as f64;
        assert!((prod - std::f64::consts::TAU).abs() / std::f64::consts::TAU < 1e-12);
    }

    #[test]
    fn sum_grid_of_small_grid() {
        let g = FrequencyGrid::new(4.0, 6.0, 3).unwrap();
        let s = g.sum_grid();
        let nodes: Vec<f64> = s.nodes().collect();
        assert_eq!(nodes, vec![8.0, 9.0, 10.0, 11.0, 12.0]);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            FrequencyGrid::new(-1.0, 10.0, 5),
            Err(GridError::NegativeOmegaMin(_))
        ));
        assert!(matches!(
            FrequencyGrid::new(5.0, 5.0, 5),
            Err(GridError::EmptySpan(..))
        ));
        assert!(matches!(
            FrequencyGrid::new(0.0, 10.0, 1),
            Err(GridError::TooFewPoints(1))
        ));
    }

    #[test]
    fn pair_to_sum_diff_examples() {
        let g = FrequencyGrid::new(4.0, 6.0, 3).unwrap();
        let s = g.sum_grid();
        let (m, wm) = g.pair_to_sum_diff(0, 2);
        assert_eq!(s.node(m), 10.0);
        assert_eq!(wm, -1.0);
        let (m, wm) = g.pair_to_sum_diff(1, 1);
        assert_eq!(s.node(m), 10.0);
        assert_eq!(wm, 0.0);
        let (m, wm) = g.pair_to_sum_diff(2, 2);
        assert_eq!(s.node(m), 12.0);
        assert_eq!(wm, 0.0);
    }

    #[test]
    fn time_nodes_symmetric_about_zero() {
        for n in [4usize, 5, 8, 9] {
            let g = FrequencyGrid::new(0.0, 3.0, n).unwrap();
            let t = g.time_grid();
            let nodes: Vec<f64> = t.nodes().collect();
            for &x in &nodes {
                // mirror lies on the grid, except possibly the most negative
                // node of an even-count grid
                if x > 0.0 {
                    assert!(nodes.iter().any(|&y| (y + x).abs() < 1e-12));
                }
            }
            assert!(nodes.iter().any(|&x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn node_lookup() {
        let g = FrequencyGrid::new(0.0, 10.0, 11).unwrap();
        assert_eq!(g.index_of(5.0), Some(5));
        assert_eq!(g.index_of(5.5), None);
        assert_eq!(g.index_of(-1.0), None);
        assert_eq!(g.index_of(11.0), None);
        let t = g.time_grid();
        assert_eq!(t.index_of(t.node(3)), Some(3));
        assert_eq!(t.index_of(t.node(3) + 0.4 * t.delta_t()), None);
        let s = g.sum_grid();
        assert_eq!(s.index_of(10.0), Some(10));
        assert_eq!(s.index_of(10.25), None);
    }

    #[test]
    fn pairs_with_sum_enumeration() {
        let g = FrequencyGrid::new(1.0, 3.0, 3).unwrap();
        let pairs: Vec<_> = g.pairs_with_sum(2).collect();
        assert_eq!(pairs, vec![(0, 2), (1, 1), (2, 0)]);
        let pairs: Vec<_> = g.pairs_with_sum(0).collect();
        assert_eq!(pairs, vec![(0, 0)]);
        let pairs: Vec<_> = g.pairs_with_sum(4).collect();
        assert_eq!(pairs, vec![(2, 2)]);
    }

    #[test]
    fn dft_orthogonality_on_dual_grid() {
        let g = FrequencyGrid::new(0.0, 7.0, 8).unwrap();
        let t = g.time_grid();
        let n = g.n_points();
        for a in 0..n {
            for b in 0..n {
                let sum: Complex64 = t
                    .nodes()
                    .map(|tk| Complex64::cis((g.node(a) - g.node(b)) * tk))
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (sum / n as f64 - expect).norm() < 1e-10,
                    "orthogonality failed at ({a},{b})"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_pair_sum_diff(
            omega_min in 0.0f64..5.0,
            span in 0.5f64..20.0,
            n in 2usize..20,
            seed in 0usize..400,
        ) {
            let g = FrequencyGrid::new(omega_min, omega_min + span, n).unwrap();
            let i = seed % n;
            let j = (seed / n) % n;
            let (m, wm) = g.pair_to_sum_diff(i, j);
            prop_assert_eq!(g.sum_diff_to_pair(m, wm), (i, j));
        }

        #[test]
        fn nodes_never_negative(
            omega_min in 0.0f64..5.0,
            span in 0.5f64..20.0,
            n in 2usize..30,
        ) {
            let g = FrequencyGrid::new(omega_min, omega_min + span, n).unwrap();
            prop_assert!(g.nodes().all(|w| w >= 0.0));
            prop_assert!(g.sum_grid().nodes().all(|s| s >= 0.0));
        }

        #[test]
        fn sum_nodes_cover_all_pairs(
            n in 2usize..12,
            span in 0.5f64..10.0,
        ) {
            let g = FrequencyGrid::new(0.25, 0.25 + span, n).unwrap();
            let s = g.sum_grid();
            for i in 0..n {
                for j in 0..n {
                    let (m, _) = g.pair_to_sum_diff(i, j);
                    prop_assert!((s.node(m) - (g.node(i) + g.node(j))).abs() < 1e-9);
                }
            }
            for m in 0..s.n_points() {
                prop_assert!(g.pairs_with_sum(m).next().is_some());
            }
        }
    }
}
