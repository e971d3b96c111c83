//! Markov-limit collective decay kernel and the rates derived from it.
//!
//! Integrating the resonant photon shell over all directions turns the pair
//! mode sums into `Γ_jl = γ · sinc(k0 |r_j − r_l|)` (scalar photons, no
//! dipole orientation factor). The collective decay rate of a
//! single-excitation state is the quadratic form `Γ(ψ) = β† Γ β`; the
//! amplitudes obey `β̇ = −½ Γ β`, so populations decay at `Γ(ψ)` and the
//! symmetric Dicke-limit state decays at `Nγ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::ensemble::AtomEnsemble;
use crate::error::{invalid, Error, Result};
use crate::states::{norm_sq, ExcitationState};

/// Largest RK4 step, in units of `1 / (Nγ)`.
pub const MAX_STEP_FRACTION: f64 = 0.01;

/// `sin x / x`, with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Real symmetric N×N rate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayKernel {
    matrix: DMatrix<f64>,
    gamma: f64,
}

impl DecayKernel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Eigenvalues in ascending order with matching unit eigenvectors
    /// (columns).
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.len(), self.len(), |r, c| {
            eig.eigenvectors[(r, order[c])]
        });
        (values, vectors)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `Γ` to a complex vector.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.len();
        (0..n)
            .map(|j| (0..n).map(|l| v[l] * self.matrix[(j, l)]).sum())
            .collect()
    }
}

pub fn build_kernel(ensemble: &AtomEnsemble) -> DecayKernel {
    let pos = ensemble.positions();
    let n = pos.len();
    let k0 = ensemble.k0();
    let gamma = ensemble.gamma();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = gamma;
        for l in 0..j {
            let g = gamma * sinc(k0 * (pos[j] - pos[l]).norm());
            m[(j, l)] = g;
            m[(l, j)] = g;
        }
    }
    DecayKernel { matrix: m, gamma }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `Γ(ψ) = Σ_jl β_j* Γ_jl β_l`, the population decay rate at `t = 0`.
pub fn rate_of(state: &ExcitationState, kernel: &DecayKernel) -> Result<f64> {
    check_dim(kernel.len(), state.len())?;
    Ok(quadratic_form(kernel, state.amplitudes()))
}

fn quadratic_form(kernel: &DecayKernel, b: &[C64]) -> f64 {
    let n = kernel.len();
    let mut acc = 0.0;
    for j in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for l in 0..n {
            row += b[l] * kernel.matrix[(j, l)];
        }
        acc += (b[j].conj() * row).re;
    }
    acc
}

/// `(3/8π) λ²/A`, the forward-cone solid-angle fraction of the large-sample
/// formulas.
fn cone_factor(ensemble: &AtomEnsemble) -> f64 {
    3.0 / (8.0 * PI) * ensemble.lambda_sq_over_area()
}

/// Large-sample estimate `(γ/2)[1 + (3/8π)(λ²/A)(N−1)]` for the timed
/// symmetric state, in the amplitude-rate convention (single atom → γ/2).
pub fn rate_plus_closed_form(ensemble: &AtomEnsemble) -> f64 {
    let n = ensemble.len() as f64;
    0.5 * ensemble.gamma() * (1.0 + cone_factor(ensemble) * (n - 1.0))
}

/// Large-sample estimate for the two-bin subradiant state,
/// `(γ/2)[(1 − (3/8π)λ²/A) + (3/8π)(λ²/A)(N/2 − N/2)]`.
///
/// Can be negative once `λ²/A > 8π/3`; callers that report it clamp at 0.
pub fn rate_minus_closed_form(ensemble: &AtomEnsemble) -> f64 {
    let half = ensemble.len() as f64 / 2.0;
    let c = cone_factor(ensemble);
    0.5 * ensemble.gamma() * ((1.0 - c) + c * (half - half))
}

/// Large-sample estimate for the (1, −2, 1) three-bin state,
/// `(γ/2)[(1 − (3/8π)λ²/A) + (3/8π)(λ²/A)(N/3 − N/3)]`.
pub fn rate_three_bin_closed_form(ensemble: &AtomEnsemble) -> f64 {
    let third = ensemble.len() as f64 / 3.0;
    let c = cone_factor(ensemble);
    0.5 * ensemble.gamma() * ((1.0 - c) + c * (third - third))
}

/// Markov-limit amplitude evolution sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSeries {
    pub times: Vec<f64>,
    pub amplitudes: Vec<Vec<C64>>,
    /// `P(t) = Σ_j |β_j(t)|²`.
    pub survival: Vec<f64>,
}

impl SurvivalSeries {
    /// `|⟨target|β(t)⟩|²` at every sample.
    pub fn projection(&self, target: &ExcitationState) -> Vec<f64> {
        self.amplitudes
            .iter()
            .map(|b| crate::states::inner(target.amplitudes(), b).norm_sqr())
            .collect()
    }

    /// Normalized state at sample `i`, if any population remains.
    pub fn state_at(&self, i: usize) -> Result<ExcitationState> {
        ExcitationState::normalized(self.amplitudes[i].clone(), format!("t={}", self.times[i]))
    }
}

/// Validates a sampling grid: non-empty, starting at 0, strictly increasing.
pub fn check_time_grid(t_grid: &[f64]) -> Result<()> {
    match t_grid.first() {
        None => return Err(invalid("time grid is empty")),
        Some(&t0) if t0 != 0.0 => {
            return Err(invalid(format!("time grid must start at 0, got {t0}")))
        }
        _ => {}
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Integrates `β̇ = −½ Γ β` with classical RK4 from the given state.
///
/// The internal step never exceeds `0.01 / (Nγ)`; each sampling interval is
/// split into equal sub-steps so the samples land exactly on the grid.
pub fn evolve_amplitudes(
    state: &ExcitationState,
    kernel: &DecayKernel,
    t_grid: &[f64],
) -> Result<SurvivalSeries> {
    check_dim(kernel.len(), state.len())?;
    evolve_raw(state.amplitudes().to_vec(), kernel, t_grid)
}

pub(crate) fn evolve_raw(
    initial: Vec<C64>,
    kernel: &DecayKernel,
    t_grid: &[f64],
) -> Result<SurvivalSeries> {
    check_time_grid(t_grid)?;
    let n = kernel.len();
    let h_max = MAX_STEP_FRACTION / (n as f64 * kernel.gamma);

    // β̇ = A β with A = −Γ/2; real matrix, complex vector
    let a = kernel.matrix.map(|x| -0.5 * x);
    let deriv = |b: &DVector<C64>| -> DVector<C64> {
        DVector::from_fn(n, |j, _| {
            let mut acc = C64::new(0.0, 0.0);
            for l in 0..n {
                acc += b[l] * a[(j, l)];
            }
            acc
        })
    };

    let mut beta = DVector::from_vec(initial);
    let mut out = SurvivalSeries {
        times: Vec::with_capacity(t_grid.len()),
        amplitudes: Vec::with_capacity(t_grid.len()),
        survival: Vec::with_capacity(t_grid.len()),
    };
    let mut record = |t: f64, b: &DVector<C64>| {
        let v: Vec<C64> = b.iter().copied().collect();
        out.survival.push(norm_sq(&v));
        out.amplitudes.push(v);
        out.times.push(t);
    };
    record(0.0, &beta);
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / h_max).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            let k1 = deriv(&beta);
            let k2 = deriv(&(&beta + &k1 * C64::from(0.5 * h)));
            let k3 = deriv(&(&beta + &k2 * C64::from(0.5 * h)));
            let k4 = deriv(&(&beta + &k3 * C64::from(h)));
            beta += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(h / 6.0);
        }
        record(w[1], &beta);
    }
    Ok(out)
}

/// Uniform grid `0, dt, 2dt, …` covering `[0, t_end]`.
pub fn uniform_grid(t_end: f64, samples: usize) -> Vec<f64> {
    let samples = samples.max(2);
    (0..samples)
        .map(|i| t_end * i as f64 / (samples - 1) as f64)
        .collect()
}
