//! Single-excitation collective states `Σ_j β_j |j⟩`, where `|j⟩` has atom
//! `j` excited and every other atom in the ground state.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{AtomEnsemble, BinPartition, Vec3};
use crate::error::{invalid, Error, Result};

/// Tolerance on the unit-norm invariant.
pub const NORM_TOL: f64 = 1e-12;

/// Normalized amplitude vector over the single-excitation basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateRecord", try_from = "StateRecord")]
pub struct ExcitationState {
    amplitudes: Vec<C64>,
    label: String,
}

/// JSON layout: `{"label": ..., "amplitudes": [[re, im], ...]}`.
#[derive(Serialize, Deserialize)]
struct StateRecord {
    label: String,
    amplitudes: Vec<[f64; 2]>,
}

impl From<ExcitationState> for StateRecord {
    fn from(s: ExcitationState) -> Self {
        Self {
            label: s.label,
            amplitudes: s.amplitudes.iter().map(|c| [c.re, c.im]).collect(),
        }
    }
}

impl TryFrom<StateRecord> for ExcitationState {
    type Error = Error;

    fn try_from(r: StateRecord) -> Result<Self> {
        let amps = r
            .amplitudes
            .iter()
            .map(|[re, im]| C64::new(*re, *im))
            .collect();
        Self::new(amps, r.label)
    }
}

impl ExcitationState {
    /// Wraps an amplitude vector that must already be unit-norm.
    pub fn new(amplitudes: Vec<C64>, label: impl Into<String>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(invalid("state needs at least one amplitude"));
        }
        let norm_sq = norm_sq(&amplitudes);
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!(
                "amplitudes have squared norm {norm_sq}, expected 1"
            )));
        }
        Ok(Self {
            amplitudes,
            label: label.into(),
        })
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: Vec<C64>, label: impl Into<String>) -> Result<Self> {
        let norm = norm_sq(&amplitudes).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateInput(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|c| c / norm).collect(),
            label: label.into(),
        })
    }

    /// `|j⟩`, zero-based.
    pub fn basis(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(invalid(format!("basis index {j} out of range for N = {n}")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); n];
        amps[j] = C64::new(1.0, 0.0);
        Ok(Self {
            amplitudes: amps,
            label: format!("basis:{j}"),
        })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Multiplies every amplitude by `e^{iφ}`.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        let f = C64::from_polar(1.0, phase);
        Self {
            amplitudes: self.amplitudes.iter().map(|c| c * f).collect(),
            label: self.label.clone(),
        }
    }
}

pub(crate) fn norm_sq(v: &[C64]) -> f64 {
    v.iter().map(C64::norm_sqr).sum()
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `β_j ∝ w_{bin(j)} e^{i k0·r_j}` with a single global normalization.
fn weighted_state(
    ensemble: &AtomEnsemble,
    partition: &BinPartition,
    label: &str,
) -> Result<ExcitationState> {
    if partition.atom_count() != ensemble.len() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.len(),
            got: partition.atom_count(),
        });
    }
    let weights = partition.atom_weights();
    let amps: Vec<C64> = ensemble
        .carrier_phases()
        .into_iter()
        .zip(&weights)
        .map(|(phase, w)| C64::from_polar(*w, phase))
        .collect();
    ExcitationState::normalized(amps, label)
}

/// Timed symmetric state `e^{i k0·r_j}/√N`; the plain symmetric state when
/// every atom sits at the origin.
pub fn plus_state(ensemble: &AtomEnsemble) -> ExcitationState {
    let n = ensemble.len() as f64;
    let amps = ensemble
        .carrier_phases()
        .into_iter()
        .map(|phase| C64::from_polar(n.sqrt().recip(), phase))
        .collect();
    ExcitationState {
        amplitudes: amps,
        label: "plus".into(),
    }
}

/// Timed antisymmetric state over a two-bin (+1, −1) partition.
pub fn minus_state(ensemble: &AtomEnsemble, partition: &BinPartition) -> Result<ExcitationState> {
    if partition.bins().len() != 2 {
        return Err(invalid(format!(
            "minus state needs a two-bin partition, got {} bins",
            partition.bins().len()
        )));
    }
    weighted_state(ensemble, partition, "minus")
}

/// Three-bin subradiant state with bin coefficients (1, −2, 1).
pub fn three_bin_state(
    ensemble: &AtomEnsemble,
    partition: &BinPartition,
) -> Result<ExcitationState> {
    if partition.bins().len() != 3 {
        return Err(invalid(format!(
            "three-bin state needs a three-bin partition, got {} bins",
            partition.bins().len()
        )));
    }
    weighted_state(ensemble, partition, "three-bin")
}

/// `S(k) = Σ_j β_j e^{−i k·r_j}`.
pub fn structure_factor(state: &ExcitationState, ensemble: &AtomEnsemble, k: &Vec3) -> C64 {
    state
        .amplitudes
        .iter()
        .zip(ensemble.positions())
        .map(|(b, r)| b * C64::from_polar(1.0, -k.dot(r)))
        .sum()
}

/// Multiplies the amplitudes of the listed atoms by `e^{iφ}`.
pub fn apply_bin_phase(
    state: &ExcitationState,
    indices: &[usize],
    phase: f64,
) -> Result<ExcitationState> {
    let n = state.len();
    if let Some(&bad) = indices.iter().find(|&&j| j >= n) {
        return Err(invalid(format!(
            "atom index {bad} out of range for N = {n}"
        )));
    }
    let f = C64::from_polar(1.0, phase);
    let mut amps = state.amplitudes.clone();
    let mut touched = vec![false; n];
    for &j in indices {
        // repeated indices get the phase once
        if !std::mem::replace(&mut touched[j], true) {
            amps[j] *= f;
        }
    }
    Ok(ExcitationState {
        amplitudes: amps,
        label: state.label.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{halves, make_ensemble, thirds, GeometrySpec};
    use std::f64::consts::PI;

    fn dicke(n: usize) -> AtomEnsemble {
        make_ensemble(&GeometrySpec::point_cluster(n, 0.0)).unwrap()
    }

    fn close(a: &[C64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(x, y)| (x - C64::new(*y, 0.0)).norm() < tol)
    }

    #[test]
    fn plus_state_examples() {
        let s = plus_state(&dicke(2));
        let r = 0.5f64.sqrt();
        assert!(close(s.amplitudes(), &[r, r], 1e-15));

        let line = make_ensemble(&GeometrySpec::line(3, 0.5)).unwrap();
        let s = plus_state(&line);
        let r = 3f64.sqrt().recip();
        assert!(close(s.amplitudes(), &[r, -r, r], 1e-14));

        let slab = make_ensemble(&GeometrySpec::slab(50, 20.0, 4.0, 3)).unwrap();
        assert!((plus_state(&slab).norm_sq() - 1.0).abs() < NORM_TOL);
    }

    #[test]
    fn minus_state_examples() {
        let e = dicke(4);
        let m = minus_state(&e, &halves(&e).unwrap()).unwrap();
        assert!(close(m.amplitudes(), &[0.5, 0.5, -0.5, -0.5], 1e-15));
        assert!(plus_state(&e).inner(&m).norm() < 1e-15);
        assert!(minus_state(&e, &BinPartition::single(4)).is_err());
        let e6 = dicke(6);
        assert!(minus_state(&e6, &thirds(&e6).unwrap()).is_err());
    }

    #[test]
    fn three_bin_examples() {
        let e3 = dicke(3);
        let s = three_bin_state(&e3, &thirds(&e3).unwrap()).unwrap();
        let r = 6f64.sqrt().recip();
        assert!(close(s.amplitudes(), &[r, -2.0 * r, r], 1e-15));

        // two atoms per bin: (1,1,−2,−2,1,1)/√12
        let e6 = dicke(6);
        let s = three_bin_state(&e6, &thirds(&e6).unwrap()).unwrap();
        let r = 12f64.sqrt().recip();
        assert!(close(
            s.amplitudes(),
            &[r, r, -2.0 * r, -2.0 * r, r, r],
            1e-15
        ));
        assert!(three_bin_state(&e6, &halves(&e6).unwrap()).is_err());
    }

    #[test]
    fn structure_factor_at_carrier() {
        let line = make_ensemble(&GeometrySpec::line(6, 0.37)).unwrap();
        let k0 = line.k0_vec();
        let s = structure_factor(&plus_state(&line), &line, &k0);
        assert!((s.norm_sqr() - 6.0).abs() < 1e-12);
        let m = minus_state(&line, &halves(&line).unwrap()).unwrap();
        assert!(structure_factor(&m, &line, &k0).norm() < 1e-12);
        let t = three_bin_state(&line, &thirds(&line).unwrap()).unwrap();
        assert!(structure_factor(&t, &line, &k0).norm() < 1e-12);
    }

    #[test]
    fn bin_phase_switches_minus_to_plus() {
        let e = dicke(4);
        let m = minus_state(&e, &halves(&e).unwrap()).unwrap();
        let switched = apply_bin_phase(&m, &[2, 3], PI).unwrap();
        assert!(close(switched.amplitudes(), &[0.5; 4], 1e-15));

        let same = apply_bin_phase(&m, &[2, 3], 0.0).unwrap();
        assert_eq!(same.amplitudes(), m.amplitudes());

        let twice = apply_bin_phase(&switched, &[2, 3], PI).unwrap();
        assert!(twice
            .amplitudes()
            .iter()
            .zip(m.amplitudes())
            .all(|(a, b)| (a - b).norm() < 1e-15));

        assert!(matches!(
            apply_bin_phase(&m, &[4], PI),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn json_layout() {
        let s = ExcitationState::basis(2, 1).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"label":"basis:1","amplitudes":[[0.0,0.0],[1.0,0.0]]}"#
        );
        let back: ExcitationState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<ExcitationState>(
            r#"{"label":"x","amplitudes":[[1.0,0.0],[1.0,0.0]]}"#
        )
        .is_err());
    }
}
