//! Optical preparation of collective single-excitation states and the
//! subradiant to superradiant switch.
//!
//! A single photon enters the main path of a beam-splitter cascade. Each
//! splitter (or mirror) taps one output leg that is routed onto one atom.
//! Splitters act on (main, leg) as the real rotation
//!
//! ```text
//! main' = t·main − r·leg
//! leg'  = r·main + t·leg,   t = √(1 − r²)
//! ```
//!
//! so a photon in the main path sends amplitude `r` into the leg. A resonant
//! single-photon π pulse then maps `|b,1⟩ → −i|a,0⟩` on every leg; that
//! common `−i` is removed from the reported atomic states.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dicke::{FullState, MAX_ATOMS};
use crate::ensemble::AtomEnsemble;
use crate::error::{invalid, Error, Result};
use crate::states::{apply_bin_phase, norm_sq, ExcitationState};

/// Drive strengths at or above this break the optically-thin picture.
pub const THIN_MEDIUM_LIMIT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Element {
    BeamSplitter { reflectance: f64 },
    PhaseShifter { phase: f64 },
    Mirror,
}

impl Element {
    fn tap(&self) -> Option<f64> {
        match self {
            Element::BeamSplitter { reflectance } => Some(*reflectance),
            Element::Mirror => Some(1.0),
            Element::PhaseShifter { .. } => None,
        }
    }
}

/// Ordered cascade of elements along the main path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalNetwork {
    elements: Vec<Element>,
    /// Atom index fed by each tapped leg, in tap order.
    targets: Vec<usize>,
    /// Propagation phase picked up on each leg before reaching its atom.
    #[serde(default)]
    leg_phases: Vec<f64>,
}

impl OpticalNetwork {
    pub fn new(elements: Vec<Element>, targets: Vec<usize>) -> Result<Self> {
        for e in &elements {
            if let Element::BeamSplitter { reflectance } = e {
                if !(0.0..=1.0).contains(reflectance) {
                    return Err(invalid(format!(
                        "reflectance must lie in [0, 1], got {reflectance}"
                    )));
                }
            }
            if let Element::PhaseShifter { phase } = e {
                if !phase.is_finite() {
                    return Err(invalid("phase shift must be finite"));
                }
            }
        }
        let legs = elements.iter().filter(|e| e.tap().is_some()).count();
        if targets.len() != legs {
            return Err(Error::DimensionMismatch {
                expected: legs,
                got: targets.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = targets.iter().find(|&&t| !seen.insert(t)) {
            return Err(invalid(format!("atom {dup} is fed by two legs")));
        }
        Ok(Self {
            elements,
            targets,
            leg_phases: vec![0.0; legs],
        })
    }

    pub fn with_leg_phases(mut self, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != self.legs() {
            return Err(Error::DimensionMismatch {
                expected: self.legs(),
                got: phases.len(),
            });
        }
        self.leg_phases = phases;
        Ok(self)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn leg_phases(&self) -> &[f64] {
        &self.leg_phases
    }

    pub fn legs(&self) -> usize {
        self.targets.len()
    }

    /// Tapped reflectances in order.
    pub fn reflectances(&self) -> Vec<f64> {
        self.elements.iter().filter_map(Element::tap).collect()
    }

    /// Inserts an element before position `index` of the element list.
    pub fn insert(&mut self, index: usize, element: Element) -> Result<()> {
        if element.tap().is_some() {
            return Err(invalid(
                "only phase shifters can be inserted into a built network",
            ));
        }
        if index > self.elements.len() {
            return Err(invalid(format!("insert position {index} out of range")));
        }
        self.elements.insert(index, element);
        Ok(())
    }

    /// Full mode transformation, `(legs + 1)` square. Column 0 is the main
    /// input port, column `k + 1` the open port of tap `k`. Rows `0..legs`
    /// are the legs (phases included), the last row is the main path exit.
    pub fn transfer_matrix(&self) -> DMatrix<C64> {
        let l = self.legs();
        // internal mode order: 0 = main path, k + 1 = leg k
        let mut u = DMatrix::<C64>::identity(l + 1, l + 1);
        let mut leg = 0;
        for e in &self.elements {
            match e {
                Element::PhaseShifter { phase } => {
                    let f = C64::from_polar(1.0, *phase);
                    for c in 0..=l {
                        u[(0, c)] *= f;
                    }
                }
                _ => {
                    let r = e.tap().expect("tap element");
                    let t = (1.0 - r * r).max(0.0).sqrt();
                    for c in 0..=l {
                        let (m, g) = (u[(0, c)], u[(leg + 1, c)]);
                        u[(0, c)] = m * t - g * r;
                        u[(leg + 1, c)] = m * r + g * t;
                    }
                    leg += 1;
                }
            }
        }
        let mut out = DMatrix::<C64>::zeros(l + 1, l + 1);
        for k in 0..l {
            let f = C64::from_polar(1.0, self.leg_phases[k]);
            for c in 0..=l {
                out[(k, c)] = u[(k + 1, c)] * f;
            }
        }
        for c in 0..=l {
            out[(l, c)] = u[(0, c)];
        }
        out
    }

    /// Leg amplitudes for one photon in the main input, plus what is left on
    /// the main path after the last element.
    pub fn propagate(&self) -> LegAmplitudes {
        let u = self.transfer_matrix();
        let l = self.legs();
        LegAmplitudes {
            legs: (0..l).map(|k| u[(k, 0)]).collect(),
            residual: u[(l, 0)],
        }
    }

    /// Largest deviation of `U†U` from the identity.
    pub fn isometry_defect(&self) -> f64 {
        let u = self.transfer_matrix();
        let g = u.adjoint() * &u;
        let id = DMatrix::<C64>::identity(g.nrows(), g.ncols());
        (g - id).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegAmplitudes {
    pub legs: Vec<C64>,
    pub residual: C64,
}

/// Cascade with reflectances `r_j = 1/√(N − j + 1)` ending in a mirror;
/// leg `j` feeds atom `j`.
pub fn equal_split_network(n: usize) -> Result<OpticalNetwork> {
    if n == 0 {
        return Err(invalid("network needs at least one leg"));
    }
    let elements = (1..=n)
        .map(|j| {
            if j == n {
                Element::Mirror
            } else {
                Element::BeamSplitter {
                    reflectance: ((n - j + 1) as f64).sqrt().recip(),
                }
            }
        })
        .collect();
    OpticalNetwork::new(elements, (0..n).collect())
}

/// Equal-split cascade with a π phase shifter after the `N/2`-th splitter.
pub fn minus_network(n: usize) -> Result<OpticalNetwork> {
    if n % 2 != 0 || n == 0 {
        return Err(invalid(format!("minus preparation needs even N, got {n}")));
    }
    let mut net = equal_split_network(n)?;
    net.insert(n / 2, Element::PhaseShifter { phase: PI })?;
    Ok(net)
}

/// Two-level atom coupled to one resonant mode, restricted to ≤ 1 photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JcState {
    /// Amplitudes of `|b,0⟩, |b,1⟩, |a,0⟩, |a,1⟩`.
    pub amplitudes: [C64; 4],
}

impl JcState {
    pub fn basis(excited: bool, photons: u8) -> Result<Self> {
        if photons > 1 {
            return Err(invalid("at most one photon in the pulse mode"));
        }
        let mut amplitudes = [C64::new(0.0, 0.0); 4];
        amplitudes[2 * excited as usize + photons as usize] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub fn get(&self, excited: bool, photons: u8) -> C64 {
        self.amplitudes[2 * excited as usize + photons.min(1) as usize]
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amplitudes)
    }

    /// Atomic excitation plus photon number, averaged.
    pub fn mean_excitation(&self) -> f64 {
        let [_, b1, a0, a1] = self.amplitudes;
        b1.norm_sqr() + a0.norm_sqr() + 2.0 * a1.norm_sqr()
    }
}

/// `(cos(gt/2), −i sin(gt/2))` entries of the resonant exchange.
fn pulse_coefficients(area: f64) -> (C64, C64) {
    let (s, c) = (area / 2.0).sin_cos();
    (C64::new(c, 0.0), C64::new(0.0, -s))
}

/// Resonant pulse of duration `t`: `|b,1⟩ → cos(gt/2)|b,1⟩ − i sin(gt/2)|a,0⟩`,
/// with `|b,0⟩` and `|a,1⟩` left alone.
pub fn jc_pulse(excited: bool, photons: u8, g: f64, t: f64) -> Result<JcState> {
    if !(g > 0.0) {
        return Err(invalid(format!("coupling must be positive, got {g}")));
    }
    if !(t >= 0.0) {
        return Err(invalid(format!(
            "pulse duration must be non-negative, got {t}"
        )));
    }
    let input = JcState::basis(excited, photons)?;
    let (c, s) = pulse_coefficients(g * t);
    let [b0, b1, a0, a1] = input.amplitudes;
    Ok(JcState {
        amplitudes: [b0, c * b1 + s * a0, s * b1 + c * a0, a1],
    })
}

/// Single-excitation joint state of legs and atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonAtomState {
    /// Photon in leg `k`, every atom in `|b⟩`.
    pub legs: Vec<C64>,
    /// Atom `j` excited, field in vacuum.
    pub atoms: Vec<C64>,
    /// Photon left on the main path.
    pub residual: C64,
}

impl PhotonAtomState {
    pub fn from_network(network: &OpticalNetwork, atoms: usize) -> Result<Self> {
        if let Some(&bad) = network.targets().iter().find(|&&t| t >= atoms) {
            return Err(invalid(format!(
                "network targets atom {bad} but the ensemble has {atoms}"
            )));
        }
        let amps = network.propagate();
        Ok(Self {
            legs: amps.legs,
            atoms: vec![C64::new(0.0, 0.0); atoms],
            residual: amps.residual,
        })
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.legs) + norm_sq(&self.atoms) + self.residual.norm_sqr()
    }

    /// Probability that the field is in vacuum.
    pub fn vacuum_probability(&self) -> f64 {
        norm_sq(&self.atoms)
    }

    /// Pulse of area `gt` on every leg/atom pair.
    pub fn apply_pulses(&mut self, targets: &[usize], area: f64) {
        let (c, s) = pulse_coefficients(area);
        for (k, &j) in targets.iter().enumerate() {
            let (p, a) = (self.legs[k], self.atoms[j]);
            self.legs[k] = c * p + s * a;
            self.atoms[j] = s * p + c * a;
        }
    }
}

/// Outcome of a deterministic preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub state: ExcitationState,
    pub success_probability: f64,
}

/// Sends one photon through `network`, applies π pulses and returns the
/// atomic state with the pulse phase removed.
pub fn prepare_with_network(
    ensemble: &AtomEnsemble,
    network: &OpticalNetwork,
    label: &str,
) -> Result<Prepared> {
    let mut joint = PhotonAtomState::from_network(network, ensemble.len())?;
    joint.apply_pulses(network.targets(), PI);
    let p = joint.vacuum_probability();
    if p < 1e-12 {
        return Err(Error::DegenerateInput(
            "no excitation reached the atoms".into(),
        ));
    }
    let i = C64::new(0.0, 1.0);
    let amps = joint.atoms.iter().map(|a| a * i).collect();
    Ok(Prepared {
        state: ExcitationState::normalized(amps, label)?,
        success_probability: p,
    })
}

fn timed(network: OpticalNetwork, ensemble: &AtomEnsemble) -> Result<OpticalNetwork> {
    let phases = ensemble.carrier_phases();
    let leg_phases = network.targets().iter().map(|&j| phases[j]).collect();
    network.with_leg_phases(leg_phases)
}

/// Equal-split cascade with leg delays matching `k0·r_j`.
pub fn prepare_timed_plus(ensemble: &AtomEnsemble) -> Result<Prepared> {
    let net = timed(equal_split_network(ensemble.len())?, ensemble)?;
    prepare_with_network(ensemble, &net, "plus")
}

/// As [`prepare_timed_plus`] with a π shifter halfway down the cascade.
pub fn prepare_timed_minus(ensemble: &AtomEnsemble) -> Result<Prepared> {
    let net = timed(minus_network(ensemble.len())?, ensemble)?;
    prepare_with_network(ensemble, &net, "minus")
}

/// Joint state of atoms and a photon confined to the legs of one pair.
struct PairField {
    n: usize,
    // [vacuum, photon in leg 0, photon in leg 1] × 2^N
    blocks: [Vec<C64>; 3],
}

/// Builds `|s_ij⟩` on top of `base` with a 50/50 splitter, π shifter and
/// mirror feeding atoms `i` and `j`, then π pulses. The probability is the
/// weight of the photon-free outcome (1 when atoms `i`, `j` start in `|b⟩`).
pub fn prepare_singlet_on(base: &FullState, i: usize, j: usize) -> Result<(FullState, f64)> {
    let n = base.atoms();
    if i == j {
        return Err(invalid(format!(
            "singlet needs two distinct atoms, got ({i}, {j})"
        )));
    }
    if i >= n || j >= n {
        return Err(invalid(format!("atom index out of range for N = {n}")));
    }
    let net = OpticalNetwork::new(
        vec![
            Element::BeamSplitter {
                reflectance: std::f64::consts::FRAC_1_SQRT_2,
            },
            Element::PhaseShifter { phase: PI },
            Element::Mirror,
        ],
        vec![i, j],
    )?;
    let legs = net.propagate();
    let zero = vec![C64::new(0.0, 0.0); 1 << n];
    let mut field = PairField {
        n,
        blocks: [zero.clone(), zero.clone(), zero],
    };
    for (s, c) in base.amplitudes().iter().enumerate() {
        field.blocks[1][s] = c * legs.legs[0];
        field.blocks[2][s] = c * legs.legs[1];
    }
    let (cs, sn) = pulse_coefficients(PI);
    for (k, &atom) in [i, j].iter().enumerate() {
        let bit = 1usize << atom;
        for s in 0..1 << field.n {
            if s & bit != 0 {
                continue;
            }
            // |b_atom, 1_k⟩ ↔ |a_atom, 0⟩
            let (p, a) = (field.blocks[k + 1][s], field.blocks[0][s | bit]);
            field.blocks[k + 1][s] = cs * p + sn * a;
            field.blocks[0][s | bit] = sn * p + cs * a;
        }
    }
    let p = norm_sq(&field.blocks[0]);
    if p < 1e-12 {
        return Err(Error::DegenerateInput("photon never absorbed".into()));
    }
    let i_unit = C64::new(0.0, 1.0);
    let atoms = field.blocks[0].iter().map(|c| c * i_unit).collect();
    Ok((FullState::normalized(n, atoms)?, p))
}

/// `|s_ij⟩` with every other atom in `|b⟩`.
pub fn prepare_singlet_pair(n: usize, i: usize, j: usize) -> Result<(FullState, f64)> {
    if n > MAX_ATOMS {
        return Err(Error::Capacity {
            what: "full-space atom count",
            limit: MAX_ATOMS,
            requested: n,
        });
    }
    prepare_singlet_on(&FullState::ground(n)?, i, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Plus,
    Minus,
}

/// Heralded preparation by weak coherent drive.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalOutcome {
    /// Single-excitation part of the heralded branch, `None` when that
    /// branch never occurs.
    pub state: Option<ExcitationState>,
    /// Probability of the heralded (no-count) branch.
    pub no_count_probability: f64,
    /// Probability of the discarded branch.
    pub count_probability: f64,
    /// Overlap of the heralded branch with the target, multi-excitation
    /// components included.
    pub fidelity: f64,
    pub thin_medium_warning: bool,
}

/// Drive phases `k0·r_j`, shifted by π on the second half for the minus
/// target.
pub fn drive_phases(ensemble: &AtomEnsemble, target: Target) -> Result<Vec<f64>> {
    let n = ensemble.len();
    let mut phases = ensemble.carrier_phases();
    if target == Target::Minus {
        if n % 2 != 0 {
            return Err(invalid(format!("minus target needs even N, got {n}")));
        }
        for p in &mut phases[n / 2..] {
            *p += PI;
        }
    }
    Ok(phases)
}

/// Per-atom excitation amplitude `sin θ = ε/√N`.
pub fn drive_angle(n: usize, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) || eps * eps > n as f64 {
        return Err(invalid(format!(
            "drive strength must lie in [0, √N], got {eps}"
        )));
    }
    Ok((eps / (n as f64).sqrt()).asin())
}

/// Each atom is rotated to `cos θ|b⟩ − i sin θ e^{iφ_j}|a⟩`. The heralded
/// branch keeps every outcome with at least one excitation.
pub fn conditional_prepare(
    ensemble: &AtomEnsemble,
    target: Target,
    eps: f64,
) -> Result<ConditionalOutcome> {
    let n = ensemble.len();
    let phases = drive_phases(ensemble, target)?;
    let theta = drive_angle(n, eps)?;
    let (s, c) = theta.sin_cos();
    let ground = c.powi(2 * n as i32);
    let heralded = 1.0 - ground;
    let single = n as f64 * s * s * c.powi(2 * (n as i32 - 1));
    let state = if heralded > 0.0 && single > 0.0 {
        let amps = phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
        let label = match target {
            Target::Plus => "plus",
            Target::Minus => "minus",
        };
        Some(ExcitationState::normalized(amps, label)?)
    } else {
        None
    };
    Ok(ConditionalOutcome {
        state,
        no_count_probability: heralded,
        count_probability: ground,
        fidelity: if heralded > 0.0 {
            single / heralded
        } else {
            0.0
        },
        thin_medium_warning: eps >= THIN_MEDIUM_LIMIT,
    })
}

/// Product state of the weak drive in the full space, for N ≤ 8.
pub fn driven_product_state(
    ensemble: &AtomEnsemble,
    target: Target,
    eps: f64,
) -> Result<FullState> {
    let n = ensemble.len();
    let phases = drive_phases(ensemble, target)?;
    let theta = drive_angle(n, eps)?;
    let (s, c) = theta.sin_cos();
    let mut amps = vec![C64::new(1.0, 0.0)];
    for &p in &phases {
        let up = C64::new(0.0, -s) * C64::from_polar(1.0, p);
        let low = amps.len();
        let mut next = vec![C64::new(0.0, 0.0); 2 * low];
        for (idx, a) in amps.iter().enumerate() {
            next[idx] = a * c;
            next[idx + low] = a * up;
        }
        amps = next;
    }
    FullState::new(n, amps)
}

/// Cycles the listed atoms `a → a′ → a` with a 2π pulse, flipping the sign
/// of their amplitudes.
pub fn switch_2pi(state: &ExcitationState, bin: &[usize]) -> Result<ExcitationState> {
    apply_bin_phase(state, bin, PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{make_ensemble, GeometrySpec};
    use crate::states::plus_state;

    #[test]
    fn equal_split_reflectances() {
        let net = equal_split_network(3).unwrap();
        let r = net.reflectances();
        assert!((r[0] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((r[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(r[2], 1.0);
        for a in net.propagate().legs {
            assert!((a.norm() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
        let one = equal_split_network(1).unwrap();
        assert_eq!(one.elements(), &[Element::Mirror]);
        assert!((one.propagate().legs[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn network_validation() {
        assert!(
            OpticalNetwork::new(vec![Element::BeamSplitter { reflectance: 1.2 }], vec![0]).is_err()
        );
        assert!(OpticalNetwork::new(vec![Element::Mirror], vec![]).is_err());
        assert!(OpticalNetwork::new(
            vec![Element::BeamSplitter { reflectance: 0.5 }, Element::Mirror],
            vec![1, 1]
        )
        .is_err());
        assert!(equal_split_network(0).is_err());
        assert!(minus_network(3).is_err());
    }

    #[test]
    fn jc_examples() {
        let pi = jc_pulse(false, 1, 2.0, PI / 2.0).unwrap();
        assert!((pi.get(true, 0) - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(pi.get(false, 1).norm() < 1e-15);
        let id = jc_pulse(false, 1, 1.0, 0.0).unwrap();
        assert_eq!(id, JcState::basis(false, 1).unwrap());
        let half = jc_pulse(false, 1, 1.0, PI / 2.0).unwrap();
        assert!((half.get(true, 0).norm_sqr() - 0.5).abs() < 1e-15);
        assert!((half.get(false, 1).norm_sqr() - 0.5).abs() < 1e-15);
        assert_eq!(
            jc_pulse(true, 1, 1.0, 1.3).unwrap(),
            JcState::basis(true, 1).unwrap()
        );
        assert!(jc_pulse(false, 1, 0.0, 1.0).is_err());
        assert!(jc_pulse(false, 1, 1.0, -1.0).is_err());
    }

    #[test]
    fn timed_plus_on_a_line() {
        let e = make_ensemble(&GeometrySpec::line(3, 0.37)).unwrap();
        let p = prepare_timed_plus(&e).unwrap();
        assert!((p.state.fidelity(&plus_state(&e)) - 1.0).abs() < 1e-12);
        assert!((p.success_probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minus_dicke_four() {
        let e = make_ensemble(&GeometrySpec::point_cluster(4, 0.0)).unwrap();
        let m = prepare_timed_minus(&e).unwrap();
        let expect = [0.5, 0.5, -0.5, -0.5];
        for (a, b) in m.state.amplitudes().iter().zip(expect) {
            assert!((a - C64::new(b, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn conditional_zero_drive() {
        let e = make_ensemble(&GeometrySpec::point_cluster(4, 0.0)).unwrap();
        let out = conditional_prepare(&e, Target::Plus, 0.0).unwrap();
        assert_eq!(out.no_count_probability, 0.0);
        assert!(out.state.is_none());
        assert!(!out.thin_medium_warning);
        assert!(
            conditional_prepare(&e, Target::Plus, 0.5)
                .unwrap()
                .thin_medium_warning
        );
        assert!(conditional_prepare(&e, Target::Plus, -0.1).is_err());
    }
}
