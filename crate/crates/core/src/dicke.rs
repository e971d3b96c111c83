//! Exact full Hilbert space of N two-level atoms (N ≤ 8).
//!
//! Basis index bit `j` is set when atom `j` (zero-based) is in the excited
//! state `|a⟩`; a cleared bit is the ground state `|b⟩`. Collective
//! operators are `R± = Σ_j σ±_j` and `R_z = Σ_j σz_j / 2`, so the inversion
//! quantum number is `m = (N_a − N_b) / 2`.
//!
//! Multiplets are built by coupling atoms one at a time in index order. At
//! every step a parent multiplet of cooperation number `R` spawns `R − ½`
//! before `R + ½`, and the degeneracy index `p` (starting at 1) counts
//! multiplets of equal `R` in that order. For N = 4 this reproduces the
//! labelling of the singlet-product table: `|1,−1⟩_1 = |s₁₂⟩|b₃b₄⟩` and
//! `|0,0⟩_1 = |s₁₂⟩|s₃₄⟩`.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::states::{inner, norm_sq, ExcitationState};

/// Largest atom count handled in the full space.
pub const MAX_ATOMS: usize = 8;

fn check_capacity(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("atom count must be positive"));
    }
    if n > MAX_ATOMS {
        return Err(Error::Capacity {
            what: "full-space atom count",
            limit: MAX_ATOMS,
            requested: n,
        });
    }
    Ok(())
}

/// Unit-norm vector over the `2^N` product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    n: usize,
    amplitudes: Vec<C64>,
}

impl FullState {
    pub fn new(n: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_capacity(n)?;
        if amplitudes.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: amplitudes.len(),
            });
        }
        let ns = norm_sq(&amplitudes);
        if (ns - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "full state has squared norm {ns}, expected 1"
            )));
        }
        Ok(Self { n, amplitudes })
    }

    pub fn normalized(n: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_capacity(n)?;
        if amplitudes.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: amplitudes.len(),
            });
        }
        let norm = norm_sq(&amplitudes).sqrt();
        if !(norm > 1e-12) {
            return Err(Error::DegenerateInput(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(Self {
            n,
            amplitudes: amplitudes.into_iter().map(|c| c / norm).collect(),
        })
    }

    /// All atoms in `|b⟩`.
    pub fn ground(n: usize) -> Result<Self> {
        check_capacity(n)?;
        let mut amps = zeros(1 << n);
        amps[0] = C64::new(1.0, 0.0);
        Ok(Self {
            n,
            amplitudes: amps,
        })
    }

    /// Embeds a single-excitation state: `β_j` goes to basis index `1 << j`.
    pub fn from_excitation(state: &ExcitationState) -> Result<Self> {
        let n = state.len();
        check_capacity(n)?;
        let mut amps = zeros(1 << n);
        for (j, b) in state.amplitudes().iter().enumerate() {
            amps[1 << j] = *b;
        }
        Ok(Self {
            n,
            amplitudes: amps,
        })
    }

    pub fn atoms(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn inner(&self, other: &Self) -> C64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amplitudes)
    }

    /// Non-zero amplitudes keyed by an `a`/`b` string, atom 1 first.
    pub fn expansion(&self, tol: f64) -> Vec<(String, C64)> {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > tol)
            .map(|(s, c)| (basis_label(s, self.n), *c))
            .collect()
    }
}

fn zeros(len: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); len]
}

/// `"abbb"` for index 1 with N = 4.
pub fn basis_label(index: usize, n: usize) -> String {
    (0..n)
        .map(|j| if index >> j & 1 == 1 { 'a' } else { 'b' })
        .collect()
}

/// Collective spin operators acting on raw `2^N` vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectiveOps {
    n: usize,
}

pub fn collective_ops(n: usize) -> Result<CollectiveOps> {
    check_capacity(n)?;
    Ok(CollectiveOps { n })
}

impl CollectiveOps {
    pub fn atoms(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `R⁺ v`.
    pub fn raise(&self, v: &[C64]) -> Vec<C64> {
        let mut out = zeros(self.dim());
        for (s, c) in v.iter().enumerate() {
            for j in 0..self.n {
                if s >> j & 1 == 0 {
                    out[s | 1 << j] += c;
                }
            }
        }
        out
    }

    /// `R⁻ v`.
    pub fn lower(&self, v: &[C64]) -> Vec<C64> {
        let mut out = zeros(self.dim());
        for (s, c) in v.iter().enumerate() {
            for j in 0..self.n {
                if s >> j & 1 == 1 {
                    out[s & !(1 << j)] += c;
                }
            }
        }
        out
    }

    /// `R_z v`.
    pub fn rz(&self, v: &[C64]) -> Vec<C64> {
        v.iter()
            .enumerate()
            .map(|(s, c)| c * (s.count_ones() as f64 - 0.5 * self.n as f64))
            .collect()
    }

    /// `R² v = (R_z² + ½(R⁺R⁻ + R⁻R⁺)) v`.
    pub fn r_squared(&self, v: &[C64]) -> Vec<C64> {
        let zz = self.rz(&self.rz(v));
        let pm = self.raise(&self.lower(v));
        let mp = self.lower(&self.raise(v));
        zz.iter()
            .zip(pm.iter().zip(&mp))
            .map(|(a, (b, c))| a + (b + c) * 0.5)
            .collect()
    }

    /// Dense matrix of one of the operators, column `s` = image of `|s⟩`.
    pub fn matrix(&self, op: impl Fn(&Self, &[C64]) -> Vec<C64>) -> nalgebra::DMatrix<C64> {
        let d = self.dim();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        for s in 0..d {
            let mut e = zeros(d);
            e[s] = C64::new(1.0, 0.0);
            for (r, c) in op(self, &e).into_iter().enumerate() {
                m[(r, s)] = c;
            }
        }
        m
    }
}

/// If `image = λ v` to within `tol`, returns `λ`.
pub fn eigenvalue(v: &[C64], image: &[C64], tol: f64) -> Option<f64> {
    let vv = norm_sq(v);
    if vv == 0.0 {
        return None;
    }
    let lambda = inner(v, image) / vv;
    let resid: f64 = v
        .iter()
        .zip(image)
        .map(|(a, b)| (b - a * lambda).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (resid <= tol && lambda.im.abs() <= tol).then_some(lambda.re)
}

/// `(R, m, p)` with half-integer `R` and `m` stored doubled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct MultipletLabel {
    pub twice_r: u32,
    pub twice_m: i32,
    /// Degeneracy index, starting at 1.
    pub p: usize,
}

impl MultipletLabel {
    pub fn new(r: f64, m: f64, p: usize) -> Result<Self> {
        let (tr, tm) = (2.0 * r, 2.0 * m);
        if tr < 0.0 || tr.fract() != 0.0 || tm.fract() != 0.0 {
            return Err(invalid(format!("R = {r}, m = {m} are not half-integers")));
        }
        let (twice_r, twice_m) = (tr as u32, tm as i32);
        if twice_m.unsigned_abs() > twice_r || (twice_r as i32 - twice_m) % 2 != 0 {
            return Err(invalid(format!("m = {m} is not in the ladder of R = {r}")));
        }
        if p == 0 {
            return Err(invalid("degeneracy index starts at 1"));
        }
        Ok(Self {
            twice_r,
            twice_m,
            p,
        })
    }

    pub fn r(&self) -> f64 {
        self.twice_r as f64 / 2.0
    }

    pub fn m(&self) -> f64 {
        self.twice_m as f64 / 2.0
    }

    /// Checks `R ≤ N/2` and `p` against the degeneracy of `R` for N atoms.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        let count = multiplet_degeneracy(n, self.twice_r);
        if self.twice_r as usize > n || (n - self.twice_r as usize) % 2 != 0 {
            return Err(invalid(format!("R = {} impossible for N = {n}", self.r())));
        }
        if self.p > count {
            return Err(invalid(format!(
                "p = {} exceeds the {count} multiplets with R = {} for N = {n}",
                self.p,
                self.r()
            )));
        }
        Ok(())
    }
}

/// Number of multiplets with cooperation number `R` among N spin-½:
/// `C(N, N/2−R) − C(N, N/2−R−1)`.
pub fn multiplet_degeneracy(n: usize, twice_r: u32) -> usize {
    let tr = twice_r as usize;
    if tr > n || (n - tr) % 2 != 0 {
        return 0;
    }
    let k = (n - tr) / 2;
    let binom =
        |n: usize, k: usize| -> usize { (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1)) };
    binom(n, k) - if k == 0 { 0 } else { binom(n, k - 1) }
}

/// `γ_m / γ = (R + m)(R − m + 1)`, the squared lowering matrix element.
pub fn ladder_rate(label: &MultipletLabel) -> f64 {
    let (r, m) = (label.r(), label.m());
    (r + m) * (r - m + 1.0)
}

/// One angular-momentum multiplet of the full space.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplet {
    pub twice_r: u32,
    pub p: usize,
    /// Doubled cooperation numbers after coupling atoms 1, 2, …, N.
    pub path: Vec<u32>,
    /// States ordered from `m = −R` to `m = +R`.
    pub states: Vec<FullState>,
}

impl Multiplet {
    pub fn label(&self, index: usize) -> MultipletLabel {
        MultipletLabel {
            twice_r: self.twice_r,
            twice_m: 2 * index as i32 - self.twice_r as i32,
            p: self.p,
        }
    }

    /// The `|R, m⟩` member.
    pub fn state(&self, m: f64) -> Option<&FullState> {
        let idx = m + self.twice_r as f64 / 2.0;
        (idx >= 0.0 && idx.fract() == 0.0)
            .then(|| self.states.get(idx as usize))
            .flatten()
    }
}

struct Partial {
    twice_r: u32,
    path: Vec<u32>,
    // raw vectors over 2^k, m ascending
    states: Vec<Vec<C64>>,
}

/// Decomposes the `2^N` space into multiplets by sequential coupling.
pub fn multiplets(n: usize) -> Result<Vec<Multiplet>> {
    check_capacity(n)?;
    let c = |x: f64| C64::new(x, 0.0);
    let mut current = vec![Partial {
        twice_r: 1,
        path: vec![1],
        states: vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]],
    }];
    for k in 1..n {
        let dim = 1 << (k + 1);
        let up = 1usize << k;
        let mut next = Vec::new();
        for parent in &current {
            let r = parent.twice_r as f64 / 2.0;
            let parent_state = |m: f64| -> Option<&Vec<C64>> {
                let idx = m + r;
                (idx >= -1e-9 && idx <= 2.0 * r + 1e-9)
                    .then(|| &parent.states[idx.round() as usize])
            };
            let children: Vec<u32> = if parent.twice_r == 0 {
                vec![1]
            } else {
                vec![parent.twice_r - 1, parent.twice_r + 1]
            };
            for twice_rn in children {
                let rn = twice_rn as f64 / 2.0;
                let raising = twice_rn > parent.twice_r;
                let mut states = Vec::with_capacity(twice_rn as usize + 1);
                for i in 0..=twice_rn {
                    let m = i as f64 - rn;
                    let denom = 2.0 * r + 1.0;
                    let (ca, cb) = if raising {
                        (
                            ((r + m + 0.5) / denom).sqrt(),
                            ((r - m + 0.5) / denom).sqrt(),
                        )
                    } else {
                        (
                            -((r - m + 0.5) / denom).sqrt(),
                            ((r + m + 0.5) / denom).sqrt(),
                        )
                    };
                    let mut v = zeros(dim);
                    // |R, m − ½⟩ ⊗ |a⟩
                    if let Some(src) = parent_state(m - 0.5) {
                        for (s, amp) in src.iter().enumerate() {
                            v[s | up] += amp * ca;
                        }
                    }
                    // |R, m + ½⟩ ⊗ |b⟩
                    if let Some(src) = parent_state(m + 0.5) {
                        for (s, amp) in src.iter().enumerate() {
                            v[s] += amp * cb;
                        }
                    }
                    states.push(v);
                }
                let mut path = parent.path.clone();
                path.push(twice_rn);
                next.push(Partial {
                    twice_r: twice_rn,
                    path,
                    states,
                });
            }
        }
        current = next;
    }

    let mut counters = vec![0usize; n + 1];
    Ok(current
        .into_iter()
        .map(|part| {
            counters[part.twice_r as usize] += 1;
            Multiplet {
                twice_r: part.twice_r,
                p: counters[part.twice_r as usize],
                path: part.path,
                states: part
                    .states
                    .into_iter()
                    .map(|amplitudes| FullState { n, amplitudes })
                    .collect(),
            }
        })
        .collect())
}

/// Looks up `|R, m⟩_p` in the sequential-coupling basis.
pub fn multiplet_state(n: usize, label: &MultipletLabel) -> Result<FullState> {
    label.validate_for(n)?;
    multiplets(n)?
        .into_iter()
        .find(|mp| mp.twice_r == label.twice_r && mp.p == label.p)
        .and_then(|mp| mp.state(label.m()).cloned())
        .ok_or_else(|| invalid("label not present in the multiplet table"))
}

/// Product of two-atom singlets `|s_ij⟩ = (|a_i b_j⟩ − |b_i a_j⟩)/√2` over
/// the given disjoint pairs; every other atom in `|b⟩`.
pub fn singlet_product(pairs: &[(usize, usize)], n: usize) -> Result<FullState> {
    check_capacity(n)?;
    let mut used = vec![false; n];
    for &(i, j) in pairs {
        if i == j {
            return Err(invalid(format!(
                "singlet needs two distinct atoms, got ({i}, {j})"
            )));
        }
        for a in [i, j] {
            if a >= n {
                return Err(invalid(format!("atom index {a} out of range for N = {n}")));
            }
            if std::mem::replace(&mut used[a], true) {
                return Err(invalid(format!("atom {a} appears in two singlets")));
            }
        }
    }
    let mut amps = zeros(1 << n);
    amps[0] = C64::new(1.0, 0.0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for &(i, j) in pairs {
        let mut next = zeros(1 << n);
        for (s, c) in amps.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            next[s | 1 << i] += c * h;
            next[s | 1 << j] -= c * h;
        }
        amps = next;
    }
    Ok(FullState {
        n,
        amplitudes: amps,
    })
}

/// `|s_ij⟩` with the remaining atoms in the ground state.
pub fn singlet(i: usize, j: usize, n: usize) -> Result<FullState> {
    singlet_product(&[(i, j)], n)
}

/// Superposition of singlet products, renormalized.
fn singlet_sum(terms: &[&[(usize, usize)]], n: usize) -> FullState {
    let mut amps = zeros(1 << n);
    for pairs in terms {
        let s = singlet_product(pairs, n).expect("valid pairs");
        for (a, b) in amps.iter_mut().zip(s.amplitudes()) {
            *a += b;
        }
    }
    FullState::normalized(n, amps).expect("non-zero")
}

/// The five four-atom subradiant states written with singlets (atoms
/// labelled 0..3 here, 1..4 in the usual notation).
///
/// Rows two, three and five are normalized numerically, which matches the
/// prefactors `1/√3`, `1/√6`, `1/√3`.
pub fn singlet_table_states() -> Vec<(MultipletLabel, FullState)> {
    let n = 4;
    let label = |r: f64, m: f64, p: usize| MultipletLabel::new(r, m, p).expect("valid label");
    vec![
        (label(1.0, -1.0, 1), singlet_sum(&[&[(0, 1)]], n)),
        (label(1.0, -1.0, 2), singlet_sum(&[&[(0, 2)], &[(1, 2)]], n)),
        (
            label(1.0, -1.0, 3),
            singlet_sum(&[&[(0, 3)], &[(1, 3)], &[(2, 3)]], n),
        ),
        (label(0.0, 0.0, 1), singlet_sum(&[&[(0, 1), (2, 3)]], n)),
        (
            label(0.0, 0.0, 2),
            singlet_sum(&[&[(0, 2), (1, 3)], &[(1, 2), (0, 3)]], n),
        ),
    ]
}

/// Squared norms `k` of the table rows' singlet sums, prefactor `1/√k`.
pub const SINGLET_TABLE_NORMS: [f64; 5] = [1.0, 3.0, 6.0, 1.0, 3.0];

/// Unnormalized squared norm of each table row's singlet sum.
pub fn singlet_table_raw_norms() -> Vec<f64> {
    let rows: [&[&[(usize, usize)]]; 5] = [
        &[&[(0, 1)]],
        &[&[(0, 2)], &[(1, 2)]],
        &[&[(0, 3)], &[(1, 3)], &[(2, 3)]],
        &[&[(0, 1), (2, 3)]],
        &[&[(0, 2), (1, 3)], &[(1, 2), (0, 3)]],
    ];
    rows.iter()
        .map(|terms| {
            let mut amps = zeros(16);
            for pairs in terms.iter() {
                let s = singlet_product(pairs, 4).expect("valid pairs");
                for (a, b) in amps.iter_mut().zip(s.amplitudes()) {
                    *a += b;
                }
            }
            norm_sq(&amps)
        })
        .collect()
}

/// Applies the normalized collective raising operator.
pub fn promote(state: &FullState) -> Result<FullState> {
    let ops = collective_ops(state.n)?;
    let raised = ops.raise(&state.amplitudes);
    if norm_sq(&raised).sqrt() < 1e-10 {
        return Err(Error::DegenerateInput("state is annihilated by R⁺".into()));
    }
    FullState::normalized(state.n, raised)
}

/// Two-excitation expansion `Σ_{j,j'} |s_jj'⟩|+_jj'⟩`, normalized, with `j`
/// in the first half, `j'` in the second, and `|+_jj'⟩` the symmetric
/// single excitation of the remaining atoms.
pub fn promoted_minus_expansion(n: usize) -> Result<FullState> {
    check_capacity(n)?;
    if n % 2 != 0 || n < 4 {
        return Err(invalid(format!("expansion needs even N ≥ 4, got {n}")));
    }
    let half = n / 2;
    let mut amps = zeros(1 << n);
    for j in 0..half {
        for jp in half..n {
            let base = singlet(j, jp, n)?;
            let rest: Vec<usize> = (0..n).filter(|&a| a != j && a != jp).collect();
            let w = (rest.len() as f64).sqrt().recip();
            for (s, c) in base.amplitudes().iter().enumerate() {
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                for &a in &rest {
                    amps[s | 1 << a] += c * w;
                }
            }
        }
    }
    FullState::normalized(n, amps)
}

/// Dicke-limit emission rate at `t = 0`: `γ ‖R⁻ ψ‖²`.
pub fn dicke_decay_oracle(state: &FullState, gamma: f64) -> Result<f64> {
    let ops = collective_ops(state.n)?;
    Ok(gamma * norm_sq(&ops.lower(&state.amplitudes)))
}

/// One row of the multiplet table dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultipletRecord {
    pub n: usize,
    pub r: f64,
    pub m: f64,
    pub p: usize,
    pub path: Vec<f64>,
    /// `(basis string, [re, im])` for every non-zero amplitude.
    pub expansion: Vec<(String, [f64; 2])>,
}

pub fn multiplet_table(n: usize) -> Result<Vec<MultipletRecord>> {
    Ok(multiplets(n)?
        .iter()
        .flat_map(|mp| {
            mp.states.iter().enumerate().map(move |(i, st)| {
                let label = mp.label(i);
                MultipletRecord {
                    n,
                    r: label.r(),
                    m: label.m(),
                    p: label.p,
                    path: mp.path.iter().map(|&t| t as f64 / 2.0).collect(),
                    expansion: st
                        .expansion(1e-14)
                        .into_iter()
                        .map(|(k, c)| (k, [c.re, c.im]))
                        .collect(),
                }
            })
        })
        .collect())
}
