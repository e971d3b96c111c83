//! Atomic ensembles: positions, transition parameters and bin partitions.
//!
//! All lengths share one unit. The default wavelength is 1, so positions are
//! effectively measured in wavelengths and `k0 · r` is dimensionless.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Vec3 = Vector3<f64>;

/// How atom positions are realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    /// `n` atoms uniformly spread in a cube of side `spread` around the
    /// origin. `spread = 0` puts every atom at the origin (Dicke limit).
    PointCluster {
        n: usize,
        #[serde(default)]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `n` atoms at `j * spacing` along `axis`, starting at the origin.
    Line {
        n: usize,
        spacing: f64,
        #[serde(default = "default_axis")]
        axis: [f64; 3],
    },
    /// `n` atoms uniform in a cylinder of cross-section `area` and length
    /// `depth` along the carrier direction.
    Slab {
        n: usize,
        area: f64,
        depth: f64,
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        positions: Vec<[f64; 3]>,
    },
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

/// Full geometry description: layout plus transition parameters and
/// optional overrides for the derived descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    #[serde(flatten)]
    pub layout: Layout,
    #[serde(default = "one")]
    pub wavelength: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "default_axis")]
    pub k0_direction: [f64; 3],
    #[serde(default)]
    pub radius_override: Option<f64>,
    #[serde(default)]
    pub area_override: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl GeometrySpec {
    pub fn new(layout: Layout) -> Self {
        Self {
            layout,
            wavelength: 1.0,
            gamma: 1.0,
            k0_direction: default_axis(),
            radius_override: None,
            area_override: None,
        }
    }

    pub fn point_cluster(n: usize, spread: f64) -> Self {
        Self::new(Layout::PointCluster { n, spread, seed: 0 })
    }

    pub fn line(n: usize, spacing: f64) -> Self {
        Self::new(Layout::Line {
            n,
            spacing,
            axis: default_axis(),
        })
    }

    pub fn slab(n: usize, area: f64, depth: f64, seed: u64) -> Self {
        Self::new(Layout::Slab {
            n,
            area,
            depth,
            seed,
        })
    }

    pub fn explicit(positions: Vec<[f64; 3]>) -> Self {
        Self::new(Layout::Explicit { positions })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_area(mut self, area: f64) -> Self {
        self.area_override = Some(area);
        self
    }

    /// Replace the layout seed, if the layout has one.
    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self.layout {
            Layout::PointCluster { seed, .. } | Layout::Slab { seed, .. } => *seed = new_seed,
            _ => {}
        }
        self
    }

    pub fn atom_count(&self) -> usize {
        match &self.layout {
            Layout::PointCluster { n, .. } | Layout::Line { n, .. } | Layout::Slab { n, .. } => *n,
            Layout::Explicit { positions } => positions.len(),
        }
    }
}

/// Atom positions plus the transition parameters every engine needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomEnsemble {
    positions: Vec<Vec3>,
    lambda0: f64,
    k0_vec: Vec3,
    gamma: f64,
    radius: f64,
    area: f64,
}

impl AtomEnsemble {
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn wavelength(&self) -> f64 {
        self.lambda0
    }

    pub fn k0(&self) -> f64 {
        TAU / self.lambda0
    }

    pub fn k0_vec(&self) -> Vec3 {
        self.k0_vec
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Bounding radius about the centroid.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Transverse cross-section used by the large-sample rate formulas.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// `λ² / A`.
    pub fn lambda_sq_over_area(&self) -> f64 {
        self.lambda0 * self.lambda0 / self.area
    }

    /// `k0 · r_j` for every atom.
    pub fn carrier_phases(&self) -> Vec<f64> {
        self.positions.iter().map(|r| self.k0_vec.dot(r)).collect()
    }

    /// True when every atom sits at the same point.
    pub fn is_dicke_limit(&self) -> bool {
        let first = self.positions[0];
        self.positions.iter().all(|r| *r == first)
    }

    pub fn centroid(&self) -> Vec3 {
        self.positions.iter().sum::<Vec3>() / self.positions.len() as f64
    }

    /// Same positions, different single-atom rate.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self {
            gamma,
            ..self.clone()
        })
    }
}

/// Realize an ensemble from a geometry description.
pub fn make_ensemble(spec: &GeometrySpec) -> Result<AtomEnsemble> {
    if !(spec.wavelength > 0.0) {
        return Err(invalid(format!(
            "wavelength must be positive, got {}",
            spec.wavelength
        )));
    }
    if !(spec.gamma > 0.0) {
        return Err(invalid(format!(
            "gamma must be positive, got {}",
            spec.gamma
        )));
    }
    let dir = Vec3::from(spec.k0_direction);
    if !(dir.norm() > 0.0) || !dir.iter().all(|c| c.is_finite()) {
        return Err(invalid("k0_direction must be a finite non-zero vector"));
    }
    let k0_hat = dir.normalize();

    let positions = realize_positions(&spec.layout, &k0_hat)?;
    if positions.is_empty() {
        return Err(invalid("ensemble needs at least one atom"));
    }
    if positions.iter().any(|r| !r.iter().all(|c| c.is_finite())) {
        return Err(invalid("atom positions must be finite"));
    }

    let centroid = positions.iter().sum::<Vec3>() / positions.len() as f64;
    let computed_radius = positions
        .iter()
        .map(|r| (r - centroid).norm())
        .fold(0.0, f64::max);
    let radius = match spec.radius_override {
        Some(r) if r < computed_radius => {
            return Err(invalid(format!(
                "radius override {r} is smaller than the cloud extent {computed_radius}"
            )))
        }
        Some(r) => r,
        None => computed_radius,
    };

    let area = match (spec.area_override, &spec.layout) {
        (Some(a), _) if !(a > 0.0) => {
            return Err(invalid(format!("area override must be positive, got {a}")))
        }
        (Some(a), _) => a,
        (None, Layout::Slab { area, .. }) => *area,
        (None, _) => {
            let lambda_sq = spec.wavelength * spec.wavelength;
            transverse_area(&positions, &k0_hat).max(lambda_sq)
        }
    };

    Ok(AtomEnsemble {
        positions,
        lambda0: spec.wavelength,
        k0_vec: k0_hat * (TAU / spec.wavelength),
        gamma: spec.gamma,
        radius,
        area,
    })
}

fn realize_positions(layout: &Layout, k0_hat: &Vec3) -> Result<Vec<Vec3>> {
    match layout {
        Layout::PointCluster { n, spread, seed } => {
            require_count(*n)?;
            if !(*spread >= 0.0) {
                return Err(invalid(format!(
                    "spread must be non-negative, got {spread}"
                )));
            }
            if *spread == 0.0 {
                return Ok(vec![Vec3::zeros(); *n]);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let half = 0.5 * spread;
            Ok((0..*n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-half..half),
                        rng.random_range(-half..half),
                        rng.random_range(-half..half),
                    )
                })
                .collect())
        }
        Layout::Line { n, spacing, axis } => {
            require_count(*n)?;
            if !(*spacing > 0.0) {
                return Err(invalid(format!(
                    "line spacing must be positive, got {spacing}"
                )));
            }
            let axis = Vec3::from(*axis);
            if !(axis.norm() > 0.0) {
                return Err(invalid("line axis must be non-zero"));
            }
            let axis = axis.normalize();
            Ok((0..*n).map(|j| axis * (j as f64 * spacing)).collect())
        }
        Layout::Slab {
            n,
            area,
            depth,
            seed,
        } => {
            require_count(*n)?;
            if !(*area > 0.0) || !(*depth > 0.0) {
                return Err(invalid(format!(
                    "slab area and depth must be positive, got area={area}, depth={depth}"
                )));
            }
            let (u, v) = transverse_basis(k0_hat);
            let rho_max = (area / PI).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..*n)
                .map(|_| {
                    // uniform over the disk
                    let rho = rho_max * rng.random::<f64>().sqrt();
                    let phi = TAU * rng.random::<f64>();
                    let z = depth * rng.random::<f64>();
                    u * (rho * phi.cos()) + v * (rho * phi.sin()) + k0_hat * z
                })
                .collect())
        }
        Layout::Explicit { positions } => Ok(positions.iter().map(|p| Vec3::from(*p)).collect()),
    }
}

fn require_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("atom count must be positive"))
    } else {
        Ok(())
    }
}

/// Orthonormal pair spanning the plane perpendicular to `dir`.
pub(crate) fn transverse_basis(dir: &Vec3) -> (Vec3, Vec3) {
    let helper = if dir.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = dir.cross(&helper).normalize();
    let v = dir.cross(&u);
    (u, v)
}

/// Area of the smallest circle enclosing the positions projected onto the
/// plane perpendicular to `k0_hat`.
pub fn transverse_area(positions: &[Vec3], k0_hat: &Vec3) -> f64 {
    let (u, v) = transverse_basis(k0_hat);
    let pts: Vec<(f64, f64)> = positions.iter().map(|r| (r.dot(&u), r.dot(&v))).collect();
    let (_, radius) = min_enclosing_circle(&pts);
    PI * radius * radius
}

type Circle = ((f64, f64), f64);

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn contains(c: &Circle, p: (f64, f64)) -> bool {
    dist(c.0, p) <= c.1 * (1.0 + 1e-12) + 1e-14
}

fn circle_two(a: (f64, f64), b: (f64, f64)) -> Circle {
    let centre = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
    (centre, 0.5 * dist(a, b))
}

fn circle_three(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Circle {
    let (bx, by) = (b.0 - a.0, b.1 - a.1);
    let (cx, cy) = (c.0 - a.0, c.1 - a.1);
    let d = 2.0 * (bx * cy - by * cx);
    if d.abs() < 1e-300 {
        // collinear: widest pair
        let candidates = [circle_two(a, b), circle_two(a, c), circle_two(b, c)];
        return candidates
            .into_iter()
            .fold(candidates[0], |acc, x| if x.1 > acc.1 { x } else { acc });
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    let centre = (a.0 + ux, a.1 + uy);
    (centre, ux.hypot(uy))
}

/// Incremental Welzl construction of the minimal enclosing circle.
pub(crate) fn min_enclosing_circle(pts: &[(f64, f64)]) -> Circle {
    let Some(&first) = pts.first() else {
        return ((0.0, 0.0), 0.0);
    };
    let mut c: Circle = (first, 0.0);
    for i in 1..pts.len() {
        if contains(&c, pts[i]) {
            continue;
        }
        c = (pts[i], 0.0);
        for j in 0..i {
            if contains(&c, pts[j]) {
                continue;
            }
            c = circle_two(pts[i], pts[j]);
            for k in 0..j {
                if !contains(&c, pts[k]) {
                    c = circle_three(pts[i], pts[j], pts[k]);
                }
            }
        }
    }
    c
}

/// Disjoint atom bins with one real weight per bin.
///
/// Atom indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    bins: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl BinPartition {
    /// Checks that `bins` are disjoint and cover `0..n`.
    pub fn new(bins: Vec<Vec<usize>>, weights: Vec<f64>, n: usize) -> Result<Self> {
        if bins.len() != weights.len() {
            return Err(invalid(format!(
                "{} bins but {} weights",
                bins.len(),
                weights.len()
            )));
        }
        let mut seen = vec![false; n];
        for &j in bins.iter().flatten() {
            if j >= n {
                return Err(invalid(format!("atom index {j} out of range for N = {n}")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(invalid(format!("atom {j} appears in more than one bin")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(invalid(format!("atom {missing} is not assigned to a bin")));
        }
        Ok(Self { bins, weights })
    }

    /// One bin holding every atom, weight +1.
    pub fn single(n: usize) -> Self {
        Self {
            bins: vec![(0..n).collect()],
            weights: vec![1.0],
        }
    }

    pub fn bins(&self) -> &[Vec<usize>] {
        &self.bins
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom_count(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    /// `Σ_b w_b |bin_b|`; zero for the subradiant partitions.
    pub fn weight_sum(&self) -> f64 {
        self.bins
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| w * b.len() as f64)
            .sum()
    }

    /// Per-atom weights, indexed by atom.
    pub fn atom_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.atom_count()];
        for (bin, w) in self.bins.iter().zip(&self.weights) {
            for &j in bin {
                out[j] = *w;
            }
        }
        out
    }
}

fn equal_bins(n: usize, parts: usize, weights: &[f64]) -> BinPartition {
    let size = n / parts;
    BinPartition {
        bins: (0..parts)
            .map(|b| (b * size..(b + 1) * size).collect())
            .collect(),
        weights: weights.to_vec(),
    }
}

/// First and second half of the atoms with weights (+1, −1).
pub fn halves(ensemble: &AtomEnsemble) -> Result<BinPartition> {
    let n = ensemble.len();
    if n % 2 != 0 {
        return Err(invalid(format!("halves partition needs even N, got {n}")));
    }
    Ok(equal_bins(n, 2, &[1.0, -1.0]))
}

/// Three equal bins with weights (1, −2, 1).
pub fn thirds(ensemble: &AtomEnsemble) -> Result<BinPartition> {
    let n = ensemble.len();
    if n % 3 != 0 {
        return Err(invalid(format!(
            "thirds partition needs N divisible by 3, got {n}"
        )));
    }
    Ok(equal_bins(n, 3, &[1.0, -2.0, 1.0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn point_cluster_without_spread_sits_at_origin() {
        let ens = make_ensemble(&GeometrySpec::point_cluster(4, 0.0)).unwrap();
        assert_eq!(ens.len(), 4);
        assert!(ens.positions().iter().all(|r| *r == Vec3::zeros()));
        assert_eq!(ens.radius(), 0.0);
        assert!(ens.is_dicke_limit());
    }

    #[test]
    fn half_wavelength_line() {
        let ens = make_ensemble(&GeometrySpec::line(3, 0.5)).unwrap();
        let z: Vec<f64> = ens.positions().iter().map(|r| r.z).collect();
        assert_eq!(z, vec![0.0, 0.5, 1.0]);
        assert!((ens.k0_vec().norm() - TAU).abs() <= 1e-12 * TAU);
        assert!((ens.radius() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn slab_is_reproducible_and_inside() {
        let spec = GeometrySpec::slab(100, 25.0, 5.0, 7);
        let a = make_ensemble(&spec).unwrap();
        let b = make_ensemble(&spec).unwrap();
        assert_eq!(a.positions(), b.positions());
        let rho_max = (25.0 / PI).sqrt();
        for r in a.positions() {
            assert!(r.x.hypot(r.y) <= rho_max);
            assert!((0.0..=5.0).contains(&r.z));
        }
        assert_eq!(a.area(), 25.0);
        let c = make_ensemble(&spec.clone().with_seed(8)).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(
            make_ensemble(&GeometrySpec::point_cluster(0, 0.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(make_ensemble(&GeometrySpec::line(3, 0.0)).is_err());
        assert!(make_ensemble(&GeometrySpec::line(3, -1.0)).is_err());
        let mut spec = GeometrySpec::line(3, 0.5);
        spec.wavelength = 0.0;
        assert!(make_ensemble(&spec).is_err());
        assert!(make_ensemble(&GeometrySpec::line(3, 0.5).with_gamma(0.0)).is_err());
    }

    #[test]
    fn default_area_is_minimal_transverse_circle() {
        // square of side 2 in the xy-plane: circumscribed circle radius √2
        let spec = GeometrySpec::explicit(vec![
            [1.0, 1.0, 0.0],
            [-1.0, 1.0, 0.3],
            [1.0, -1.0, 0.7],
            [-1.0, -1.0, 0.1],
            [0.2, 0.1, 0.0],
        ]);
        let ens = make_ensemble(&spec).unwrap();
        assert!((ens.area() - 2.0 * PI).abs() < 1e-12);
        // degenerate transverse extent falls back to λ²
        let ens = make_ensemble(&GeometrySpec::line(5, 0.5)).unwrap();
        assert_eq!(ens.area(), 1.0);
    }

    #[test]
    fn halves_and_thirds() {
        let e4 = make_ensemble(&GeometrySpec::point_cluster(4, 0.0)).unwrap();
        let h = halves(&e4).unwrap();
        assert_eq!(h.bins(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(h.weights(), &[1.0, -1.0]);
        assert_eq!(h.weight_sum(), 0.0);

        let e2 = make_ensemble(&GeometrySpec::point_cluster(2, 0.0)).unwrap();
        assert_eq!(halves(&e2).unwrap().bins(), &[vec![0], vec![1]]);

        let e3 = make_ensemble(&GeometrySpec::point_cluster(3, 0.0)).unwrap();
        assert!(matches!(halves(&e3), Err(Error::InvalidParameter(_))));
        let t3 = thirds(&e3).unwrap();
        assert_eq!(t3.bins(), &[vec![0], vec![1], vec![2]]);
        assert_eq!(t3.weights(), &[1.0, -2.0, 1.0]);

        let e6 = make_ensemble(&GeometrySpec::point_cluster(6, 0.0)).unwrap();
        let t6 = thirds(&e6).unwrap();
        assert_eq!(t6.bins(), &[vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(t6.weight_sum(), 0.0);
        assert!(thirds(&e4).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(BinPartition::new(vec![vec![0, 1], vec![1, 2]], vec![1.0, -1.0], 3).is_err());
        assert!(BinPartition::new(vec![vec![0], vec![2]], vec![1.0, -1.0], 3).is_err());
        assert!(BinPartition::new(vec![vec![0], vec![5]], vec![1.0, -1.0], 2).is_err());
        assert!(BinPartition::new(vec![vec![0, 1]], vec![1.0, 2.0], 2).is_err());
        let p = BinPartition::new(vec![vec![2, 0], vec![1]], vec![1.0, -2.0], 3).unwrap();
        assert_eq!(p.atom_weights(), vec![1.0, -2.0, 1.0]);
        assert_eq!(BinPartition::single(5).weight_sum(), 5.0);
    }
}
