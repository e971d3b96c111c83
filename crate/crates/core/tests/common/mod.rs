#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

/// `(1/4π) ∮ e^{i k·r} dΩ` by composite Simpson in θ (about the axis `axis`)
/// and the trapezoid rule in φ.
pub fn solid_angle_average(r: [f64; 3], k0: f64) -> f64 {
    let (n_theta, n_phi) = (20_000usize, 128usize);
    let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let u = [r[0] / norm, r[1] / norm, r[2] / norm];
    // integrate about a tilted polar axis so the integrand depends on φ
    let axis = {
        let a: [f64; 3] = [0.3, -0.5, 0.81];
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        [a[0] / n, a[1] / n, a[2] / n]
    };
    let e1 = {
        let t: [f64; 3] = [axis[1], -axis[0], 0.0];
        let n = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [t[0] / n, t[1] / n, 0.0]
    };
    let e2 = [
        axis[1] * e1[2] - axis[2] * e1[1],
        axis[2] * e1[0] - axis[0] * e1[2],
        axis[0] * e1[1] - axis[1] * e1[0],
    ];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (ua, u1, u2) = (dot(u, axis), dot(u, e1), dot(u, e2));
    let h = PI / n_theta as f64;
    let mut total = 0.0;
    for i in 0..=n_theta {
        let th = i as f64 * h;
        let (st, ct) = th.sin_cos();
        let mut ring = 0.0;
        for j in 0..n_phi {
            let ph = 2.0 * PI * j as f64 / n_phi as f64;
            let proj = ct * ua + st * (ph.cos() * u1 + ph.sin() * u2);
            ring += (k0 * norm * proj).cos();
        }
        ring *= 2.0 * PI / n_phi as f64;
        let w = if i == 0 || i == n_theta {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += w * ring * st;
    }
    total * h / 3.0 / (4.0 * PI)
}

/// Two-excitation expansion written out bit by bit.
pub fn expansion_by_hand(n: usize) -> (Vec<C64>, f64) {
    let half = n / 2;
    let mut v = vec![C64::new(0.0, 0.0); 1 << n];
    let w = 1.0 / (2.0f64.sqrt() * ((n - 2) as f64).sqrt());
    for j in 0..half {
        for jp in half..n {
            for k in (0..n).filter(|&k| k != j && k != jp) {
                v[1 << j | 1 << k] += w;
                v[1 << jp | 1 << k] -= w;
            }
        }
    }
    let norm_sq = v.iter().map(|c| c.norm_sqr()).sum();
    (v, norm_sq)
}
