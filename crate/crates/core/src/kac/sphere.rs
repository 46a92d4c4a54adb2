//! Unit-sphere utilities: surface constants, uniform directions and
//! quadrature rules aligned with a given axis.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use smallvec::SmallVec;
use statrs::function::gamma::gamma;

use crate::quad::gauss_legendre;

pub type Vector = SmallVec<[f64; 3]>;

/// κ_d = ∫ |ê·ω| dω / 2 = π^{(d−1)/2} / Γ((d+1)/2), so λ(v,v*) = κ_d |v − v*|.
pub fn kappa(d: usize) -> f64 {
    PI.powf((d as f64 - 1.0) / 2.0) / gamma((d as f64 + 1.0) / 2.0)
}

/// Surface area of S^{d−1}.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// Uniformly distributed unit vector.
pub fn uniform_direction<R: Rng + ?Sized>(d: usize, rng: &mut R, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for x in out.iter_mut().take(d) {
            *x = rng.sample(StandardNormal);
            s += *x * *x;
        }
        if s > 1e-300 {
            let r = s.sqrt();
            out.iter_mut().for_each(|x| *x /= r);
            return;
        }
    }
}

/// Product quadrature on S^{d−1} in coordinates relative to an axis ê:
/// d = 2 uses composite Gauss–Legendre on the four quarter arcs starting
/// at ê; d = 3 uses Gauss–Legendre in z = ω·ê on [−1,0] and [0,1] times a
/// uniform rule in the azimuth. Both put the kink of |ê·ω| on a panel edge.
#[derive(Clone, Debug)]
pub struct SphereRule {
    dim: usize,
    /// d = 2: (cos θ, sin θ, w); d = 3: (z, φ, w)
    nodes: Vec<[f64; 3]>,
}

impl SphereRule {
    /// `per_panel` Gauss nodes per quarter arc (d = 2) or per hemisphere
    /// (d = 3, with `2·per_panel` azimuthal nodes).
    pub fn new(dim: usize, per_panel: usize) -> Self {
        let mut nodes = Vec::new();
        match dim {
            2 => {
                for q in 0..4 {
                    let a = q as f64 * PI / 2.0;
                    let (x, w) = gauss_legendre(per_panel, a, a + PI / 2.0);
                    for (t, w) in x.into_iter().zip(w) {
                        nodes.push([t.cos(), t.sin(), w]);
                    }
                }
            }
            3 => {
                let nphi = 2 * per_panel;
                let dphi = 2.0 * PI / nphi as f64;
                for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0)] {
                    let (z, wz) = gauss_legendre(per_panel, lo, hi);
                    for (z, wz) in z.into_iter().zip(wz) {
                        for k in 0..nphi {
                            nodes.push([z, (k as f64 + 0.5) * dphi, wz * dphi]);
                        }
                    }
                }
            }
            _ => panic!("sphere rules exist for d = 2, 3"),
        }
        Self { dim, nodes }
    }

    /// Default rule: 256 nodes (d = 2) or 576 nodes (d = 3).
    pub fn default_for(dim: usize) -> &'static SphereRule {
        static R2: OnceLock<SphereRule> = OnceLock::new();
        static R3: OnceLock<SphereRule> = OnceLock::new();
        match dim {
            2 => R2.get_or_init(|| SphereRule::new(2, 64)),
            3 => R3.get_or_init(|| SphereRule::new(3, 12)),
            _ => panic!("sphere rules exist for d = 2, 3"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫ f(ω) dω with the rule rotated so its reference axis is `axis`
    /// (a unit vector).
    pub fn integrate(&self, axis: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut om = [0.0; 3];
        let mut s = 0.0;
        match self.dim {
            2 => {
                let (ex, ey) = (axis[0], axis[1]);
                for &[c, sn, w] in &self.nodes {
                    om[0] = c * ex - sn * ey;
                    om[1] = c * ey + sn * ex;
                    s += w * f(&om[..2]);
                }
            }
            _ => {
                let (p, q) = orthonormal_pair(axis);
                for &[z, phi, w] in &self.nodes {
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let (sp, cp) = phi.sin_cos();
                    for a in 0..3 {
                        om[a] = z * axis[a] + r * (cp * p[a] + sp * q[a]);
                    }
                    s += w * f(&om);
                }
            }
        }
        s
    }
}

/// Two unit vectors completing `e` to an orthonormal basis of R³.
pub fn orthonormal_pair(e: &[f64]) -> ([f64; 3], [f64; 3]) {
    let helper = if e[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = helper[0] * e[0] + helper[1] * e[1] + helper[2] * e[2];
    let mut p = [helper[0] - dot * e[0], helper[1] - dot * e[1], helper[2] - dot * e[2]];
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    p.iter_mut().for_each(|x| *x /= n);
    let q = [e[1] * p[2] - e[2] * p[1], e[2] * p[0] - e[0] * p[2], e[0] * p[1] - e[1] * p[0]];
    (p, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((kappa(2) - 2.0).abs() < 1e-14);
        assert!((kappa(3) - PI).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn rules_integrate_constants_and_kinks() {
        for d in [2, 3] {
            let rule = SphereRule::default_for(d);
            let axis: Vec<f64> = if d == 2 { vec![0.6, 0.8] } else { vec![0.48, 0.6, 0.64] };
            let area = rule.integrate(&axis, |_| 1.0);
            assert!((area - sphere_area(d)).abs() < 1e-12);
            let k = rule.integrate(&axis, |w| w.iter().zip(&axis).map(|(a, b)| a * b).sum::<f64>().abs()) / 2.0;
            assert!((k - kappa(d)).abs() < 1e-12, "d={d}: {k}");
        }
    }
}
