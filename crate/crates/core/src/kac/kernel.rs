//! Collision kernels for the thinning simulator.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use smallvec::SmallVec;

use super::collision::hard_sphere_b;
use super::sphere::{kappa, sphere_area, uniform_direction, SphereRule, Vector};
use crate::error::{Error, Result};
use crate::vecops::dist;

/// A possibly time-dependent kernel B̃(t, v, v*, ω) with a uniform bound on
/// its total rate ∫B̃ dω.
pub trait CollisionKernel: Send + Sync {
    fn name(&self) -> String;

    fn rate_density(&self, t: f64, v: &[f64], vstar: &[f64], omega: &[f64]) -> f64;

    /// An upper bound of `rate_density` over ω at fixed (t, v, v*).
    fn density_bound(&self, t: f64, v: &[f64], vstar: &[f64]) -> f64;

    /// sup over (t, v, v*) of the total rate.
    fn lambda_bound(&self) -> f64;

    /// ∫ B̃ dω; sphere quadrature unless overridden.
    fn total_rate(&self, t: f64, v: &[f64], vstar: &[f64]) -> f64 {
        let rule = SphereRule::default_for(v.len());
        let axis = relative_axis(v, vstar);
        rule.integrate(&axis, |om| self.rate_density(t, v, vstar, om))
    }

    /// ω with density ∝ B̃(t, v, v*, ·), by rejection from the uniform law.
    fn sample_direction(&self, t: f64, v: &[f64], vstar: &[f64], rng: &mut dyn rand::RngCore) -> Result<Vector> {
        let bound = self.density_bound(t, v, vstar);
        if !(bound > 0.0) {
            return Err(Error::DegeneratePair);
        }
        let mut om: Vector = SmallVec::from_elem(0.0, v.len());
        loop {
            uniform_direction(v.len(), rng, &mut om);
            if rng.random::<f64>() * bound < self.rate_density(t, v, vstar, &om) {
                return Ok(om);
            }
        }
    }
}

impl fmt::Debug for dyn CollisionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Unit vector along v − v*, or the first axis when they coincide.
pub(crate) fn relative_axis(v: &[f64], vstar: &[f64]) -> Vector {
    let mut w: Vector = v.iter().zip(vstar).map(|(a, b)| a - b).collect();
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        w.iter_mut().for_each(|x| *x /= n);
    } else {
        w.iter_mut().for_each(|x| *x = 0.0);
        w[0] = 1.0;
    }
    w
}

/// Hard spheres with an optional declared rate bound (for thinning).
#[derive(Clone, Debug)]
pub struct HardSphere {
    pub bound: f64,
}

impl CollisionKernel for HardSphere {
    fn name(&self) -> String {
        "hard_sphere".into()
    }
    fn rate_density(&self, _t: f64, v: &[f64], vstar: &[f64], omega: &[f64]) -> f64 {
        hard_sphere_b(v, vstar, omega)
    }
    fn density_bound(&self, _t: f64, v: &[f64], vstar: &[f64]) -> f64 {
        0.5 * dist(v, vstar)
    }
    fn lambda_bound(&self) -> f64 {
        self.bound
    }
    fn total_rate(&self, _t: f64, v: &[f64], vstar: &[f64]) -> f64 {
        kappa(v.len()) * dist(v, vstar)
    }
}

/// B ∧ c.
#[derive(Clone, Debug)]
pub struct Truncated {
    pub cap: f64,
    pub dim: usize,
}

impl CollisionKernel for Truncated {
    fn name(&self) -> String {
        format!("truncated(cap={})", self.cap)
    }
    fn rate_density(&self, _t: f64, v: &[f64], vstar: &[f64], omega: &[f64]) -> f64 {
        hard_sphere_b(v, vstar, omega).min(self.cap)
    }
    fn density_bound(&self, _t: f64, v: &[f64], vstar: &[f64]) -> f64 {
        (0.5 * dist(v, vstar)).min(self.cap)
    }
    fn lambda_bound(&self) -> f64 {
        self.cap * sphere_area(self.dim)
    }
    fn total_rate(&self, t: f64, v: &[f64], vstar: &[f64]) -> f64 {
        if 0.5 * dist(v, vstar) <= self.cap {
            kappa(v.len()) * dist(v, vstar)
        } else {
            let rule = SphereRule::default_for(v.len());
            rule.integrate(&relative_axis(v, vstar), |om| self.rate_density(t, v, vstar, om))
        }
    }
}

/// Velocity-independent kernel b(ω) = b₀(1 + a·ω₁²).
#[derive(Clone, Debug)]
pub struct Maxwell {
    pub b0: f64,
    pub a: f64,
    pub dim: usize,
}

impl Maxwell {
    pub fn total(&self) -> f64 {
        self.b0 * sphere_area(self.dim) * (1.0 + self.a / self.dim as f64)
    }
}

impl CollisionKernel for Maxwell {
    fn name(&self) -> String {
        format!("maxwell(b0={},a={})", self.b0, self.a)
    }
    fn rate_density(&self, _t: f64, _v: &[f64], _vstar: &[f64], omega: &[f64]) -> f64 {
        self.b0 * (1.0 + self.a * omega[0] * omega[0])
    }
    fn density_bound(&self, _t: f64, _v: &[f64], _vstar: &[f64]) -> f64 {
        self.b0 * (1.0 + self.a.max(0.0))
    }
    fn lambda_bound(&self) -> f64 {
        self.total()
    }
    fn total_rate(&self, _t: f64, _v: &[f64], _vstar: &[f64]) -> f64 {
        self.total()
    }
}

/// (1 + ε)·B, with a rate bound valid for configurations of total energy
/// at most `total_energy`: |v − v*|² ≤ 4·E_total.
#[derive(Clone, Debug)]
pub struct ScaledHardSphere {
    pub eps: f64,
    pub dim: usize,
    pub total_energy: f64,
}

impl CollisionKernel for ScaledHardSphere {
    fn name(&self) -> String {
        format!("scaled_hard_sphere(eps={})", self.eps)
    }
    fn rate_density(&self, _t: f64, v: &[f64], vstar: &[f64], omega: &[f64]) -> f64 {
        (1.0 + self.eps) * hard_sphere_b(v, vstar, omega)
    }
    fn density_bound(&self, _t: f64, v: &[f64], vstar: &[f64]) -> f64 {
        (1.0 + self.eps) * 0.5 * dist(v, vstar)
    }
    fn lambda_bound(&self) -> f64 {
        (1.0 + self.eps) * kappa(self.dim) * 2.0 * self.total_energy.sqrt()
    }
    fn total_rate(&self, _t: f64, v: &[f64], vstar: &[f64]) -> f64 {
        (1.0 + self.eps) * kappa(v.len()) * dist(v, vstar)
    }
}

type DensityFn = dyn Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync;
type BoundFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;

/// Kernel given by closures.
#[derive(Clone)]
pub struct FnKernel {
    pub name: String,
    pub density: Arc<DensityFn>,
    pub density_bound: Arc<BoundFn>,
    pub lambda_bound: f64,
}

impl CollisionKernel for FnKernel {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn rate_density(&self, t: f64, v: &[f64], vstar: &[f64], omega: &[f64]) -> f64 {
        (self.density)(t, v, vstar, omega)
    }
    fn density_bound(&self, t: f64, v: &[f64], vstar: &[f64]) -> f64 {
        (self.density_bound)(t, v, vstar)
    }
    fn lambda_bound(&self) -> f64 {
        self.lambda_bound
    }
}

/// Kernel choice for [`super::simulate`].
#[derive(Clone)]
pub enum KernelSpec {
    HardSphere,
    Perturbed(Arc<dyn CollisionKernel>),
}

impl KernelSpec {
    pub fn name(&self) -> String {
        match self {
            KernelSpec::HardSphere => "hard_sphere".into(),
            KernelSpec::Perturbed(k) => k.name(),
        }
    }
}
