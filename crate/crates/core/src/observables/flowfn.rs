//! Test functions of a collision (t; v, v*, v', v*').

use std::sync::Arc;

use crate::kac::pair_rate;
use crate::vecops::dist;

/// Bounded function of a collision, symmetric under v ↔ v* and v' ↔ v*'.
pub trait FlowTestFunction: Send + Sync {
    fn eval(&self, t: f64, v: &[f64], vstar: &[f64], vp: &[f64], vstarp: &[f64]) -> f64;
    /// Declared sup |F|.
    fn bound(&self) -> f64;
    fn time_homogeneous(&self) -> bool {
        true
    }
    /// λ^F in closed form, when known.
    fn lambda_closed_form(&self, _t: f64, _v: &[f64], _vstar: &[f64]) -> Option<f64> {
        None
    }
}

/// F ≡ c.
#[derive(Clone, Copy, Debug)]
pub struct ConstantFlow(pub f64);

impl FlowTestFunction for ConstantFlow {
    fn eval(&self, _: f64, _: &[f64], _: &[f64], _: &[f64], _: &[f64]) -> f64 {
        self.0
    }
    fn bound(&self) -> f64 {
        self.0.abs()
    }
    fn lambda_closed_form(&self, _t: f64, v: &[f64], vstar: &[f64]) -> Option<f64> {
        Some(self.0.exp() * pair_rate(v, vstar))
    }
}

type CollisionFn = dyn Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync;

/// F(t, v, v*, v') given by a closure; v*' is implied by momentum
/// conservation and not passed.
#[derive(Clone)]
pub struct FnFlow {
    pub f: Arc<CollisionFn>,
    pub bound: f64,
    pub homogeneous: bool,
}

impl FnFlow {
    /// Time-independent closure (its `t` argument is ignored by callers
    /// that rely on homogeneity).
    pub fn homogeneous(bound: f64, f: impl Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), bound, homogeneous: true }
    }
}

impl FlowTestFunction for FnFlow {
    fn eval(&self, t: f64, v: &[f64], vstar: &[f64], vp: &[f64], _vstarp: &[f64]) -> f64 {
        (self.f)(t, v, vstar, vp)
    }
    fn bound(&self) -> f64 {
        self.bound
    }
    fn time_homogeneous(&self) -> bool {
        self.homogeneous
    }
}

/// F that depends only on the incoming pair through a symmetric function
/// h(v, v*); then λ^F = e^{h} λ in closed form.
#[derive(Clone)]
pub struct PairFlow {
    pub h: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    pub bound: f64,
}

impl FlowTestFunction for PairFlow {
    fn eval(&self, _t: f64, v: &[f64], vstar: &[f64], _: &[f64], _: &[f64]) -> f64 {
        (self.h)(v, vstar)
    }
    fn bound(&self) -> f64 {
        self.bound
    }
    fn lambda_closed_form(&self, _t: f64, v: &[f64], vstar: &[f64]) -> Option<f64> {
        Some((self.h)(v, vstar).exp() * pair_rate(v, vstar))
    }
}

/// F = log(1/B) clipped to [−clip, clip]; B is recovered from the collision
/// as ½|v' − v|.
#[derive(Clone, Copy, Debug)]
pub struct ClippedLogInverseB {
    pub clip: f64,
}

impl FlowTestFunction for ClippedLogInverseB {
    fn eval(&self, _t: f64, v: &[f64], _vstar: &[f64], vp: &[f64], _: &[f64]) -> f64 {
        let b = 0.5 * dist(vp, v);
        if b > 0.0 {
            (-b.ln()).clamp(-self.clip, self.clip)
        } else {
            self.clip
        }
    }
    fn bound(&self) -> f64 {
        self.clip
    }
}
