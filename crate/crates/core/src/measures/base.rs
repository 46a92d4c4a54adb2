//! Base measures, macrostates and tilt vectors.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::{GridDensity, GridSpec};
use crate::error::{invalid, Error, Result};
use crate::vecops::{norm2, zeta0};

/// Declared quadrature tolerance.
pub const TOL_QUAD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Centered isotropic Gaussian with per-axis standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// Density given pointwise and normalised on its grid.
    CustomGrid,
}

/// Energy per particle `e` and momentum per particle `u`, with e > |u|²/2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    e: f64,
    u: Vec<f64>,
}

impl MacroState {
    pub fn new(e: f64, u: Vec<f64>) -> Result<Self> {
        let x = Self { e, u };
        if !x.is_admissible() {
            return invalid(format!("macrostate (e = {e}, u = {:?}) violates e > |u|^2/2", x.u));
        }
        Ok(x)
    }

    /// Build without checking admissibility; solvers re-check.
    pub fn new_unchecked(e: f64, u: Vec<f64>) -> Self {
        Self { e, u }
    }

    /// Zero momentum in dimension `d`.
    pub fn at_rest(e: f64, d: usize) -> Result<Self> {
        Self::new(e, vec![0.0; d])
    }

    pub fn e(&self) -> f64 {
        self.e
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn dim(&self) -> usize {
        self.u.len()
    }
    pub fn internal_energy(&self) -> f64 {
        self.e - zeta0(&self.u)
    }
    pub fn is_admissible(&self) -> bool {
        self.e.is_finite() && self.u.iter().all(|x| x.is_finite()) && self.internal_energy() > 0.0
    }
    /// (e, u) as one vector.
    pub fn as_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.u.len() + 1);
        v.push(self.e);
        v.extend_from_slice(&self.u);
        v
    }
}

/// Tilt (γ₀, γ) conjugate to ζ = (|v|²/2, v).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltVector {
    pub gamma0: f64,
    pub gamma: Vec<f64>,
}

impl TiltVector {
    pub fn zero(d: usize) -> Self {
        Self { gamma0: 0.0, gamma: vec![0.0; d] }
    }
    pub fn as_vec(&self) -> Vec<f64> {
        let mut v = vec![self.gamma0];
        v.extend_from_slice(&self.gamma);
        v
    }
    pub fn from_slice(x: &[f64]) -> Self {
        Self { gamma0: x[0], gamma: x[1..].to_vec() }
    }
    /// γ·ζ(v).
    pub fn pair(&self, v: &[f64]) -> f64 {
        self.gamma0 * zeta0(v) + self.gamma.iter().zip(v).map(|(g, x)| g * x).sum::<f64>()
    }
}

/// log-MGF with the mean and covariance of ζ under the tilted measure.
#[derive(Clone, Debug)]
pub struct TiltStats {
    pub log_mgf: f64,
    /// Mean of (ζ₀, v).
    pub mean: Vec<f64>,
    /// Covariance of (ζ₀, v), row-major (d+1)×(d+1).
    pub cov: Vec<f64>,
}

type LogDensity = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Reference velocity measure m with its tail index γ₀* and quadrature grid.
#[derive(Clone)]
pub struct BaseMeasure {
    family: Family,
    gamma0_star: f64,
    grid: GridSpec,
    log_density: Arc<LogDensity>,
    log_values: Arc<[f64]>,
}

impl fmt::Debug for BaseMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BaseMeasure")
            .field("family", &self.family)
            .field("gamma0_star", &self.gamma0_star)
            .field("grid", &self.grid.header())
            .finish()
    }
}

impl BaseMeasure {
    /// N(0, σ² I) on the given grid; γ₀* = 1/σ².
    pub fn gaussian(sigma: f64, grid: GridSpec) -> Result<Self> {
        if !(sigma > 0.0) {
            return invalid("sigma must be positive");
        }
        let d = grid.dim() as f64;
        let s2 = sigma * sigma;
        let c = -0.5 * d * (2.0 * PI * s2).ln();
        let log_density: Arc<LogDensity> = Arc::new(move |v: &[f64]| c - norm2(v) / (2.0 * s2));
        let log_values: Arc<[f64]> = (0..grid.len()).map(|k| log_density(grid.node(k))).collect();
        let m = Self { family: Family::Gaussian { sigma }, gamma0_star: 1.0 / s2, grid, log_density, log_values };
        let mass = m.as_grid_density().mass();
        if (mass - 1.0).abs() > TOL_QUAD {
            return invalid(format!("grid too small for the Gaussian: quadrature mass {mass}"));
        }
        Ok(m)
    }

    /// Unit Gaussian on the default 2-d grid.
    pub fn standard_2d() -> Self {
        Self::gaussian(1.0, GridSpec::default_2d()).expect("valid default measure")
    }

    /// Measure with the given unnormalised log-density, normalised by quadrature
    /// on `grid`. `gamma0_star` is declared by the caller (may be +∞).
    pub fn custom(
        grid: GridSpec,
        gamma0_star: f64,
        log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(gamma0_star > 0.0) {
            return invalid("gamma0* must be positive");
        }
        let raw: Vec<f64> = (0..grid.len()).map(|k| log_density(grid.node(k))).collect();
        if raw.iter().any(|x| !x.is_finite()) {
            return invalid("density must be strictly positive and finite at every grid node");
        }
        let mx = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = raw.iter().zip(grid.weights()).map(|(l, w)| w * (l - mx).exp()).sum();
        let lz = mx + z.ln();
        let log_values: Arc<[f64]> = raw.iter().map(|l| l - lz).collect();
        let f = Arc::new(move |v: &[f64]| log_density(v) - lz);
        Ok(Self { family: Family::CustomGrid, gamma0_star, grid, log_density: f, log_values })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn family(&self) -> Family {
        self.family
    }
    pub fn gamma0_star(&self) -> f64 {
        self.gamma0_star
    }
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn density(&self, v: &[f64]) -> f64 {
        (self.log_density)(v).exp()
    }
    pub fn log_density(&self, v: &[f64]) -> f64 {
        (self.log_density)(v)
    }
    /// Normalised log-density at the grid nodes.
    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn as_grid_density(&self) -> GridDensity {
        GridDensity::from_raw(self.grid.clone(), self.log_values.iter().map(|l| l.exp()).collect())
    }

    /// The same measure carried by another grid (Gaussian family only).
    pub fn regrid(&self, grid: GridSpec) -> Result<Self> {
        match self.family {
            Family::Gaussian { sigma } => Self::gaussian(sigma, grid),
            Family::CustomGrid => invalid("custom measures are tied to their grid"),
        }
    }

    /// (m(ζ₀), m(ζ)).
    pub fn mean_macro(&self) -> MacroState {
        match self.family {
            Family::Gaussian { sigma } => {
                MacroState::new_unchecked(0.5 * self.dim() as f64 * sigma * sigma, vec![0.0; self.dim()])
            }
            Family::CustomGrid => {
                let g = self.as_grid_density();
                MacroState::new_unchecked(g.energy(), g.momentum())
            }
        }
    }

    fn check_tilt(&self, g: &TiltVector) -> Result<()> {
        if g.gamma.len() != self.dim() {
            return invalid("tilt dimension mismatch");
        }
        if !(g.gamma0 < self.gamma0_star) {
            return Err(Error::TiltOutOfRange { gamma0: g.gamma0, gamma0_star: self.gamma0_star });
        }
        Ok(())
    }

    /// log ∫ m(dv) exp(γ₀|v|²/2 + γ·v); closed form for Gaussians.
    pub fn log_mgf(&self, g: &TiltVector) -> Result<f64> {
        Ok(self.tilt_stats(g)?.log_mgf)
    }

    /// Grid quadrature version of [`Self::log_mgf`] for every family.
    pub fn log_mgf_grid(&self, g: &TiltVector) -> Result<f64> {
        Ok(self.tilt_stats_grid(g)?.log_mgf)
    }

    pub fn tilt_stats(&self, g: &TiltVector) -> Result<TiltStats> {
        self.check_tilt(g)?;
        match self.family {
            Family::Gaussian { sigma } => Ok(gaussian_stats(sigma, g)),
            Family::CustomGrid => self.tilt_stats_grid(g),
        }
    }

    pub fn tilt_stats_grid(&self, g: &TiltVector) -> Result<TiltStats> {
        self.check_tilt(g)?;
        let logs: Vec<f64> = (0..self.grid.len())
            .map(|k| self.log_values[k] + self.grid.weight(k).ln() + g.pair(self.grid.node(k)))
            .collect();
        feature_stats(&self.grid, &logs)
    }

    /// Log-MGF along a ladder of energy tilts approaching γ₀*; errors unless
    /// the ladder values increase.
    pub fn ladder_check(&self) -> Result<Vec<(f64, f64)>> {
        let ladder: Vec<f64> = if self.gamma0_star.is_finite() {
            (0..8).map(|k| self.gamma0_star * (1.0 - 0.5f64.powi(k))).collect()
        } else {
            (0..8).map(|k| k as f64 * 0.5).collect()
        };
        let mut out = Vec::new();
        for g0 in ladder {
            let t = TiltVector { gamma0: g0, gamma: vec![0.0; self.dim()] };
            out.push((g0, self.log_mgf(&t)?));
        }
        if out.windows(2).any(|w| w[1].1 <= w[0].1) {
            return invalid("log-MGF does not increase along the energy-tilt ladder");
        }
        Ok(out)
    }
}

fn gaussian_stats(sigma: f64, g: &TiltVector) -> TiltStats {
    let d = g.gamma.len();
    let a = 1.0 / (sigma * sigma) - g.gamma0;
    let s2 = 1.0 / a;
    let mu: Vec<f64> = g.gamma.iter().map(|x| x * s2).collect();
    let mu2 = norm2(&mu);
    let log_mgf = -0.5 * d as f64 * (sigma * sigma * a).ln() + 0.5 * norm2(&g.gamma) / a;
    let mut mean = vec![0.5 * d as f64 * s2 + 0.5 * mu2];
    mean.extend_from_slice(&mu);
    let n = d + 1;
    let mut cov = vec![0.0; n * n];
    cov[0] = 0.5 * d as f64 * s2 * s2 + mu2 * s2;
    for k in 0..d {
        cov[k + 1] = mu[k] * s2;
        cov[(k + 1) * n] = mu[k] * s2;
        cov[(k + 1) * n + k + 1] = s2;
    }
    TiltStats { log_mgf, mean, cov }
}

/// Log-partition, mean and covariance of ζ for node log-weights `logs`
/// (weights already folded in).
pub(crate) fn feature_stats(grid: &GridSpec, logs: &[f64]) -> Result<TiltStats> {
    let d = grid.dim();
    let n = d + 1;
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return Err(Error::QuadratureOverflow("tilted integrand is not finite".into()));
    }
    let mut z = 0.0;
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n * n];
    let mut feat = vec![0.0; n];
    for (k, &l) in logs.iter().enumerate() {
        let p = (l - mx).exp();
        if p == 0.0 {
            continue;
        }
        let v = grid.node(k);
        feat[0] = zeta0(v);
        feat[1..].copy_from_slice(v);
        z += p;
        for a in 0..n {
            s1[a] += p * feat[a];
            for b in a..n {
                s2[a * n + b] += p * feat[a] * feat[b];
            }
        }
    }
    let mean: Vec<f64> = s1.iter().map(|x| x / z).collect();
    let mut cov = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let c = s2[a * n + b] / z - mean[a] * mean[b];
            cov[a * n + b] = c;
            cov[b * n + a] = c;
        }
    }
    let log_mgf = mx + z.ln();
    if !log_mgf.is_finite() {
        return Err(Error::QuadratureOverflow("log-partition is not finite".into()));
    }
    Ok(TiltStats { log_mgf, mean, cov })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_log_mgf_examples() {
        let m = BaseMeasure::standard_2d();
        assert_eq!(m.log_mgf(&TiltVector::zero(2)).unwrap(), 0.0);
        let g = TiltVector { gamma0: 0.5, gamma: vec![0.0, 0.0] };
        assert!((m.log_mgf(&g).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!((m.log_mgf_grid(&g).unwrap() - 2f64.ln()).abs() < TOL_QUAD);
        let edge = TiltVector { gamma0: 1.0, gamma: vec![0.0, 0.0] };
        assert!(matches!(m.log_mgf(&edge), Err(Error::TiltOutOfRange { .. })));
    }

    #[test]
    fn closed_form_matches_grid_stats() {
        let m = BaseMeasure::standard_2d();
        let g = TiltVector { gamma0: 0.3, gamma: vec![0.4, -0.2] };
        let a = m.tilt_stats(&g).unwrap();
        let b = m.tilt_stats_grid(&g).unwrap();
        assert!((a.log_mgf - b.log_mgf).abs() < TOL_QUAD);
        for (x, y) in a.mean.iter().zip(&b.mean).chain(a.cov.iter().zip(&b.cov)) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn custom_measure_is_normalised_and_ladder_increases() {
        let grid = GridSpec::new(2, 6.0, 61).unwrap();
        let m = BaseMeasure::custom(grid, 1.0, |v| -norm2(v) / 2.0 - 0.1 * norm2(v).powi(2) / 4.0).unwrap();
        assert!((m.as_grid_density().mass() - 1.0).abs() < 1e-12);
        assert!(m.ladder_check().is_ok());
        assert!(BaseMeasure::custom(GridSpec::new(2, 3.0, 5).unwrap(), 1.0, |_| f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn macrostate_membership() {
        assert!(MacroState::new(0.4, vec![1.0, 0.0]).is_err());
        let x = MacroState::new(1.5, vec![0.3, 0.0]).unwrap();
        assert!((x.internal_energy() - 1.455).abs() < 1e-14);
    }
}
