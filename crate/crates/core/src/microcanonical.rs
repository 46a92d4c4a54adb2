//! Configurations on the energy/momentum shell: exact Gaussian sampling,
//! collision-move Metropolis chains for general base measures, and
//! equivalence-of-ensembles diagnostics.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kac::{collide_in_place, uniform_direction};
use crate::measures::{tilt_measure, BaseMeasure, GridDensity, GridSpec, MacroState};
use crate::vecops::{norm, zeta0};

/// N velocities in R^d, stored contiguously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    dim: usize,
    velocities: Vec<f64>,
}

impl Configuration {
    pub fn new(dim: usize, velocities: Vec<f64>) -> Result<Self> {
        if dim == 0 || !velocities.len().is_multiple_of(dim) || velocities.len() / dim < 2 {
            return invalid("a configuration needs N >= 2 particles of equal dimension");
        }
        if velocities.iter().any(|x| !x.is_finite()) {
            return invalid("velocities must be finite");
        }
        Ok(Self { dim, velocities })
    }

    pub fn from_vectors(vs: &[Vec<f64>]) -> Result<Self> {
        let dim = vs.first().map_or(0, |v| v.len());
        if vs.iter().any(|v| v.len() != dim) {
            return invalid("ragged velocity list");
        }
        Self::new(dim, vs.concat())
    }

    pub fn n(&self) -> usize {
        self.velocities.len() / self.dim
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn particle(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }
    pub fn particle_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.velocities[i * self.dim..(i + 1) * self.dim]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.velocities
    }
    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.velocities.chunks_exact(self.dim)
    }

    pub fn total_energy(&self) -> f64 {
        self.particles().map(zeta0).sum()
    }
    pub fn total_momentum(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for v in self.particles() {
            p.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        p
    }
    /// (1/N)Σζ₀(v_i).
    pub fn energy(&self) -> f64 {
        self.total_energy() / self.n() as f64
    }
    /// (1/N)Σv_i.
    pub fn momentum(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.total_momentum().into_iter().map(|p| p / n).collect()
    }
    /// (1/N)Σφ(v_i).
    pub fn mean_of(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        self.particles().map(phi).sum::<f64>() / self.n() as f64
    }

    /// Binary form: little-endian u64 N, u64 d, then N·d f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.velocities.len());
        out.extend_from_slice(&(self.n() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for v in &self.velocities {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Parse("configuration header truncated".into()));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        let (n, d) = (word(0) as usize, word(1) as usize);
        if bytes.len() != 16 + 8 * n * d {
            return Err(Error::Parse("configuration length does not match its header".into()));
        }
        let vals = (0..n * d).map(|k| f64::from_le_bytes(bytes[16 + 8 * k..24 + 8 * k].try_into().expect("8 bytes")));
        Self::new(d, vals.collect())
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// JSON form, offered for N ≤ 100.
    pub fn to_json(&self) -> Result<String> {
        if self.n() > 100 {
            return invalid("JSON output is limited to N <= 100");
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        Self::new(c.dim, c.velocities)
    }
}

/// (|(1/N)Σζ₀ − e|, ‖(1/N)Σv − u‖).
pub fn constraint_residual(c: &Configuration, x: &MacroState) -> (f64, f64) {
    let m = c.momentum();
    let du = m.iter().zip(x.u()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    ((c.energy() - x.e()).abs(), du)
}

/// Recenter the momentum to u and rescale the internal energy to U. This is
/// the map that turns i.i.d. Gaussian draws into an exact sample of the
/// Gaussian microcanonical ensemble.
pub fn project_to_shell(c: &mut Configuration, x: &MacroState) -> Result<()> {
    let n = c.n() as f64;
    let mean = c.momentum();
    let d = c.dim();
    let mut s = 0.0;
    for i in 0..c.n() {
        let v = c.particle_mut(i);
        for a in 0..d {
            v[a] -= mean[a];
        }
        s += zeta0(v);
    }
    if !(s > 0.0) {
        return Err(Error::DegenerateSample);
    }
    let r = (n * x.internal_energy() / s).sqrt();
    for i in 0..c.n() {
        let v = c.particle_mut(i);
        for a in 0..d {
            v[a] = x.u()[a] + r * v[a];
        }
    }
    Ok(())
}

/// Exact sampler of the Gaussian microcanonical ensemble: v_i = u + r(w_i − w̄).
pub fn sample_gaussian_micro<R: Rng + ?Sized>(n: usize, x: &MacroState, rng: &mut R) -> Result<Configuration> {
    if n < 2 || !x.is_admissible() {
        return invalid("need N >= 2 and an admissible macrostate");
    }
    let d = x.dim();
    for _ in 0..2 {
        let w: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        let mut c = Configuration::new(d, w)?;
        match project_to_shell(&mut c, x) {
            Ok(()) => return Ok(c),
            Err(Error::DegenerateSample) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateSample)
}

/// Metropolis chain on Σ^N_{e,u} with random collision moves.
pub struct MicroChain<'a> {
    m: &'a BaseMeasure,
    x: MacroState,
    config: Configuration,
    pub proposed: u64,
    pub accepted: u64,
    since_projection: u64,
}

/// Steps between drift corrections.
pub const PROJECT_EVERY: u64 = 10_000;

impl<'a> MicroChain<'a> {
    /// Start from the exact Gaussian sampler projected onto the shell.
    pub fn new<R: Rng + ?Sized>(m: &'a BaseMeasure, n: usize, x: &MacroState, rng: &mut R) -> Result<Self> {
        if m.dim() != x.dim() {
            return invalid("measure and macrostate dimensions differ");
        }
        let config = sample_gaussian_micro(n, x, rng)?;
        Ok(Self { m, x: x.clone(), config, proposed: 0, accepted: 0, since_projection: 0 })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.config.n();
        let d = self.config.dim();
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut om = [0.0; 3];
        uniform_direction(d, rng, &mut om[..d]);
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        a[..d].copy_from_slice(self.config.particle(i));
        b[..d].copy_from_slice(self.config.particle(j));
        let old = self.m.log_density(&a[..d]) + self.m.log_density(&b[..d]);
        collide_in_place(&mut a[..d], &mut b[..d], &om[..d]);
        let new = self.m.log_density(&a[..d]) + self.m.log_density(&b[..d]);
        self.proposed += 1;
        if new >= old || rng.random::<f64>() < (new - old).exp() {
            self.config.particle_mut(i).copy_from_slice(&a[..d]);
            self.config.particle_mut(j).copy_from_slice(&b[..d]);
            self.accepted += 1;
        }
        self.since_projection += 1;
        if self.since_projection >= PROJECT_EVERY {
            project_to_shell(&mut self.config, &self.x).expect("configuration on the shell is not degenerate");
            self.since_projection = 0;
        }
    }

    pub fn run<R: Rng + ?Sized>(&mut self, steps: u64, rng: &mut R) {
        for _ in 0..steps {
            self.step(rng);
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }
}

/// Output of [`sample_micro_mcmc`].
#[derive(Clone, Debug)]
pub struct McmcRun {
    pub config: Configuration,
    pub proposed: u64,
    pub accepted: u64,
    /// Set when fewer than 10·N moves were accepted.
    pub warning: Option<String>,
}

/// Run a collision-move chain for `steps` proposals and return its state.
pub fn sample_micro_mcmc<R: Rng + ?Sized>(
    m: &BaseMeasure,
    n: usize,
    x: &MacroState,
    steps: u64,
    rng: &mut R,
) -> Result<McmcRun> {
    let mut chain = MicroChain::new(m, n, x, rng)?;
    chain.run(steps, rng);
    let warning = (chain.accepted < 10 * n as u64)
        .then(|| format!("chain too short: {} accepted moves for N = {n}", chain.accepted));
    Ok(McmcRun { config: chain.config.clone(), proposed: chain.proposed, accepted: chain.accepted, warning })
}

/// Pooled one-particle moments.
#[derive(Clone, Debug, Serialize)]
pub struct MomentTable {
    pub zeta0: f64,
    pub zeta: Vec<f64>,
    pub abs3: f64,
    /// Per-axis variance of pooled velocities.
    pub axis_variance: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MarginalReport {
    pub histogram: GridDensity,
    pub clipped: f64,
    pub l1_to_tilt: f64,
    pub moments: MomentTable,
}

/// Pooled moments of a set of configurations.
pub fn pooled_moments(samples: &[Configuration]) -> MomentTable {
    let d = samples[0].dim();
    let count: usize = samples.iter().map(|c| c.n()).sum();
    let mut z0 = 0.0;
    let mut z = vec![0.0; d];
    let mut sq = vec![0.0; d];
    let mut a3 = 0.0;
    for c in samples {
        for v in c.particles() {
            z0 += zeta0(v);
            a3 += norm(v).powi(3);
            for a in 0..d {
                z[a] += v[a];
                sq[a] += v[a] * v[a];
            }
        }
    }
    let n = count as f64;
    let zeta: Vec<f64> = z.iter().map(|s| s / n).collect();
    let axis_variance = sq.iter().zip(&zeta).map(|(s, m)| s / n - m * m).collect();
    MomentTable { zeta0: z0 / n, zeta, abs3: a3 / n, axis_variance }
}

/// Pooled histogram on `grid` with its L¹ distance to m_{e,u} (tilted on the
/// same grid) and the pooled moment table.
pub fn marginal_diagnostics(
    samples: &[Configuration],
    m: &BaseMeasure,
    x: &MacroState,
    grid: &GridSpec,
) -> Result<MarginalReport> {
    if samples.is_empty() {
        return invalid("no samples");
    }
    let pooled: Vec<f64> = samples.iter().flat_map(|c| c.as_slice().iter().copied()).collect();
    let (histogram, clipped) = GridDensity::histogram(grid, &pooled);
    let target = if grid == m.grid() {
        tilt_measure(m, x)?
    } else {
        crate::measures::tilt_density_on(m, x, grid)?.0
    };
    let l1_to_tilt = histogram.l1_distance(&target)?;
    Ok(MarginalReport { histogram, clipped, l1_to_tilt, moments: pooled_moments(samples) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica;

    fn x(e: f64) -> MacroState {
        MacroState::at_rest(e, 2).unwrap()
    }

    #[test]
    fn residual_examples() {
        let a = Configuration::new(2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        assert_eq!(constraint_residual(&a, &x(1.0)), (0.5, 0.0));
        let b = Configuration::new(2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(constraint_residual(&b, &x(1.0)), (0.5, 1.0));
    }

    #[test]
    fn gaussian_sampler_hits_the_shell() {
        for seed in 0..100 {
            let xs = MacroState::new(1.3, vec![0.2, -0.1]).unwrap();
            let c = sample_gaussian_micro(17, &xs, &mut replica(seed, 0)).unwrap();
            let (de, du) = constraint_residual(&c, &xs);
            assert!(de <= 1e-12 && du <= 1e-12);
        }
        let c = sample_gaussian_micro(2, &x(1.0), &mut replica(3, 0)).unwrap();
        let (v1, v2) = (c.particle(0), c.particle(1));
        assert!((v1[0] + v2[0]).abs() < 1e-15 && (v1[1] + v2[1]).abs() < 1e-15);
        assert!((v1[0] * v1[0] + v1[1] * v1[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn serialisation_round_trips() {
        let c = sample_gaussian_micro(5, &x(1.0), &mut replica(1, 0)).unwrap();
        assert_eq!(Configuration::from_bytes(&c.to_bytes()).unwrap(), c);
        assert_eq!(Configuration::from_json(&c.to_json().unwrap()).unwrap(), c);
        let big = sample_gaussian_micro(101, &x(1.0), &mut replica(1, 0)).unwrap();
        assert!(big.to_json().is_err());
    }

    #[test]
    fn gaussian_chain_accepts_everything_and_stays_on_shell() {
        let m = BaseMeasure::standard_2d();
        let xs = MacroState::new(1.4, vec![0.3, 0.0]).unwrap();
        let run = sample_micro_mcmc(&m, 20, &xs, 100_000, &mut replica(2, 0)).unwrap();
        assert_eq!(run.accepted, run.proposed);
        assert!(run.warning.is_none());
        let (de, du) = constraint_residual(&run.config, &xs);
        assert!(de <= 1e-10 && du <= 1e-10);
        let short = sample_micro_mcmc(&m, 20, &xs, 50, &mut replica(2, 1)).unwrap();
        assert!(short.warning.is_some());
    }
}
