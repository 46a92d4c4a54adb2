//! Empirical measure paths, density paths, the empirical flow functional and
//! the balance-equation residual.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kac::{CollisionEvent, Trajectory};
use crate::measures::{GridDensity, GridSpec};
use crate::microcanonical::Configuration;
use crate::vecops::zeta0;

use super::FlowTestFunction;

/// π^N_t as a particle view (right-continuous in t).
pub fn empirical_measure_at(traj: &Trajectory, t: f64) -> Result<Configuration> {
    if !(0.0..=traj.horizon).contains(&t) {
        return invalid("time outside [0, T]");
    }
    Ok(traj.configuration_at(t))
}

/// π^N_t binned on `grid`, with the fraction of particles outside the box.
pub fn empirical_histogram_at(traj: &Trajectory, t: f64, grid: &GridSpec) -> Result<(GridDensity, f64)> {
    let c = empirical_measure_at(traj, t)?;
    Ok(GridDensity::histogram(grid, c.as_slice()))
}

/// `n` uniform times on [0, T] (n ≥ 2) merged with the extra times.
pub fn snapshot_times(horizon: f64, n: usize, extra: &[f64]) -> Vec<f64> {
    let n = n.max(2);
    let mut ts: Vec<f64> = (0..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect();
    ts.extend(extra.iter().copied().filter(|t| (0.0..=horizon).contains(t)));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// t ↦ π_t(ζ₀) on a set of times.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyTable {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
}

impl EnergyTable {
    /// max |E(t) − E(0)|.
    pub fn spread(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,energy\n");
        for (t, e) in self.times.iter().zip(&self.energy) {
            s.push_str(&format!("{t},{e}\n"));
        }
        s
    }
}

/// Snapshots of an empirical measure path, each with weight 1/N per particle.
#[derive(Clone, Debug)]
pub struct EmpiricalPath {
    pub times: Vec<f64>,
    pub configs: Vec<Configuration>,
}

impl EmpiricalPath {
    pub fn from_trajectory(traj: &Trajectory, times: &[f64]) -> Result<Self> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(0.0..=traj.horizon).contains(t)) {
            return invalid("snapshot times must be sorted inside [0, T]");
        }
        Ok(Self { times: times.to_vec(), configs: traj.snapshots(times) })
    }

    /// Each snapshot binned on `grid`; also returns the largest clipped fraction.
    pub fn histograms(&self, grid: &GridSpec) -> (DensityPath, f64) {
        let mut clipped: f64 = 0.0;
        let densities = self
            .configs
            .iter()
            .map(|c| {
                let (h, out) = GridDensity::histogram(grid, c.as_slice());
                clipped = clipped.max(out);
                h
            })
            .collect();
        (DensityPath { times: self.times.clone(), densities }, clipped)
    }

    pub fn energy_profile(&self) -> EnergyTable {
        EnergyTable { times: self.times.clone(), energy: self.configs.iter().map(|c| c.energy()).collect() }
    }

    /// π_t(φ(t, ·)) at snapshot k.
    fn integrate(&self, k: usize, phi: &dyn Fn(f64, &[f64]) -> f64) -> f64 {
        let t = self.times[k];
        self.configs[k].mean_of(|v| phi(t, v))
    }
}

/// A time-indexed path of densities on a common grid.
#[derive(Clone, Debug)]
pub struct DensityPath {
    pub times: Vec<f64>,
    pub densities: Vec<GridDensity>,
}

impl DensityPath {
    pub fn new(times: Vec<f64>, densities: Vec<GridDensity>) -> Result<Self> {
        if times.len() != densities.len() || times.is_empty() {
            return invalid("times and densities differ in length");
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return invalid("times must be nondecreasing");
        }
        let g = densities[0].grid();
        if densities.iter().any(|d| d.grid() != g) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { times, densities })
    }

    /// The same density at every time.
    pub fn constant(f: GridDensity, times: Vec<f64>) -> Result<Self> {
        let densities = vec![f; times.len()];
        Self::new(times, densities)
    }

    pub fn grid(&self) -> &GridSpec {
        self.densities[0].grid()
    }
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }
    pub fn initial(&self) -> &GridDensity {
        &self.densities[0]
    }

    pub fn energy_profile(&self) -> EnergyTable {
        EnergyTable { times: self.times.clone(), energy: self.densities.iter().map(|f| f.energy()).collect() }
    }

    pub fn max_energy(&self) -> f64 {
        self.densities.iter().map(|f| f.energy()).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Q^N of a trajectory: events with weight 1/N.
#[derive(Clone, Copy, Debug)]
pub struct EmpiricalFlow<'a> {
    pub events: &'a [CollisionEvent],
    pub n: usize,
}

impl<'a> EmpiricalFlow<'a> {
    pub fn of(traj: &'a Trajectory) -> Self {
        Self { events: &traj.events, n: traj.n() }
    }

    /// Q^N(F) = (1/N) Σ_events F(τ; v, v*, v', v*').
    pub fn eval(&self, f: &dyn FlowTestFunction) -> f64 {
        self.events.iter().map(|e| f.eval(e.t, &e.v_in, &e.vstar_in, &e.v_out, &e.vstar_out)).sum::<f64>()
            / self.n as f64
    }

    pub fn mass(&self) -> f64 {
        self.events.len() as f64 / self.n as f64
    }
}

/// φ(t, v) with its time derivative.
#[derive(Clone)]
pub struct TimeTestFunction {
    pub value: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    pub dt: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
}

impl TimeTestFunction {
    pub fn constant_in_time(phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(move |_, v| phi(v)), dt: Arc::new(|_, _| 0.0) }
    }

    /// φ ≡ 1.
    pub fn one() -> Self {
        Self::constant_in_time(|_| 1.0)
    }

    /// min(ζ₀, cap): equal to ζ₀ below the cap.
    pub fn clipped_energy(cap: f64) -> Self {
        Self::constant_in_time(move |v| zeta0(v).min(cap))
    }

    /// g(t)·φ₀(v).
    pub fn separable(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let phi = Arc::new(phi);
        let p2 = phi.clone();
        Self { value: Arc::new(move |t, v| g(t) * phi(v)), dt: Arc::new(move |t, v| dg(t) * p2(v)) }
    }

    pub fn is_time_constant(&self, times: &[f64], probe: &[f64]) -> bool {
        times.iter().all(|&t| (self.dt)(t, probe) == 0.0)
    }
}

/// Left side of the balance equation for the trajectory's own empirical
/// pair. The ∂ₜφ term uses the trapezoid rule on the snapshot times (first
/// order, since π^N is piecewise constant); the flow term is summed exactly.
pub fn balance_residual(path: &EmpiricalPath, flow: &EmpiricalFlow, phi: &TimeTestFunction) -> f64 {
    let k_last = path.times.len() - 1;
    let value = |t: f64, v: &[f64]| (phi.value)(t, v);
    let dt = |t: f64, v: &[f64]| (phi.dt)(t, v);
    let boundary = path.integrate(k_last, &value) - path.integrate(0, &value);
    let mut time_term = 0.0;
    let mut prev = path.integrate(0, &dt);
    let mut all_zero = prev == 0.0;
    for k in 1..=k_last {
        let cur = path.integrate(k, &dt);
        all_zero &= cur == 0.0;
        time_term += 0.5 * (prev + cur) * (path.times[k] - path.times[k - 1]);
        prev = cur;
    }
    if all_zero {
        time_term = 0.0;
    }
    let mut q_term = 0.0;
    for e in flow.events {
        q_term += value(e.t, &e.v_in) + value(e.t, &e.vstar_in) - value(e.t, &e.v_out) - value(e.t, &e.vstar_out);
    }
    q_term /= flow.n as f64;
    boundary - time_term + q_term
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kac::{simulate_hard_sphere, Scheme};
    use crate::measures::MacroState;
    use crate::microcanonical::sample_gaussian_micro;
    use crate::observables::ConstantFlow;
    use crate::rng::replica;
    use crate::stats::{mean_se, slope};

    fn traj(n: usize, seed: u64) -> Trajectory {
        let x = MacroState::at_rest(1.0, 2).unwrap();
        let init = sample_gaussian_micro(n, &x, &mut replica(seed, 0)).unwrap();
        simulate_hard_sphere(&init, Scheme::Exact, 1.0, &mut replica(seed, 1))
    }

    #[test]
    fn energy_profile_is_constant() {
        let tr = traj(50, 1);
        let p = EmpiricalPath::from_trajectory(&tr, &snapshot_times(1.0, 101, &[])).unwrap();
        assert!(p.energy_profile().spread() < 1e-10);
        let still = Trajectory { events: vec![], ..tr.clone() };
        let p = EmpiricalPath::from_trajectory(&still, &[0.0, 0.5, 1.0]).unwrap();
        assert!(p.energy_profile().energy.iter().all(|&e| e == tr.initial.energy()));
        assert!(empirical_measure_at(&tr, 1.5).is_err());
    }

    #[test]
    fn flow_of_constant_counts_events() {
        let tr = traj(20, 2);
        let q = EmpiricalFlow::of(&tr);
        assert_eq!(q.eval(&ConstantFlow(1.0)), tr.events.len() as f64 / 20.0);
        // two-particle Poisson law: E Q(1) = 1 at T = 1
        let init = Configuration::new(2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let vals: Vec<f64> = (0..4000)
            .map(|r| EmpiricalFlow::of(&simulate_hard_sphere(&init, Scheme::Null, 1.0, &mut replica(6, r))).mass())
            .collect();
        let (m, se) = mean_se(&vals);
        assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn balance_residuals() {
        let tr = traj(40, 3);
        let q = EmpiricalFlow::of(&tr);
        let p = EmpiricalPath::from_trajectory(&tr, &snapshot_times(1.0, 11, &[])).unwrap();
        assert_eq!(balance_residual(&p, &q, &TimeTestFunction::one()), 0.0);
        assert!(balance_residual(&p, &q, &TimeTestFunction::clipped_energy(1e6)).abs() < 1e-10);
        let phi = TimeTestFunction::separable(|t| t, |_| 1.0, |v| (v[0]).sin());
        let mut dts = vec![];
        let mut res = vec![];
        for n in [11, 21, 41, 81, 161] {
            let p = EmpiricalPath::from_trajectory(&tr, &snapshot_times(1.0, n, &[])).unwrap();
            dts.push(1.0 / (n - 1) as f64);
            res.push(balance_residual(&p, &q, &phi).abs());
        }
        // first order in Δt on average: log-log slope near one, and small
        let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
        let ly: Vec<f64> = res.iter().map(|r| r.max(1e-300).ln()).collect();
        assert!(res[4] < 0.05 && slope(&lx, &ly) > 0.5, "{res:?}");
    }
}
