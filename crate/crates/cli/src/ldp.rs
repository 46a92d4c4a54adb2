//! Tube probabilities for (π^N, Q^N) under the Kac walk, by simulating the
//! kernel (1 + ε)B and reweighting each trajectory by exp(−W), with W the
//! exponential-martingale log-weight of F = log(1 + ε).
//!
//! The tube around the target pair (f_t ≡ m_{e*,u}, q = (1 + ε)q^f) is cut
//! out by two constraints with declared half-widths:
//! |Q^N(1) − q(1)| ≤ h_Q·q(1) and |π^N_T(ζ₀) − e*| ≤ h_E.

use std::sync::Arc;

use kacld::kac::{girsanov_log_weight, simulate, simulate_exact, KernelSpec, ScaledHardSphere, SphereRule};
use kacld::measures::{tilt_measure, BaseMeasure, MacroState};
use kacld::microcanonical::sample_gaussian_micro;
use kacld::observables::{ConstantFlow, DensityPath, ProductFlow};
use kacld::rates::{dynamical_rate, micro_rate, DiscretizedPair};
use kacld::rng::{child_seed, replica};
use kacld::stats::{ess_from_log_weights, log_mean_exp};
use kacld::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct TubeSpec {
    pub eps: f64,
    /// Relative half-width on the total flow mass Q(1).
    pub flow_half_width: f64,
    /// Energy of the target path.
    pub target_energy: f64,
    pub energy_half_width: f64,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
}

/// Rates of the target pair computed on the grid.
#[derive(Clone, Debug, Serialize)]
pub struct TargetRates {
    /// q(1) of the target flow.
    pub flow_mass: f64,
    /// J of the target pair.
    pub dynamical: f64,
    /// I_{e,u} of the target pair (+∞ outside the constraint set).
    pub micro: f64,
    /// inf of J over the flow-mass constraint of the tube.
    pub tube_inf: f64,
}

pub fn target_rates(m: &BaseMeasure, x: &MacroState, spec: &TubeSpec) -> Result<TargetRates> {
    let xt = MacroState::new(spec.target_energy, x.u().to_vec())?;
    let f = tilt_measure(m, &xt)?;
    let path = DensityPath::constant(f, vec![0.0, 0.5 * spec.horizon, spec.horizon])?;
    let reference = ProductFlow::reference(&path);
    let c = 1.0 + spec.eps;
    let pair = DiscretizedPair::product(path, reference.scaled(c))?;
    let base = pair.reference_mass()?;
    let j = dynamical_rate(&pair)?;
    let micro = micro_rate(&pair, m, x)?;
    // J is (c log c − c + 1)·q^f(1) along the scaled family; minimise over the tube
    let lo = c * (1.0 - spec.flow_half_width);
    let hi = c * (1.0 + spec.flow_half_width);
    let cs = 1.0f64.clamp(lo, hi);
    let tube_inf = (cs * cs.ln() - cs + 1.0) * base;
    Ok(TargetRates { flow_mass: c * base, dynamical: j, micro, tube_inf })
}

/// One row of the kac-ldp table.
#[derive(Clone, Debug, Serialize)]
pub struct LdpRow {
    pub n: usize,
    pub replicas: usize,
    pub hits: usize,
    pub ess: f64,
    pub estimate: f64,
    pub se: f64,
    pub dynamical: f64,
    pub micro: f64,
    pub tube_inf: f64,
}

/// Tube hit indicator and log-weight of one replica.
fn one_replica(n: usize, x: &MacroState, spec: &TubeSpec, target_mass: f64, seed: u64, k: u64) -> Result<(bool, f64)> {
    let mut rng = replica(seed, k);
    let init = sample_gaussian_micro(n, x, &mut rng)?;
    let traj = if spec.eps == 0.0 {
        simulate_exact(&init, spec.horizon, &mut rng)
    } else {
        let kernel = ScaledHardSphere { eps: spec.eps, dim: x.dim(), total_energy: init.total_energy() };
        simulate(&init, &KernelSpec::Perturbed(Arc::new(kernel)), spec.horizon, &mut rng)?
    };
    let w = if spec.eps == 0.0 {
        0.0
    } else {
        girsanov_log_weight(&traj, &ConstantFlow(spec.eps.ln_1p()), SphereRule::default_for(x.dim()))
    };
    let q1 = traj.events.len() as f64 / n as f64;
    let e_end = traj.final_configuration().energy();
    let hit = (q1 - target_mass).abs() <= spec.flow_half_width * target_mass
        && (e_end - spec.target_energy).abs() <= spec.energy_half_width;
    Ok((hit, -w))
}

/// −(1/N) log P(tube) for each N, with the target-pair rates alongside.
pub fn kac_ldp(n_list: &[usize], m: &BaseMeasure, x: &MacroState, spec: &TubeSpec) -> Result<Vec<LdpRow>> {
    if !(spec.eps > -1.0 && spec.flow_half_width > 0.0 && spec.energy_half_width >= 0.0) {
        return Err(Error::InvalidArgument("need eps > -1 and positive half-widths".into()));
    }
    let target = target_rates(m, x, spec)?;
    let mut rows = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        let seed = child_seed(spec.seed, i as u64);
        let per: Vec<Result<(bool, f64)>> = (0..spec.replicas as u64)
            .into_par_iter()
            .map(|k| one_replica(n, x, spec, target.flow_mass, seed, k))
            .collect();
        let mut lw = Vec::with_capacity(spec.replicas);
        let mut hits = 0;
        for r in per {
            let (hit, l) = r?;
            hits += hit as usize;
            lw.push(if hit { l } else { f64::NEG_INFINITY });
        }
        let ess = ess_from_log_weights(&lw);
        let (estimate, se) = if hits == 0 {
            if target.micro.is_finite() {
                return Err(Error::WeightDegenerate { ess: 0.0 });
            }
            (f64::INFINITY, f64::INFINITY)
        } else {
            if ess < 10.0 {
                return Err(Error::WeightDegenerate { ess });
            }
            let lm = log_mean_exp(&lw);
            let r = lw.len() as f64;
            let second = lw.iter().map(|l| (2.0 * (l - lm)).exp()).sum::<f64>() / r;
            (-lm / n as f64, ((second - 1.0).max(0.0) / r).sqrt() / n as f64)
        };
        rows.push(LdpRow {
            n,
            replicas: spec.replicas,
            hits,
            ess,
            estimate,
            se,
            dynamical: target.dynamical,
            micro: target.micro,
            tube_inf: target.tube_inf,
        });
    }
    Ok(rows)
}
