//! The five subcommands. Each is a pure function of the configuration: all
//! randomness flows from `seed` through per-replica streams, and results
//! are gathered in replica order.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use kacld::kac::{kappa, simulate_hard_sphere, write_event_log, EventLogHeader, Trajectory};
use kacld::luw::{luw_canonical_cost, luw_rate_convergence, build_luw_approximant, EnergyProfile, LuwMode};
use kacld::measures::{BaseMeasure, GridSpec, MacroState};
use kacld::microcanonical::{sample_gaussian_micro, Configuration};
use kacld::observables::{snapshot_times, DirectionBins, EmpiricalPath, FlowGrid, VelocityBins};
use kacld::rates::{canonical_rate, default_basis, dynamical_rate, dynamical_rate_variational, micro_rate_with_tol, DiscretizedPair};
use kacld::rng::{child_seed, replica};
use kacld::stats::{chi2_gof, mean_se, poisson_pmf};
use kacld::vecops::dist;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, InitKind};
use crate::error::{CliError, CliResult};
use crate::ldp::{kac_ldp, TubeSpec};
use crate::output::{f, jnum, provenance_header, provenance_json, write_json, Table};
use crate::sanov::{sanov_scan, ScanSpec, SanovEvent};

fn ensure_out(cfg: &ExperimentConfig) -> CliResult<&Path> {
    fs::create_dir_all(&cfg.out)?;
    Ok(&cfg.out)
}

/// Initial velocities for replica streams.
pub fn initial_configuration<R: Rng + ?Sized>(kind: InitKind, n: usize, x: &MacroState, rng: &mut R) -> CliResult<Configuration> {
    let d = x.dim();
    match kind {
        InitKind::Micro => Ok(sample_gaussian_micro(n, x, rng)?),
        InitKind::Canonical => {
            let s = (2.0 * x.internal_energy() / d as f64).sqrt();
            let v = (0..n * d).map(|k| x.u()[k % d] + s * rng.sample::<f64, _>(StandardNormal)).collect();
            Ok(Configuration::new(d, v)?)
        }
        InitKind::Opposed => {
            if !n.is_multiple_of(2) {
                return Err(CliError::Config("init = opposed needs an even N".into()));
            }
            let a = (2.0 * x.e()).sqrt();
            let mut v = vec![0.0; n * d];
            for i in 0..n {
                v[i * d] = if i % 2 == 0 { a } else { -a };
            }
            Ok(Configuration::new(d, v)?)
        }
    }
}

fn run_replicas(cfg: &ExperimentConfig, n: usize, seed: u64) -> CliResult<Vec<Trajectory>> {
    let x = &cfg.macrostate;
    let per: Vec<CliResult<Trajectory>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = replica(seed, k);
            let init = initial_configuration(cfg.init, n, x, &mut rng)?;
            Ok(simulate_hard_sphere(&init, cfg.scheme, cfg.horizon, &mut rng))
        })
        .collect();
    per.into_iter().collect()
}

/// Statistics of the event counts of one N.
fn count_stats(trajs: &[Trajectory], horizon: f64) -> serde_json::Value {
    let counts: Vec<f64> = trajs.iter().map(|t| t.events.len() as f64).collect();
    let (mean, se) = mean_se(&counts);
    let var = if counts.len() > 1 {
        counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64
    } else {
        f64::NAN
    };
    // For N = 2 the pair distance is conserved, so the count is exactly
    // Poisson(½·κ_d·|v1 − v2|·T) when every replica starts at the same gap.
    let reference = match trajs.first() {
        Some(t) if t.n() == 2 => {
            let gap = dist(t.initial.particle(0), t.initial.particle(1));
            let same = trajs.iter().all(|s| (dist(s.initial.particle(0), s.initial.particle(1)) - gap).abs() < 1e-12);
            same.then(|| 0.5 * kappa(t.dim()) * gap * horizon)
        }
        _ => None,
    };
    let pmean = reference.unwrap_or(mean);
    let maxk = counts.iter().cloned().fold(0.0, f64::max) as usize + 1;
    let mut obs = vec![0.0; maxk + 1];
    for &c in &counts {
        obs[c as usize] += 1.0;
    }
    let r = counts.len() as f64;
    let mut exp: Vec<f64> = (0..=maxk).map(|k| r * poisson_pmf(k as u64, pmean)).collect();
    exp[maxk] += r - exp.iter().sum::<f64>();
    let (stat, dof, p) = chi2_gof(&obs, &exp, 5.0);
    json!({
        "replicas": trajs.len(),
        "count_mean": mean,
        "count_mean_se": jnum(se),
        "count_variance": jnum(var),
        "dispersion": jnum(var / mean),
        "poisson_mean": pmean,
        "poisson_mean_exact": reference.is_some(),
        "poisson_chi2": stat,
        "poisson_dof": dof,
        "poisson_p": p,
    })
}

/// `simulate`: event logs, snapshots and a summary per N.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<()> {
    let out = ensure_out(cfg)?;
    let start = Instant::now();
    let snaps = cfg.get_usize("snapshots", 11)?;
    let header = provenance_header(cfg, "simulate");
    let mut per_n = Vec::new();
    for (i, &n) in cfg.n_list.iter().enumerate() {
        if n < 2 {
            return Err(CliError::Config("every N must be at least 2".into()));
        }
        let seed = child_seed(cfg.seed, i as u64);
        let trajs = run_replicas(cfg, n, seed)?;
        let mut ev_err: (f64, f64) = (0.0, 0.0);
        let mut drift: (f64, f64) = (0.0, 0.0);
        for t in &trajs {
            t.verify()?;
            let a = t.max_event_error();
            let b = t.drift();
            ev_err = (ev_err.0.max(a.0), ev_err.1.max(a.1));
            drift = (drift.0.max(b.0), drift.1.max(b.1));
        }
        let t0 = &trajs[0];
        let log_header = EventLogHeader {
            n,
            d: cfg.dim(),
            horizon: cfg.horizon,
            seed: cfg.seed,
            scheme: cfg.scheme.to_string(),
            kernel: "hard_sphere".into(),
        };
        let mut w = BufWriter::new(File::create(out.join(format!("events_N{n}.jsonl")))?);
        write_event_log(&mut w, &log_header, &t0.events)?;
        drop(w);

        let times = snapshot_times(cfg.horizon, snaps, &[]);
        let path = EmpiricalPath::from_trajectory(t0, &times)?;
        let mut cols = vec!["t", "particle"];
        let names = ["v0", "v1", "v2"];
        cols.extend(&names[..cfg.dim()]);
        let mut snap = Table::new(&cols);
        for (t, c) in path.times.iter().zip(&path.configs) {
            for (p, v) in c.particles().enumerate() {
                let mut row = vec![f(*t), p.to_string()];
                row.extend(v.iter().map(|a| f(*a)));
                snap.push(row);
            }
        }
        snap.write(&out.join(format!("snapshots_N{n}.csv")), &header)?;
        let mut et = Table::new(&["t", "energy"]);
        let prof = path.energy_profile();
        for (t, e) in prof.times.iter().zip(&prof.energy) {
            et.push(vec![f(*t), f(*e)]);
        }
        et.write(&out.join(format!("energy_N{n}.csv")), &header)?;

        let mut s = count_stats(&trajs, cfg.horizon);
        s["N"] = json!(n);
        s["max_event_energy_error"] = json!(ev_err.0);
        s["max_event_momentum_error"] = json!(ev_err.1);
        s["max_drift_energy"] = json!(drift.0);
        s["max_drift_momentum"] = json!(drift.1);
        per_n.push(s);
    }
    let summary = json!({
        "provenance": provenance_json(cfg, "simulate"),
        "scheme": cfg.scheme.to_string(),
        "T": cfg.horizon,
        "runs": per_n,
    });
    write_json(&out.join("summary.json"), &summary)?;
    // Wall time is kept out of summary.json so that reruns are byte-identical.
    let wall = start.elapsed().as_secs_f64();
    write_json(&out.join("timing.json"), &json!({ "wall_time_s": wall }))?;
    eprintln!("simulate: done in {wall:.2} s");
    Ok(())
}

/// `sanov-scan`: energy-deficit (or full) event rates against the proxy.
pub fn cmd_sanov_scan(cfg: &ExperimentConfig) -> CliResult<()> {
    let out = ensure_out(cfg)?;
    let event = match cfg.get_str("event", "deficit") {
        "full" => SanovEvent::Full,
        "deficit" => SanovEvent::EnergyDeficit {
            radius: cfg.get_f64("radius", 3.0)?,
            level: cfg.get_f64("level", cfg.macrostate.e() - 0.5)?,
        },
        other => return Err(CliError::Config(format!("unknown event {other:?} (full, deficit)"))),
    };
    if cfg.macrostate.u().iter().any(|&a| a != 0.0) {
        return Err(CliError::Config("sanov-scan needs u = 0".into()));
    }
    let spec = ScanSpec {
        event,
        samples: cfg.get_usize("samples", 20_000)?,
        tilt: cfg.get_bool("tilt", true)?,
        seed: cfg.seed,
    };
    let (rows, proxy) = sanov_scan(&cfg.n_list, &cfg.macrostate, &spec)?;
    let mut t = Table::new(&["N", "samples", "direct_hits", "direct_rate", "is_rate", "is_se", "is_ess", "proxy"]);
    let opt = |x: Option<f64>| x.map(f).unwrap_or_default();
    for r in &rows {
        t.push(vec![
            r.n.to_string(),
            r.samples.to_string(),
            r.direct_hits.to_string(),
            f(r.direct_rate),
            opt(r.is_rate),
            opt(r.is_se),
            opt(r.is_ess),
            f(r.proxy),
        ]);
    }
    t.write(&out.join("sanov_scan.csv"), &provenance_header(cfg, "sanov-scan"))?;
    write_json(
        &out.join("sanov_manifest.json"),
        &json!({ "provenance": provenance_json(cfg, "sanov-scan"), "proxy": proxy }),
    )?;
    Ok(())
}

/// `kac-ldp`: tube probabilities against the rates of the target pair.
pub fn cmd_kac_ldp(cfg: &ExperimentConfig) -> CliResult<()> {
    let out = ensure_out(cfg)?;
    let m = cfg.base_measure()?;
    let spec = TubeSpec {
        eps: cfg.get_f64("eps", 0.2)?,
        flow_half_width: cfg.get_f64("tube_half_width", 0.1)?,
        target_energy: cfg.get_f64("target_energy", cfg.macrostate.e())?,
        energy_half_width: cfg.get_f64("energy_half_width", 1e-6)?,
        horizon: cfg.horizon,
        replicas: cfg.replicas,
        seed: cfg.seed,
    };
    let rows = kac_ldp(&cfg.n_list, &m, &cfg.macrostate, &spec)?;
    let mut t = Table::new(&["N", "replicas", "hits", "ess", "estimate", "se", "dynamical_rate", "micro_rate", "tube_inf"]);
    for r in &rows {
        t.push(vec![
            r.n.to_string(),
            r.replicas.to_string(),
            r.hits.to_string(),
            f(r.ess),
            f(r.estimate),
            f(r.se),
            f(r.dynamical),
            f(r.micro),
            f(r.tube_inf),
        ]);
    }
    t.write(&out.join("kac_ldp.csv"), &provenance_header(cfg, "kac-ldp"))?;
    Ok(())
}

fn parse_profile(s: &str, base: f64) -> CliResult<EnergyProfile> {
    let mut jumps = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (t, de) = item
            .split_once(':')
            .ok_or_else(|| CliError::Config(format!("profile entry {item:?} is not t:dE")))?;
        let p = |x: &str| x.trim().parse::<f64>().map_err(|_| CliError::Config(format!("profile: bad number {x:?}")));
        jumps.push((p(t)?, p(de)?));
    }
    if jumps.is_empty() {
        return Err(CliError::Config("profile needs at least one jump".into()));
    }
    EnergyProfile::new(base, jumps).map_err(|e| CliError::Config(format!("profile: {e}")))
}

/// `luw`: convergence table and the canonical cost comparison.
pub fn cmd_luw(cfg: &ExperimentConfig) -> CliResult<()> {
    let out = ensure_out(cfg)?;
    let m = cfg.base_measure()?;
    let f0 = m.as_grid_density();
    let prof = parse_profile(cfg.get_str("profile", "0.5:0.5"), m.mean_macro().e())?;
    if !(cfg.macrostate.e() > prof.final_value()) {
        return Err(CliError::Config(format!(
            "the ambient energy e = {} must exceed E(T) = {}",
            cfg.macrostate.e(),
            prof.final_value()
        )));
    }
    let times = snapshot_times(cfg.horizon, cfg.get_usize("snapshots", 11)?, &prof.jump_times());
    let mode = match cfg.get_str("luw_mode", "frozen") {
        "frozen" => LuwMode::Frozen,
        "simulated" => LuwMode::Simulated {
            n_mf: cfg.get_usize("luw_n_mf", 4000)?,
            replicas: cfg.get_usize("luw_replicas", 25)?,
            seed: cfg.seed,
        },
        other => return Err(CliError::Config(format!("unknown luw_mode {other:?} (frozen, simulated)"))),
    };
    let rows = luw_rate_convergence(&f0, &prof, &m, &cfg.macrostate, &cfg.n_list, &times, mode)?;
    let header = provenance_header(cfg, "luw");
    let mut t = Table::new(&["n", "J", "H", "H_limit", "energy_start", "energy_end", "max_tail"]);
    for r in &rows {
        t.push(vec![r.n.to_string(), f(r.j), f(r.h), f(r.h_limit), f(r.energy_start), f(r.energy_end), f(r.max_tail)]);
    }
    t.write(&out.join("luw_convergence.csv"), &header)?;
    let cost = luw_canonical_cost(&m, &prof)?;
    let mut c = Table::new(&["closed_form", "numeric", "argmin_e"]);
    c.push(vec![f(cost.closed_form), f(cost.numeric), f(cost.argmin_e)]);
    c.write(&out.join("luw_cost.csv"), &header)?;
    if cfg.get_bool("luw_export", false)? {
        for &n in &cfg.n_list {
            let lp = build_luw_approximant(&f0, &prof, n, &m, cfg.macrostate.u(), &times, mode)?;
            lp.export(&out.join(format!("luw_n{n}")))?;
        }
    }
    write_json(
        &out.join("luw_manifest.json"),
        &json!({
            "provenance": provenance_json(cfg, "luw"),
            "profile": prof,
            "mode": mode,
            "rows": rows,
            "cost": cost,
        }),
    )?;
    Ok(())
}

/// Coarse flow grid from the `flow_*` keys.
pub fn flow_grid(cfg: &ExperimentConfig) -> CliResult<FlowGrid> {
    let d = cfg.dim();
    let velocity = VelocityBins::new(d, cfg.get_usize("flow_per_axis", 2)?, cfg.get_f64("flow_half_width", 1.0)?)?;
    let dirs = cfg.get_str("flow_directions", if d == 2 { "4" } else { "2x4" });
    let directions = if d == 2 {
        DirectionBins::Angle(dirs.parse().map_err(|_| CliError::Config(format!("flow_directions: {dirs:?}")))?)
    } else {
        let (a, b) = dirs.split_once('x').ok_or_else(|| CliError::Config(format!("flow_directions: {dirs:?} is not AxB")))?;
        let p = |s: &str| s.parse::<usize>().map_err(|_| CliError::Config(format!("flow_directions: {dirs:?}")));
        DirectionBins::Sphere { nz: p(a)?, nphi: p(b)? }
    };
    Ok(FlowGrid::uniform(cfg.horizon, cfg.get_usize("flow_time_bins", 2)?, velocity, directions)?)
}

/// Rates of one simulated replica on bins.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ReplicaRates {
    pub j: f64,
    pub j_variational: f64,
    pub i_eu: f64,
    pub i_can: f64,
    pub clipped: f64,
}

pub fn replica_rates(
    traj: &Trajectory,
    times: &[f64],
    grid: &GridSpec,
    fg: &FlowGrid,
    m: &BaseMeasure,
    x: &MacroState,
    tol: f64,
    iterations: usize,
) -> CliResult<ReplicaRates> {
    let (pair, clipped) = DiscretizedPair::from_trajectory(traj, times, grid, fg)?;
    let j = dynamical_rate(&pair)?;
    let jv = if iterations > 0 {
        dynamical_rate_variational(&pair, &default_basis(grid.dim(), traj.horizon), iterations)?.value
    } else {
        f64::NAN
    };
    let i_eu = micro_rate_with_tol(&pair, m, x, tol)?;
    let scan: Vec<f64> = (0..24).map(|k| x.e() * (0.5 + 3.5 * k as f64 / 23.0)).collect();
    let i_can = canonical_rate(&pair, m, &scan, None).map(|c| c.value).unwrap_or(f64::INFINITY);
    Ok(ReplicaRates { j, j_variational: jv, i_eu, i_can, clipped })
}

/// `rate`: binned rates of simulated pairs, per replica and averaged.
pub fn cmd_rate(cfg: &ExperimentConfig) -> CliResult<()> {
    let out = ensure_out(cfg)?;
    let m = cfg.base_measure()?;
    let fg = flow_grid(cfg)?;
    let times = snapshot_times(cfg.horizon, cfg.get_usize("snapshots", 3)?, &fg.time_edges);
    let tol = cfg.get_f64("moment_tol", 0.05)?;
    let iterations = cfg.get_usize("variational_iterations", 0)?;
    let header = provenance_header(cfg, "rate");
    let mut t = Table::new(&["N", "replica", "J", "J_variational", "I_eu", "I_can", "clipped"]);
    let mut summary = Vec::new();
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let trajs = run_replicas(cfg, n, child_seed(cfg.seed, i as u64))?;
        let per: Vec<CliResult<ReplicaRates>> = trajs
            .par_iter()
            .map(|tr| replica_rates(tr, &times, &cfg.grid, &fg, &m, &cfg.macrostate, tol, iterations))
            .collect();
        let mut js = Vec::new();
        for (k, r) in per.into_iter().enumerate() {
            let r = r?;
            js.push(r.j);
            t.push(vec![n.to_string(), k.to_string(), f(r.j), f(r.j_variational), f(r.i_eu), f(r.i_can), f(r.clipped)]);
        }
        let (mean, se) = mean_se(&js);
        summary.push(json!({ "N": n, "J_mean": mean, "J_se": jnum(se) }));
    }
    t.write(&out.join("rate.csv"), &header)?;
    write_json(
        &out.join("rate_summary.json"),
        &json!({ "provenance": provenance_json(cfg, "rate"), "flow_bins": fg.len(), "rows": summary }),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    #[test]
    fn initial_configurations() {
        let x = MacroState::at_rest(0.5, 2).unwrap();
        let mut rng = kacld::rng::seeded(1);
        let c = initial_configuration(InitKind::Opposed, 2, &x, &mut rng).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 0.0, -1.0, 0.0]);
        assert!(initial_configuration(InitKind::Opposed, 3, &x, &mut rng).is_err());
        let c = initial_configuration(InitKind::Micro, 50, &x, &mut rng).unwrap();
        assert!((c.energy() - 0.5).abs() < 1e-12);
        let c = initial_configuration(InitKind::Canonical, 20_000, &x, &mut rng).unwrap();
        assert!((c.energy() - 0.5).abs() < 0.02);
    }

    #[test]
    fn profile_parsing() {
        let p = parse_profile("0.2:0.5, 0.6:1", 1.0).unwrap();
        assert_eq!(p.jumps(), &[(0.2, 0.5), (0.6, 1.0)]);
        assert!(parse_profile("", 1.0).is_err());
        assert!(parse_profile("0.5", 1.0).is_err());
        assert!(parse_profile("0.5:-1", 1.0).is_err());
    }

    #[test]
    fn flow_grid_from_keys() {
        let cfg = ExperimentConfig::from_str_with("n = 10\nseed = 1\nflow_directions = 8\n", &Overrides::default()).unwrap();
        let g = flow_grid(&cfg).unwrap();
        assert_eq!(g.len(), 2 * 4 * 4 * 8);
        let cfg3 = ExperimentConfig::from_str_with("n = 10\nseed = 1\ndim = 3\n", &Overrides::default()).unwrap();
        assert_eq!(flow_grid(&cfg3).unwrap().len(), 2 * 8 * 8 * 8);
    }
}
