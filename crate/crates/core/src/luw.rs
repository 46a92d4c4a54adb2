//! Energy-conserving Boltzmann flow by mean-field Kac simulation, the
//! approximating paths of solutions whose energy jumps up, and the rates
//! along them.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kac::{simulate_null_collision, Trajectory};
use crate::measures::{
    cramer_rate, micro_sanov_rate, solve_tilt, tilt_density_on, BaseMeasure, GridDensity, GridSpec, MacroState,
};
use crate::microcanonical::Configuration;
use crate::observables::{snapshot_times, DensityPath, EnergyTable, ProductFlow, ProductSegment};
use crate::quad::golden_min;
use crate::rates::{dynamical_rate, DiscretizedPair};
use crate::rng::replica;
use crate::stats::mean_se;
use crate::vecops::norm;

/// Nondecreasing, piecewise-constant, left-continuous t ↦ E(t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    base: f64,
    jumps: Vec<(f64, f64)>,
}

impl EnergyProfile {
    /// `jumps` are (t_i, ΔE_i) with strictly increasing t_i ≥ 0 and ΔE_i > 0.
    /// An empty list is accepted (a constant profile).
    pub fn new(base: f64, jumps: Vec<(f64, f64)>) -> Result<Self> {
        if !(base > 0.0) {
            return invalid("base energy must be positive");
        }
        if jumps.iter().any(|&(t, de)| !(t >= 0.0) || !(de > 0.0)) || jumps.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return invalid("jump times must increase and jumps must be positive");
        }
        Ok(Self { base, jumps })
    }

    pub fn base(&self) -> f64 {
        self.base
    }
    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }
    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.0).collect()
    }

    /// E(t), left-continuous at jumps.
    pub fn value(&self, t: f64) -> f64 {
        self.base + self.jumps.iter().filter(|j| j.0 < t).map(|j| j.1).sum::<f64>()
    }

    /// E(T), after every jump.
    pub fn final_value(&self) -> f64 {
        self.base + self.total_jump()
    }

    pub fn total_jump(&self) -> f64 {
        self.jumps.iter().map(|j| j.1).sum()
    }
}

/// N i.i.d. velocities drawn from the node masses of a grid density.
pub fn sample_from_density<R: rand::Rng + ?Sized>(h: &GridDensity, n: usize, rng: &mut R) -> Result<Configuration> {
    let g = h.grid();
    let masses: Vec<f64> = h.values().iter().zip(g.weights()).map(|(a, w)| a * w).collect();
    let dist = WeightedIndex::new(&masses).map_err(|e| Error::InvalidArgument(format!("bad density: {e}")))?;
    let mut v = Vec::with_capacity(n * g.dim());
    for _ in 0..n {
        v.extend_from_slice(g.node(dist.sample(rng)));
    }
    Configuration::new(g.dim(), v)
}

/// Replica-averaged histograms of the mean-field Kac walk at given times.
#[derive(Clone, Debug)]
pub struct SemigroupPath {
    pub path: DensityPath,
    /// Particle energies at each time: mean and standard error over replicas.
    pub energy: Vec<(f64, f64)>,
    /// Largest fraction of particles outside the grid box.
    pub clipped: f64,
}

/// U_t(h₀) at each of `times` (sorted, starting at 0), approximated by `replicas`
/// hard-sphere Kac walks of `n_mf` particles started i.i.d. from h₀.
pub fn boltzmann_path(h0: &GridDensity, times: &[f64], n_mf: usize, replicas: usize, seed: u64) -> Result<SemigroupPath> {
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return invalid("times must be sorted and nonnegative");
    }
    if n_mf < 2 || replicas == 0 {
        return invalid("need at least two particles and one replica");
    }
    let g = h0.grid();
    let horizon = *times.last().expect("nonempty");
    let mut sums = vec![vec![0.0; g.len()]; times.len()];
    let mut energies = vec![Vec::with_capacity(replicas); times.len()];
    let mut clipped: f64 = 0.0;
    for r in 0..replicas as u64 {
        let mut rng = replica(seed, r);
        let init = sample_from_density(h0, n_mf, &mut rng)?;
        let tr: Trajectory = simulate_null_collision(&init, horizon, &mut rng);
        for (k, c) in tr.snapshots(times).iter().enumerate() {
            let (hist, out) = GridDensity::histogram(g, c.as_slice());
            clipped = clipped.max(out);
            sums[k].iter_mut().zip(hist.values()).for_each(|(a, b)| *a += b);
            energies[k].push(c.energy());
        }
    }
    let densities = sums
        .into_iter()
        .map(|s| GridDensity::new(g.clone(), s.into_iter().map(|x| x / replicas as f64).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SemigroupPath {
        path: DensityPath::new(times.to_vec(), densities)?,
        energy: energies.iter().map(|e| mean_se(e)).collect(),
        clipped,
    })
}

/// U_t(h₀) at a single time.
pub fn boltzmann_semigroup(h0: &GridDensity, t: f64, n_mf: usize, replicas: usize, seed: u64) -> Result<GridDensity> {
    let mut p = boltzmann_path(h0, &[0.0, t], n_mf, replicas, seed)?;
    Ok(p.path.densities.pop().expect("two snapshots"))
}

/// t ↦ ∫ f_t |v|^p.
#[derive(Clone, Debug, Serialize)]
pub struct MomentDiagnostics {
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    /// Share of the p-moment carried by the outermost grid cells.
    pub tail_share: Vec<f64>,
    pub warning: Option<String>,
}

pub fn moment_diagnostics(path: &DensityPath, p: f64) -> MomentDiagnostics {
    let g = path.grid();
    let mut moments = Vec::new();
    let mut tail_share = Vec::new();
    for f in &path.densities {
        let mut total = 0.0;
        let mut edge = 0.0;
        for k in 0..g.len() {
            let c = f.values()[k] * g.weight(k) * norm(g.node(k)).powf(p);
            total += c;
            if g.on_boundary(k) {
                edge += c;
            }
        }
        moments.push(total);
        tail_share.push(if total > 0.0 { edge / total } else { 0.0 });
    }
    let worst = tail_share.iter().copied().fold(0.0, f64::max);
    let warning = (worst > 0.01).then(|| format!("tail clipped: {:.2}% of the p-moment sits in the outer cells", 100.0 * worst));
    MomentDiagnostics { times: path.times.clone(), moments, tail_share, warning }
}

/// How U_t is evaluated inside the approximant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LuwMode {
    /// U_t(h) = h. Exact when h is Maxwellian. It is also exact for J on
    /// every segment, since there q is the reference flow of the U part.
    Frozen,
    /// Mean-field Kac with `n_mf` particles and `replicas` runs.
    Simulated { n_mf: usize, replicas: usize, seed: u64 },
}

/// Bookkeeping at each segment start t_i.
#[derive(Clone, Debug)]
pub struct LuwComponent {
    pub t: f64,
    /// h_i^n.
    pub h: GridDensity,
    /// g_i^n (absent for the initial segment).
    pub g: Option<GridDensity>,
    /// e_{n,i}.
    pub e_n: f64,
    /// Mass of g_i^n outside the grid box before renormalisation.
    pub tail: f64,
}

/// The n-th approximating pair.
#[derive(Clone, Debug)]
pub struct LuwPath {
    pub n: usize,
    pub profile: EnergyProfile,
    pub path: DensityPath,
    pub flow: ProductFlow,
    pub components: Vec<LuwComponent>,
    pub energies: EnergyTable,
    /// Mass clipped from negative parts of the h recursion.
    pub clipped_negative: f64,
}

/// Negative mass above this in the h recursion is an error.
pub const NEGATIVE_TOL: f64 = 1e-6;

fn clip_negative(vals: Vec<f64>, g: &GridSpec) -> Result<(GridDensity, f64)> {
    let neg: f64 = vals.iter().zip(g.weights()).filter(|(v, _)| **v < 0.0).map(|(v, w)| -v * w).sum();
    if neg > NEGATIVE_TOL {
        return Err(Error::NegativeDensity { mass: neg });
    }
    let d = GridDensity::new(g.clone(), vals.into_iter().map(|v| v.max(0.0)).collect())?.normalized()?;
    Ok((d, neg))
}

/// Builds f^n and q^n on the snapshot times (the profile's jump times are
/// always added). On the segment after t_i the path is
/// (1 − (k−i)/(nk))·U_{t−t_i}(h_i) + (1/(nk))·Σ_{j>i} g_j, and the flow is
/// (1 − (k−i)/(nk))·½ U⊗U B.
pub fn build_luw_approximant(
    f0: &GridDensity,
    prof: &EnergyProfile,
    n: usize,
    m: &BaseMeasure,
    u: &[f64],
    times: &[f64],
    mode: LuwMode,
) -> Result<LuwPath> {
    let k = prof.jumps().len();
    if k == 0 || n == 0 {
        return invalid("the approximant needs n >= 1 and at least one jump");
    }
    if !m.gamma0_star().is_finite() {
        return invalid("the base measure must have a finite critical tilt");
    }
    let g = f0.grid().clone();
    if m.grid() != &g {
        return Err(Error::GridMismatch);
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    if prof.jumps().last().is_none_or(|j| j.0 >= horizon) {
        return invalid("all jumps must happen before T");
    }
    let ts = snapshot_times(horizon, 2, &[times, &prof.jump_times()].concat());
    let nk = (n * k) as f64;

    // tilted components g_i, renormalised on the common grid
    let mut gs = Vec::with_capacity(k);
    let mut tails = Vec::with_capacity(k);
    for &(_, de) in prof.jumps() {
        let e_n = nk * de;
        let x = MacroState::new(e_n, u.to_vec())?;
        let (gd, tail) = tilt_density_on(m, &x, &g)?;
        gs.push((gd.normalized()?, e_n));
        tails.push(tail);
    }

    // segment boundaries as snapshot indices
    let mut cuts = vec![0usize];
    for &(tj, _) in prof.jumps() {
        cuts.push(ts.iter().position(|&t| t == tj).expect("jump times were merged in"));
    }
    cuts.push(ts.len() - 1);

    let mut densities: Vec<Option<GridDensity>> = vec![None; ts.len()];
    let mut segments = Vec::with_capacity(k + 1);
    let mut components = Vec::with_capacity(k + 1);
    let mut clipped_negative = 0.0;
    let mut h = f0.clone();
    for s in 0..=k {
        let a_s = 1.0 - (k - s) as f64 / nk;
        let rest: Vec<f64> = {
            let mut r = vec![0.0; g.len()];
            for (gd, _) in &gs[s..] {
                r.iter_mut().zip(gd.values()).for_each(|(x, y)| *x += y / nk);
            }
            r
        };
        if s > 0 {
            let prev = densities[cuts[s]].as_ref().expect("end of previous segment");
            let vals: Vec<f64> = prev.values().iter().zip(&rest).map(|(f, r)| (f - r) / a_s).collect();
            let (hs, neg) = clip_negative(vals, &g)?;
            clipped_negative += neg;
            h = hs;
        }
        components.push(LuwComponent {
            t: ts[cuts[s]],
            h: h.clone(),
            g: (s > 0).then(|| gs[s - 1].0.clone()),
            e_n: if s > 0 { gs[s - 1].1 } else { 0.0 },
            tail: if s > 0 { tails[s - 1] } else { 0.0 },
        });
        let (i0, i1) = (cuts[s], cuts[s + 1]);
        let t0 = ts[i0];
        let local: Vec<f64> = ts[i0..=i1].iter().map(|t| t - t0).collect();
        let us: Vec<GridDensity> = match mode {
            LuwMode::Frozen => vec![h.clone(); local.len()],
            LuwMode::Simulated { n_mf, replicas, seed } => {
                let mut p = boltzmann_path(&h, &local, n_mf, replicas, crate::rng::child_seed(seed, s as u64))?;
                // the segment starts exactly at h
                p.path.densities[0] = h.clone();
                p.path.densities
            }
        };
        for (j, uj) in us.iter().enumerate() {
            let idx = i0 + j;
            if s > 0 && j == 0 {
                continue; // continuity: already set by the previous segment
            }
            let vals: Vec<f64> = uj.values().iter().zip(&rest).map(|(x, r)| a_s * x + r).collect();
            densities[idx] = Some(GridDensity::new(g.clone(), vals)?);
        }
        segments.push(ProductSegment { start: i0, end: i1, weight: a_s, components: us });
    }
    let path = DensityPath::new(ts, densities.into_iter().map(|d| d.expect("every snapshot set")).collect())?;
    let flow = ProductFlow { segments };
    flow.validate(&path)?;
    let energies = path.energy_profile();
    Ok(LuwPath { n, profile: prof.clone(), path, flow, components, energies, clipped_negative })
}

#[derive(Serialize)]
struct Manifest<'a> {
    n: usize,
    profile: &'a EnergyProfile,
    times: &'a [f64],
    energies: &'a [f64],
    files: Vec<String>,
    diagnostics: ManifestDiagnostics,
}

#[derive(Serialize)]
struct ManifestDiagnostics {
    component_tails: Vec<f64>,
    clipped_negative: f64,
}

impl LuwPath {
    pub fn pair(&self) -> Result<DiscretizedPair> {
        DiscretizedPair::product(self.path.clone(), self.flow.clone())
    }

    /// Largest L¹ gap between f^n at a jump time and the start of the
    /// following segment (zero by construction up to clipping).
    pub fn continuity_gap(&self) -> Result<f64> {
        let g = self.path.grid();
        let nk = (self.n * self.profile.jumps().len()) as f64;
        let mut worst: f64 = 0.0;
        for (seg, comp) in self.flow.segments.iter().zip(&self.components).skip(1) {
            let mut right: Vec<f64> = comp.h.values().iter().map(|x| seg.weight * x).collect();
            for c in self.components.iter().filter(|c| c.t > comp.t) {
                if let Some(gd) = &c.g {
                    right.iter_mut().zip(gd.values()).for_each(|(a, b)| *a += b / nk);
                }
            }
            let left = self.path.densities[seg.start].values();
            let gap: f64 = left.iter().zip(&right).zip(g.weights()).map(|((a, b), w)| (a - b).abs() * w).sum();
            worst = worst.max(gap);
        }
        Ok(worst)
    }

    /// One GridDensity CSV per snapshot plus manifest.json.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, f) in self.path.densities.iter().enumerate() {
            let name = format!("f_{k:04}.csv");
            f.write_csv(&dir.join(&name))?;
            files.push(name);
        }
        let man = Manifest {
            n: self.n,
            profile: &self.profile,
            times: &self.path.times,
            energies: &self.energies.energy,
            files,
            diagnostics: ManifestDiagnostics {
                component_tails: self.components.iter().map(|c| c.tail).collect(),
                clipped_negative: self.clipped_negative,
            },
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&man)?)?;
        Ok(())
    }
}

/// One row of the convergence table.
#[derive(Clone, Debug, Serialize)]
pub struct LuwRow {
    pub n: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub h_limit: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    pub max_tail: f64,
}

/// J and H_{e,u}(π^n₀) along n, with the limit H_{e,u}(f₀).
pub fn luw_rate_convergence(
    f0: &GridDensity,
    prof: &EnergyProfile,
    m: &BaseMeasure,
    x: &MacroState,
    n_list: &[usize],
    times: &[f64],
    mode: LuwMode,
) -> Result<Vec<LuwRow>> {
    if n_list.is_empty() {
        return invalid("empty n list");
    }
    if !(x.e() > prof.final_value()) {
        return invalid("the ambient energy must exceed E(T)");
    }
    let h_limit = micro_sanov_rate(f0, m, x)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let lp = build_luw_approximant(f0, prof, n, m, x.u(), times, mode)?;
        let j = dynamical_rate(&lp.pair()?)?;
        let h = micro_sanov_rate(lp.path.initial(), m, x)?;
        rows.push(LuwRow {
            n,
            j,
            h,
            h_limit,
            energy_start: lp.energies.energy[0],
            energy_end: *lp.energies.energy.last().expect("nonempty"),
            max_tail: lp.components.iter().map(|c| c.tail).fold(0.0, f64::max),
        });
    }
    Ok(rows)
}

/// Closed form γ₀*·(E(T) − E(0)) against the numerical infimum.
#[derive(Clone, Debug, Serialize)]
pub struct CanonicalCost {
    pub closed_form: f64,
    pub numeric: f64,
    pub argmin_e: f64,
    pub warning: Option<String>,
}

/// inf_{e ≥ E(T)} [A(e,u) + H_{e,u}(m)] with u = m(ζ), which expands to
/// A + Ent(m|m_{e,u}) + (γ₀* − γ₀(e,u))(e − E(0)).
pub fn luw_canonical_cost(m: &BaseMeasure, prof: &EnergyProfile) -> Result<CanonicalCost> {
    let gs = m.gamma0_star();
    if !gs.is_finite() {
        return invalid("the base measure must have a finite critical tilt");
    }
    let mean = m.mean_macro();
    if (mean.e() - prof.base()).abs() > 1e-6 {
        return invalid("E(0) must equal the mean energy of m");
    }
    if prof.jumps().is_empty() {
        return Ok(CanonicalCost {
            closed_form: 0.0,
            numeric: 0.0,
            argmin_e: prof.base(),
            warning: Some("no jump in the energy profile".into()),
        });
    }
    let u = mean.u().to_vec();
    let mg = m.as_grid_density();
    let obj = |e: f64| -> f64 {
        let x = MacroState::new_unchecked(e, u.clone());
        match (cramer_rate(m, &x), micro_sanov_rate(&mg, m, &x)) {
            (Ok(a), Ok(h)) => a + h,
            _ => f64::INFINITY,
        }
    };
    let e_t = prof.final_value();
    let (e2, v2) = golden_min(e_t, 4.0 * e_t, 1e-10, obj);
    let v_t = obj(e_t);
    let (argmin_e, numeric) = if v_t <= v2 { (e_t, v_t) } else { (e2, v2) };
    // the tilt must exist at the argmin for the value to mean anything
    solve_tilt(m, &MacroState::new_unchecked(argmin_e, u))?;
    Ok(CanonicalCost { closed_form: gs * prof.total_jump(), numeric, argmin_e, warning: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m() -> BaseMeasure {
        BaseMeasure::gaussian(1.0, GridSpec::new(2, 8.0, 41).unwrap()).unwrap()
    }

    #[test]
    fn profile_is_left_continuous() {
        let p = EnergyProfile::new(1.0, vec![(0.3, 0.5), (0.6, 0.25)]).unwrap();
        assert_eq!(p.value(0.3), 1.0);
        assert_eq!(p.value(0.31), 1.5);
        assert_eq!(p.final_value(), 1.75);
        assert!(EnergyProfile::new(1.0, vec![(0.3, -0.5)]).is_err());
        assert!(EnergyProfile::new(1.0, vec![(0.3, 0.5), (0.2, 0.5)]).is_err());
    }

    #[test]
    fn maxwellian_is_stationary_for_the_semigroup() {
        let m = m();
        let f = m.as_grid_density();
        let p = boltzmann_path(&f, &[0.0, 0.5], 2000, 4, 11).unwrap();
        let (e0, se0) = p.energy[0];
        let (e1, _) = p.energy[1];
        assert!((e1 - e0).abs() < 1e-10, "energy is conserved replica by replica");
        assert!((e0 - 1.0).abs() < 3.0 * se0.max(1e-3) + 0.01);
        let d = p.path.densities[1].l1_distance(&f).unwrap();
        let d0 = p.path.densities[0].l1_distance(&f).unwrap();
        assert!(d < d0 + 0.05, "{d} {d0}");
        let md = moment_diagnostics(&DensityPath::constant(f.clone(), vec![0.0, 1.0]).unwrap(), 2.0);
        assert!((md.moments[0] - 2.0 * f.energy()).abs() < 1e-12);
        assert!(md.warning.is_none());
    }

    #[test]
    fn approximant_boundary_cases_and_energy_bookkeeping() {
        let m = BaseMeasure::gaussian(1.0, GridSpec::new(2, 13.0, 66).unwrap()).unwrap();
        let f0 = m.as_grid_density();
        let prof = EnergyProfile::new(1.0, vec![(0.5, 0.5)]).unwrap();
        let times = [0.0, 0.25, 0.5, 0.75, 1.0];
        let one = build_luw_approximant(&f0, &prof, 1, &m, &[0.0, 0.0], &times, LuwMode::Frozen).unwrap();
        // n = k = 1: on [0, t1] the path is g_1 alone
        let g1 = one.components[1].g.clone().unwrap();
        assert!(one.path.densities[0].l1_distance(&g1).unwrap() < 1e-12);
        for n in [2, 4, 8] {
            let lp = build_luw_approximant(&f0, &prof, n, &m, &[0.0, 0.0], &times, LuwMode::Frozen).unwrap();
            let want = 1.5 - 1.0 / n as f64;
            assert!((lp.energies.energy[0] - want).abs() < 1e-6, "{} {want}", lp.energies.energy[0]);
            assert!(lp.continuity_gap().unwrap() < 1e-10);
            assert_eq!(lp.clipped_negative, 0.0);
        }
    }

    /// Monte Carlo oracle for the first segment of the one-jump Gaussian
    /// approximant: f = a·m + g/n, q = a·½ m⊗m B with m = N(0, I),
    /// g = N(0, (n/2) I), ambient e = 2.
    fn oracle(n: usize, t1: f64) -> (f64, f64) {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let a = 1.0 - 1.0 / n as f64;
        let s2 = n as f64 / 2.0;
        let gauss = |v: &[f64; 2], var: f64| (-(v[0] * v[0] + v[1] * v[1]) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var);
        let f = |v: &[f64; 2]| a * gauss(v, 1.0) + gauss(v, s2) / n as f64;
        let mut rng = crate::rng::replica(99, n as u64);
        let mut draw = |var: f64| -> [f64; 2] {
            let s = var.sqrt();
            [s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal)]
        };
        let samples = 400_000;
        let (mut lam_ff, mut lam_mm, mut log_term, mut ent) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..samples {
            // pair from f ⊗ f: component chosen by a uniform from Φ(z)
            let pick = |u: f64, d: &mut dyn FnMut(f64) -> [f64; 2]| if u < a { d(1.0) } else { d(s2) };
            let (u1, u2): (f64, f64) = (draw(1.0)[0], draw(1.0)[0]);
            let p1 = statrs_cdf(u1);
            let p2 = statrs_cdf(u2);
            let x = pick(p1, &mut draw);
            let y = pick(p2, &mut draw);
            lam_ff += 2.0 * ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            // entropy of f relative to m_{2,0} = N(0, 2I)
            ent += (f(&x) / gauss(&x, 2.0)).ln();
            // pair from m ⊗ m
            let (v, w) = (draw(1.0), draw(1.0));
            let lam = 2.0 * ((v[0] - w[0]).powi(2) + (v[1] - w[1]).powi(2)).sqrt();
            lam_mm += lam;
            log_term += lam * (a * gauss(&v, 1.0) * gauss(&w, 1.0) / (f(&v) * f(&w))).ln();
        }
        let k = samples as f64;
        let j = t1 * (0.5 * a * log_term / k - 0.5 * a * lam_mm / k + 0.5 * lam_ff / k);
        let energy = a * 1.0 + s2 / n as f64;
        let h = ent / k + 0.5 * (2.0 - energy);
        (j, h)
    }

    fn statrs_cdf(z: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        Normal::new(0.0, 1.0).unwrap().cdf(z)
    }

    #[test]
    fn approximant_rates_match_the_mixture_oracle() {
        let m = m();
        let f0 = m.as_grid_density();
        let prof = EnergyProfile::new(1.0, vec![(0.5, 0.5)]).unwrap();
        let x = MacroState::at_rest(2.0, 2).unwrap();
        let rows = luw_rate_convergence(&f0, &prof, &m, &x, &[2, 4, 8], &[0.0, 1.0], LuwMode::Frozen).unwrap();
        assert!((rows[0].h_limit - 2f64.ln()).abs() < 1e-4);
        // n = 2 puts g_1 = m, so f₀ⁿ = m and the segment J is closed form
        let qpi = 0.5 * crate::observables::pair_lambda_integral(&f0);
        let want = 0.5 * qpi * (0.5 * 0.5f64.ln() + 0.5);
        assert!((rows[0].j - want).abs() < 1e-10, "{} {want}", rows[0].j);
        assert!((rows[0].h - 2f64.ln()).abs() < 1e-4);
        for r in &rows[1..] {
            let (j, h) = oracle(r.n, 0.5);
            assert!((r.j - j).abs() < 0.02 * j, "n={} J {} vs {j}", r.n, r.j);
            assert!((r.h - h).abs() < 0.01, "n={} H {} vs {h}", r.n, r.h);
        }
    }

    #[test]
    fn canonical_cost_closed_form_battery() {
        for sigma in [0.8f64, 1.0, 1.25] {
            let grid = GridSpec::new(2, 10.0 * sigma, 61).unwrap();
            let m = BaseMeasure::gaussian(sigma, grid).unwrap();
            let e0 = sigma * sigma;
            for de in [0.25, 0.5, 1.0] {
                let prof = EnergyProfile::new(e0, vec![(0.5, de)]).unwrap();
                let c = luw_canonical_cost(&m, &prof).unwrap();
                assert!((c.closed_form - de / (sigma * sigma)).abs() < 1e-12);
                assert!((c.numeric - c.closed_form).abs() < 1e-4, "{sigma} {de} {c:?}");
                assert!((c.argmin_e - e0 - de).abs() < 1e-6);
            }
        }
        let m = BaseMeasure::gaussian(1.0, GridSpec::new(2, 10.0, 61).unwrap()).unwrap();
        let flat = EnergyProfile::new(1.0, vec![]).unwrap();
        let c = luw_canonical_cost(&m, &flat).unwrap();
        assert_eq!(c.numeric, 0.0);
        assert!(c.warning.is_some());
        let a = luw_canonical_cost(&m, &EnergyProfile::new(1.0, vec![(0.5, 0.5)]).unwrap()).unwrap();
        let b = luw_canonical_cost(&m, &EnergyProfile::new(1.0, vec![(0.5, 1.0)]).unwrap()).unwrap();
        assert_eq!(b.closed_form, 2.0 * a.closed_form);
    }
}
