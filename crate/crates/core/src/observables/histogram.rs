//! Flow histograms: symmetrised binning of collision events, and the
//! reference flow Q^π = ½ π⊗π B dω dt on the same bins.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kac::Trajectory;
use crate::measures::{GridDensity, GridSpec};

use super::bins::FlowGrid;
use super::paths::DensityPath;

/// Bin masses on a [`FlowGrid`].
#[derive(Clone, Debug, Serialize)]
pub struct FlowHistogram {
    pub grid: FlowGrid,
    pub mass: Vec<f64>,
}

impl FlowHistogram {
    pub fn zeros(grid: &FlowGrid) -> Self {
        Self { grid: grid.clone(), mass: vec![0.0; grid.len()] }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid.clone(), mass: self.mass.iter().map(|m| c * m).collect() }
    }

    /// Sum of masses, checking the grids agree.
    pub fn add(&mut self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        self.mass.iter_mut().zip(&other.mass).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Q^N binned: each event puts 1/(4N) on (v, v*, ±ω) and (v*, v, ±ω).
    pub fn from_trajectory(grid: &FlowGrid, traj: &Trajectory) -> Result<Self> {
        if traj.dim() != grid.dim() {
            return Err(Error::GridMismatch);
        }
        let mut h = Self::zeros(grid);
        let w = 0.25 / traj.n() as f64;
        for e in &traj.events {
            let tb = grid.time_index(e.t);
            let a = grid.velocity.index(&e.v_in);
            let b = grid.velocity.index(&e.vstar_in);
            let o = grid.directions.index(&e.omega);
            let oa = grid.directions.antipode(o);
            for (x, y) in [(a, b), (b, a)] {
                h.mass[grid.index(tb, x, y, o)] += w;
                h.mass[grid.index(tb, x, y, oa)] += w;
            }
        }
        Ok(h)
    }

    /// Q^{π^N} for the trajectory's own empirical measure, accumulated
    /// exactly between events. Pair rates are refreshed from scratch every
    /// N events to stop rounding drift.
    pub fn reference_from_trajectory(grid: &FlowGrid, traj: &Trajectory) -> Result<Self> {
        if traj.dim() != grid.dim() {
            return Err(Error::GridMismatch);
        }
        let n = traj.n();
        let d = traj.dim();
        let no = grid.directions.len();
        let s = grid.slice_len();
        let scale = 0.5 / (n as f64 * n as f64);
        let mut c = traj.initial.clone();
        let mut bins: Vec<usize> = (0..n).map(|i| grid.velocity.index(c.particle(i))).collect();
        let mut rate = vec![0.0; s];
        let mut last = vec![0.0; s];
        let mut acc = vec![0.0; grid.len()];
        let mut beta = vec![0.0; no];
        let mut w = vec![0.0; d];

        let mut pair = |c: &crate::microcanonical::Configuration,
                        bins: &[usize],
                        i: usize,
                        j: usize,
                        sign: f64,
                        t: f64,
                        rate: &mut [f64],
                        last: &mut [f64],
                        acc: &mut [f64]| {
            for a in 0..d {
                w[a] = c.particle(i)[a] - c.particle(j)[a];
            }
            grid.directions.kernel_integrals(&w, &mut beta);
            for (x, y) in [(bins[i], bins[j]), (bins[j], bins[i])] {
                let base = grid.slice_index(x, y, 0);
                for o in 0..no {
                    let e = base + o;
                    if last[e] < t {
                        grid.spread_in_time(acc, e, rate[e].max(0.0), last[e], t);
                        last[e] = t;
                    }
                    rate[e] += sign * scale * beta[o];
                }
            }
        };

        let rebuild = |c: &crate::microcanonical::Configuration,
                       bins: &[usize],
                       t: f64,
                       rate: &mut [f64],
                       last: &mut [f64],
                       acc: &mut [f64],
                       pair: &mut dyn FnMut(
            &crate::microcanonical::Configuration,
            &[usize],
            usize,
            usize,
            f64,
            f64,
            &mut [f64],
            &mut [f64],
            &mut [f64],
        )| {
            for e in 0..s {
                grid.spread_in_time(acc, e, rate[e].max(0.0), last[e], t);
                last[e] = t;
            }
            rate.fill(0.0);
            for i in 0..n {
                for j in i + 1..n {
                    pair(c, bins, i, j, 1.0, t, rate, last, acc);
                }
            }
        };

        rebuild(&c, &bins, 0.0, &mut rate, &mut last, &mut acc, &mut pair);
        for (k, ev) in traj.events.iter().enumerate() {
            let t = ev.t;
            for p in [ev.i, ev.j] {
                for q in 0..n {
                    if q != ev.i && q != ev.j {
                        pair(&c, &bins, p, q, -1.0, t, &mut rate, &mut last, &mut acc);
                    }
                }
            }
            pair(&c, &bins, ev.i, ev.j, -1.0, t, &mut rate, &mut last, &mut acc);
            c.particle_mut(ev.i).copy_from_slice(&ev.v_out);
            c.particle_mut(ev.j).copy_from_slice(&ev.vstar_out);
            bins[ev.i] = grid.velocity.index(&ev.v_out);
            bins[ev.j] = grid.velocity.index(&ev.vstar_out);
            if (k + 1) % n == 0 {
                rebuild(&c, &bins, t, &mut rate, &mut last, &mut acc, &mut pair);
                continue;
            }
            for p in [ev.i, ev.j] {
                for q in 0..n {
                    if q != ev.i && q != ev.j {
                        pair(&c, &bins, p, q, 1.0, t, &mut rate, &mut last, &mut acc);
                    }
                }
            }
            pair(&c, &bins, ev.i, ev.j, 1.0, t, &mut rate, &mut last, &mut acc);
        }
        let t_end = traj.horizon;
        for e in 0..s {
            grid.spread_in_time(&mut acc, e, rate[e].max(0.0), last[e], t_end);
        }
        Ok(Self { grid: grid.clone(), mass: acc })
    }

    /// Q^π for a gridded density path: node-pair quadrature in (v, v*),
    /// exact bin integrals in ω and the trapezoid rule in time.
    pub fn reference_from_path(grid: &FlowGrid, path: &DensityPath) -> Result<Self> {
        let refs: Vec<&GridDensity> = path.densities.iter().collect();
        let mut h = Self::zeros(grid);
        pair_density_masses(grid, &path.times, &refs, 1.0, &mut h.mass)?;
        Ok(h)
    }

    /// Bin masses of a product-form flow.
    pub fn from_product(grid: &FlowGrid, path: &DensityPath, flow: &ProductFlow) -> Result<Self> {
        flow.validate(path)?;
        let mut h = Self::zeros(grid);
        for seg in &flow.segments {
            let refs: Vec<&GridDensity> = seg.components.iter().collect();
            pair_density_masses(grid, &path.times[seg.start..=seg.end], &refs, seg.weight, &mut h.mass)?;
        }
        Ok(h)
    }
}

/// On [times[start], times[end]] the flow density is
/// weight · ½ U_t(v) U_t(v*) B(v − v*, ω), with U_t given at each snapshot.
#[derive(Clone, Debug)]
pub struct ProductSegment {
    pub start: usize,
    pub end: usize,
    pub weight: f64,
    pub components: Vec<GridDensity>,
}

/// Piecewise product-form flow density over a [`DensityPath`].
#[derive(Clone, Debug)]
pub struct ProductFlow {
    pub segments: Vec<ProductSegment>,
}

impl ProductFlow {
    /// q = q^π: one segment, U = f.
    pub fn reference(path: &DensityPath) -> Self {
        Self {
            segments: vec![ProductSegment {
                start: 0,
                end: path.times.len() - 1,
                weight: 1.0,
                components: path.densities.clone(),
            }],
        }
    }

    /// Every weight multiplied by c.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.segments.iter_mut().for_each(|s| s.weight *= c);
        out
    }

    pub fn validate(&self, path: &DensityPath) -> Result<()> {
        let mut expect = 0;
        for s in &self.segments {
            if s.start != expect || s.end < s.start || s.end >= path.times.len() {
                return invalid("segments must tile the snapshot index range");
            }
            if s.components.len() != s.end - s.start + 1 {
                return invalid("one component per snapshot in each segment");
            }
            if !(s.weight >= 0.0) {
                return invalid("segment weights must be nonnegative");
            }
            if s.components.iter().any(|c| c.grid() != path.grid()) {
                return Err(Error::GridMismatch);
            }
            expect = s.end;
        }
        if expect != path.times.len() - 1 || self.segments.is_empty() {
            return invalid("segments must cover the whole path");
        }
        Ok(())
    }

    /// Total mass ∫dt weight·½ U⊗U(λ), by node pairs and the trapezoid rule.
    pub fn mass(&self, path: &DensityPath) -> Result<f64> {
        self.validate(path)?;
        let mut total = 0.0;
        for s in &self.segments {
            let vals: Vec<f64> = s.components.iter().map(|u| s.weight * 0.5 * pair_lambda_integral(u)).collect();
            total += trapezoid(&path.times[s.start..=s.end], &vals);
        }
        Ok(total)
    }
}

pub fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2).zip(ys.windows(2)).map(|(t, y)| 0.5 * (y[0] + y[1]) * (t[1] - t[0])).sum()
}

/// Per-axis index difference table for a uniform grid: index of (k − l).
pub struct OffsetTable {
    pub span: usize,
    pub dim: usize,
    pub points: usize,
}

impl OffsetTable {
    pub fn new(g: &GridSpec) -> Self {
        Self { span: 2 * g.points() - 1, dim: g.dim(), points: g.points() }
    }
    pub fn len(&self) -> usize {
        self.span.pow(self.dim as u32)
    }
    /// Flat offset index of the difference of two flat node indices.
    #[inline]
    pub fn offset(&self, mut k: usize, mut l: usize) -> usize {
        let mut idx = 0;
        let mut mul = 1;
        for _ in 0..self.dim {
            let (a, b) = (k % self.points, l % self.points);
            idx += (a + self.points - 1 - b) * mul;
            mul *= self.span;
            k /= self.points;
            l /= self.points;
        }
        idx
    }
    /// The vector x_k − x_l for an offset index.
    pub fn vector(&self, g: &GridSpec, mut o: usize) -> Vec<f64> {
        let h = g.spacing();
        let mut v = vec![0.0; self.dim];
        // flat node indices are row-major with axis 0 slowest
        for a in (0..self.dim).rev() {
            v[a] = ((o % self.span) as f64 - (self.points - 1) as f64) * h;
            o /= self.span;
        }
        v
    }
}

/// ∫∫ u(v)u(v*) λ(v − v*) by node pairs.
pub fn pair_lambda_integral(u: &GridDensity) -> f64 {
    let g = u.grid();
    let table = OffsetTable::new(g);
    let kap = crate::kac::kappa(g.dim());
    let lam: Vec<f64> = (0..table.len()).map(|o| kap * crate::vecops::norm(&table.vector(g, o))).collect();
    let a: Vec<(usize, f64)> = u
        .values()
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(k, f)| (k, f * g.weight(k)))
        .collect();
    let mut s = 0.0;
    for &(k, fk) in &a {
        let mut row = 0.0;
        for &(l, fl) in &a {
            row += fl * lam[table.offset(k, l)];
        }
        s += fk * row;
    }
    s
}

/// Adds ∫ weight·½ U_t⊗U_t B over every flow bin, trapezoid in time
/// (linear interpolation between snapshots), into `out`.
fn pair_density_masses(
    grid: &FlowGrid,
    times: &[f64],
    comps: &[&GridDensity],
    weight: f64,
    out: &mut [f64],
) -> Result<()> {
    if comps.is_empty() || times.len() != comps.len() {
        return invalid("one density per time");
    }
    let g = comps[0].grid();
    if g.dim() != grid.dim() || comps.iter().any(|c| c.grid() != g) {
        return Err(Error::GridMismatch);
    }
    let s = grid.slice_len();
    let no = grid.directions.len();
    let table = OffsetTable::new(g);
    let mut beta = vec![0.0; table.len() * no];
    for o in 0..table.len() {
        let w = table.vector(g, o);
        grid.directions.kernel_integrals(&w, &mut beta[o * no..(o + 1) * no]);
    }
    let vbin: Vec<usize> = (0..g.len()).map(|k| grid.velocity.index(g.node(k))).collect();
    let slice = |u: &GridDensity| -> Vec<f64> {
        let mut acc = vec![0.0; s];
        let a: Vec<(usize, f64)> = u
            .values()
            .iter()
            .enumerate()
            .filter(|(_, f)| **f > 0.0)
            .map(|(k, f)| (k, f * g.weight(k)))
            .collect();
        for &(k, fk) in &a {
            for &(l, fl) in &a {
                let c = 0.5 * weight * fk * fl;
                let o = table.offset(k, l) * no;
                let base = grid.slice_index(vbin[k], vbin[l], 0);
                for b in 0..no {
                    acc[base + b] += c * beta[o + b];
                }
            }
        }
        acc
    };
    let slices: Vec<Vec<f64>> = comps.iter().map(|u| slice(u)).collect();
    for w in 0..times.len().saturating_sub(1) {
        let (t0, t1) = (times[w], times[w + 1]);
        if !(t1 > t0) {
            continue;
        }
        // split [t0, t1] at time-bin edges; integrate the linear interpolant
        let mut cuts = vec![t0];
        cuts.extend(grid.time_edges.iter().copied().filter(|&e| e > t0 && e < t1));
        cuts.push(t1);
        for c in cuts.windows(2) {
            let (a, b) = (c[0], c[1]);
            let tb = grid.time_index(0.5 * (a + b));
            let mid = 0.5 * (a + b);
            let lam = (mid - t0) / (t1 - t0);
            for e in 0..s {
                let v = (1.0 - lam) * slices[w][e] + lam * slices[w + 1][e];
                out[tb * s + e] += v * (b - a);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kac::{simulate_exact, Scheme};
    use crate::measures::{BaseMeasure, GridSpec, MacroState};
    use crate::microcanonical::sample_gaussian_micro;
    use crate::observables::{DirectionBins, VelocityBins};
    use crate::rng::replica;
    use rand::Rng;

    fn coarse(t: f64) -> FlowGrid {
        FlowGrid::uniform(t, 2, VelocityBins::new(2, 2, 1.0).unwrap(), DirectionBins::Angle(4)).unwrap()
    }

    #[test]
    fn event_histogram_is_symmetric_with_mass_events_over_n() {
        let x = MacroState::at_rest(1.0, 2).unwrap();
        let init = sample_gaussian_micro(30, &x, &mut replica(5, 0)).unwrap();
        let tr = simulate_exact(&init, 1.0, &mut replica(5, 1));
        let g = coarse(1.0);
        let h = FlowHistogram::from_trajectory(&g, &tr).unwrap();
        assert!((h.total() - tr.events.len() as f64 / 30.0).abs() < 1e-12);
        // odd F under v <-> v*: sum over bins of F(centre) * mass vanishes
        let odd: f64 = (0..g.len())
            .map(|k| {
                let (_, v, w, _) = g.center(k);
                (v[0] - w[0]) * h.mass[k]
            })
            .sum();
        assert!(odd.abs() < 1e-14);
        let _ = Scheme::Exact;
    }

    #[test]
    fn exact_reference_matches_brute_force() {
        let x = MacroState::at_rest(1.0, 2).unwrap();
        let init = sample_gaussian_micro(12, &x, &mut replica(2, 0)).unwrap();
        let tr = simulate_exact(&init, 1.5, &mut replica(2, 1));
        let g = FlowGrid::uniform(1.5, 3, VelocityBins::new(2, 2, 1.0).unwrap(), DirectionBins::Angle(4)).unwrap();
        let fast = FlowHistogram::reference_from_trajectory(&g, &tr).unwrap();
        // brute force: fine time quadrature of the instantaneous rate vector
        let mut slow = vec![0.0; g.len()];
        let steps = 30_000;
        let dt = 1.5 / steps as f64;
        let mut beta = vec![0.0; 4];
        let snaps: Vec<f64> = (0..steps).map(|k| (k as f64 + 0.5) * dt).collect();
        let cs = tr.snapshots(&snaps);
        for (t, c) in snaps.iter().zip(&cs) {
            let tb = g.time_index(*t);
            for i in 0..12 {
                for j in 0..12 {
                    if i == j {
                        continue;
                    }
                    let w: Vec<f64> = (0..2).map(|a| c.particle(i)[a] - c.particle(j)[a]).collect();
                    g.directions.kernel_integrals(&w, &mut beta);
                    let (a, b) = (g.velocity.index(c.particle(i)), g.velocity.index(c.particle(j)));
                    for o in 0..4 {
                        slow[g.index(tb, a, b, o)] += 0.5 / 144.0 * beta[o] * dt;
                    }
                }
            }
        }
        for k in 0..g.len() {
            assert!((fast.mass[k] - slow[k]).abs() < 2e-3 * fast.total() / g.len() as f64 + 1e-9, "{k}");
        }
        let lam: f64 = (0..12)
            .flat_map(|i| (i + 1..12).map(move |j| (i, j)))
            .map(|(i, j)| crate::kac::pair_rate(init.particle(i), init.particle(j)))
            .sum::<f64>();
        assert!(fast.total() > 0.0 && lam > 0.0);
    }

    #[test]
    fn gaussian_reference_mass_against_monte_carlo() {
        let grid = GridSpec::new(2, 7.0, 56).unwrap();
        let m = BaseMeasure::gaussian(1.0, grid).unwrap();
        let f = m.as_grid_density();
        let path = DensityPath::constant(f.clone(), vec![0.0, 1.0]).unwrap();
        let fg = FlowGrid::uniform(1.0, 1, VelocityBins::new(2, 2, 1.0).unwrap(), DirectionBins::Angle(4)).unwrap();
        let q = FlowHistogram::reference_from_path(&fg, &path).unwrap();
        // oracle: ½·E λ(v − v*) = E|v − v*| for independent standard normals
        let mut rng = replica(77, 0);
        let n = 4_000_000;
        let mut s = 0.0;
        for _ in 0..n {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            let c: f64 = rng.sample(rand_distr::StandardNormal);
            let d: f64 = rng.sample(rand_distr::StandardNormal);
            s += ((a - c).powi(2) + (b - d).powi(2)).sqrt();
        }
        let mc = s / n as f64;
        assert!((q.total() - mc).abs() < 1e-3 * mc, "{} vs {mc}", q.total());
        // time-constant path: doubling T doubles the mass
        let path2 = DensityPath::constant(f, vec![0.0, 2.0]).unwrap();
        let fg2 = FlowGrid::uniform(2.0, 1, fg.velocity.clone(), DirectionBins::Angle(4)).unwrap();
        let q2 = FlowHistogram::reference_from_path(&fg2, &path2).unwrap();
        assert_eq!(q2.total(), 2.0 * q.total());
        let lam = ProductFlow::reference(&path).mass(&path).unwrap();
        assert!((lam - q.total()).abs() < 1e-10 * lam);
    }

    #[test]
    fn concentrated_path_has_no_reference_mass() {
        let grid = GridSpec::new(2, 2.0, 9).unwrap();
        let k = grid.locate(&[0.5, 0.0]).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|j| if j == k { 1.0 / grid.weight(k) } else { 0.0 }).collect();
        let f = GridDensity::new(grid, vals).unwrap();
        let path = DensityPath::constant(f, vec![0.0, 1.0]).unwrap();
        let q = FlowHistogram::reference_from_path(&coarse(1.0), &path).unwrap();
        assert_eq!(q.total(), 0.0);
    }
}
