//! Dynamical rate J, microcanonical and canonical rates of a discretised
//! (π, Q) pair, the variational lower bound on J, and velocity mollification.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kac::{collision_map, kappa, Trajectory};
use crate::measures::{cramer_rate, micro_sanov_rate, BaseMeasure, GridDensity, GridSpec, MacroState, TOL_MOMENT};
use crate::observables::{
    trapezoid, ConstantFlow, DensityPath, EmpiricalPath, FlowGrid, FlowHistogram, FlowTestFunction,
    OffsetTable, ProductFlow,
};
use crate::quad::{bisect, golden_min};
use crate::vecops::{dist, norm};

/// Largest |F| allowed in the variational search.
pub const F_CLIP: f64 = 10.0;

/// Flow part of a discretised pair.
#[derive(Clone, Debug)]
pub enum FlowData {
    /// Bin masses of Q and of its reference Q^π on the same flow grid.
    Binned { q: FlowHistogram, reference: FlowHistogram },
    /// Piecewise product density; its reference is built from the path.
    Product(ProductFlow),
}

/// (f, q): a gridded density path and a flow.
#[derive(Clone, Debug)]
pub struct DiscretizedPair {
    pub path: DensityPath,
    pub flow: FlowData,
}

impl DiscretizedPair {
    pub fn binned(path: DensityPath, q: FlowHistogram, reference: FlowHistogram) -> Result<Self> {
        if q.grid != reference.grid || q.grid.dim() != path.grid().dim() {
            return Err(Error::GridMismatch);
        }
        if q.mass.iter().any(|m| !(*m >= 0.0)) {
            return invalid("flow masses must be nonnegative");
        }
        Ok(Self { path, flow: FlowData::Binned { q, reference } })
    }

    pub fn product(path: DensityPath, flow: ProductFlow) -> Result<Self> {
        flow.validate(&path)?;
        Ok(Self { path, flow: FlowData::Product(flow) })
    }

    /// (π^N, Q^N) of a Kac trajectory: snapshots binned on `grid`, events
    /// binned on `flow_grid` against the exact reference flow of π^N.
    /// Also returns the largest fraction of particles outside the box.
    pub fn from_trajectory(traj: &Trajectory, times: &[f64], grid: &GridSpec, flow_grid: &FlowGrid) -> Result<(Self, f64)> {
        let (path, clipped) = EmpiricalPath::from_trajectory(traj, times)?.histograms(grid);
        let q = FlowHistogram::from_trajectory(flow_grid, traj)?;
        let reference = FlowHistogram::reference_from_trajectory(flow_grid, traj)?;
        Ok((Self::binned(path, q, reference)?, clipped))
    }

    /// Bin a product-form pair on `grid`.
    pub fn to_binned(&self, grid: &FlowGrid) -> Result<Self> {
        match &self.flow {
            FlowData::Binned { .. } => Ok(self.clone()),
            FlowData::Product(p) => {
                let q = FlowHistogram::from_product(grid, &self.path, p)?;
                let reference = FlowHistogram::reference_from_path(grid, &self.path)?;
                Self::binned(self.path.clone(), q, reference)
            }
        }
    }

    /// Q(1).
    pub fn flow_mass(&self) -> Result<f64> {
        match &self.flow {
            FlowData::Binned { q, .. } => Ok(q.total()),
            FlowData::Product(p) => p.mass(&self.path),
        }
    }

    /// Q^π(1).
    pub fn reference_mass(&self) -> Result<f64> {
        match &self.flow {
            FlowData::Binned { reference, .. } => Ok(reference.total()),
            FlowData::Product(_) => ProductFlow::reference(&self.path).mass(&self.path),
        }
    }
}

/// q log(q/p) − q + p, extended by continuity; +∞ when q > 0 = p.
#[inline]
pub fn entropy_density(q: f64, p: f64) -> f64 {
    if q <= 0.0 {
        p.max(0.0)
    } else if p < 1e-300 {
        f64::INFINITY
    } else {
        q * (q / p).ln() - q + p
    }
}

/// J(pair): relative entropy of Q with respect to Q^π on the discretisation.
pub fn dynamical_rate(pair: &DiscretizedPair) -> Result<f64> {
    match &pair.flow {
        FlowData::Binned { q, reference } => {
            if q.grid != reference.grid {
                return Err(Error::GridMismatch);
            }
            Ok(q.mass.iter().zip(&reference.mass).map(|(a, b)| entropy_density(*a, *b)).sum())
        }
        FlowData::Product(p) => product_rate(&pair.path, p),
    }
}

/// Product form: on each snapshot,
/// Σ_{k,l} w_k w_l ½λ(x_k − x_l) j(c U_k U_l, f_k f_l), then trapezoid in t.
fn product_rate(path: &DensityPath, flow: &ProductFlow) -> Result<f64> {
    flow.validate(path)?;
    let g = path.grid();
    let table = OffsetTable::new(g);
    let kap = kappa(g.dim());
    let half_lam: Vec<f64> = (0..table.len()).map(|o| 0.5 * kap * norm(&table.vector(g, o))).collect();
    let mut total = 0.0;
    for seg in &flow.segments {
        let mut vals = Vec::with_capacity(seg.components.len());
        for (s, u) in seg.components.iter().enumerate() {
            let f = &path.densities[seg.start + s];
            vals.push(snapshot_rate(g, &table, &half_lam, seg.weight, u.values(), f.values()));
            if vals.last() == Some(&f64::INFINITY) {
                return Ok(f64::INFINITY);
            }
        }
        total += trapezoid(&path.times[seg.start..=seg.end], &vals);
    }
    Ok(total)
}

fn snapshot_rate(g: &GridSpec, table: &OffsetTable, half_lam: &[f64], c: f64, u: &[f64], f: &[f64]) -> f64 {
    let nodes: Vec<usize> = (0..g.len()).filter(|&k| u[k] > 0.0 || f[k] > 0.0).collect();
    let mut s = 0.0;
    for &k in &nodes {
        let wk = g.weight(k);
        let mut row = 0.0;
        for &l in &nodes {
            let hl = half_lam[table.offset(k, l)];
            if hl == 0.0 {
                continue;
            }
            let e = entropy_density(c * u[k] * u[l], f[k] * f[l]);
            if e.is_infinite() {
                return f64::INFINITY;
            }
            row += g.weight(l) * hl * e;
        }
        s += wk * row;
    }
    s
}

/// Output of the variational lower bound.
#[derive(Clone, Debug, Serialize)]
pub struct VariationalResult {
    pub value: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
}

/// Maximises c ↦ Q(F_c) − Q^π(e^{F_c} − 1), F_c = Σ c_k F_k, by damped Newton
/// ascent with |F_c| ≤ 10 on every bin. Any feasible c gives a lower bound
/// on the binned J, so the best value reached is returned.
pub fn dynamical_rate_variational(
    pair: &DiscretizedPair,
    basis: &[Arc<dyn FlowTestFunction>],
    iterations: usize,
) -> Result<VariationalResult> {
    let FlowData::Binned { q, reference } = &pair.flow else {
        return invalid("bin the pair with to_binned before the variational bound");
    };
    let grid = &q.grid;
    let nb = basis.len();
    // features at bin centres, only where either measure has mass
    let mut rows: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    for k in 0..grid.len() {
        let (qm, pm) = (q.mass[k], reference.mass[k]);
        if qm == 0.0 && pm == 0.0 {
            continue;
        }
        let (t, v, w, om) = grid.center(k);
        let (vp, wp) = collision_map(&v, &w, &om)?;
        let phi: Vec<f64> = basis.iter().map(|f| f.eval(t, &v, &w, &vp, &wp)).collect();
        rows.push((qm, pm, phi));
    }
    let eval = |c: &[f64]| -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        let mut val = 0.0;
        let mut grad = vec![0.0; nb];
        let mut hess = DMatrix::<f64>::zeros(nb, nb);
        for (qm, pm, phi) in &rows {
            let f: f64 = phi.iter().zip(c).map(|(a, b)| a * b).sum();
            if f.abs() > F_CLIP {
                return None;
            }
            let ef = f.exp();
            val += qm * f - pm * (ef - 1.0);
            for a in 0..nb {
                grad[a] += (qm - pm * ef) * phi[a];
                if phi[a] != 0.0 {
                    for b in a..nb {
                        hess[(a, b)] += pm * ef * phi[a] * phi[b];
                    }
                }
            }
        }
        for a in 0..nb {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        Some((val, grad, hess))
    };
    let mut c = vec![0.0; nb];
    let (mut val, mut grad, mut hess) = eval(&c).expect("zero is feasible");
    let scale = q.total().max(reference.total()).max(1e-300);
    let mut iters = 0;
    while iters < iterations {
        iters += 1;
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gn <= 1e-12 * scale {
            break;
        }
        let ridge = 1e-12 * scale;
        let mut h = hess.clone();
        for a in 0..nb {
            h[(a, a)] += ridge;
        }
        let step: Vec<f64> = match h.clone().cholesky() {
            Some(ch) => ch.solve(&DVector::from_vec(grad.clone())).iter().copied().collect(),
            None => grad.clone(),
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = c.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let Some((v2, g2, h2)) = eval(&trial) {
                if v2 > val {
                    c = trial;
                    val = v2;
                    grad = g2;
                    hess = h2;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !val.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(VariationalResult { value: val, coefficients: c, iterations: iters })
}

/// Symmetrised Gaussian bump pair in (v, v*) times a time factor.
#[derive(Clone, Debug)]
pub struct BumpFlow {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub width: f64,
    /// 0: constant, 1: cos(πt/T), 2: sin(πt/T).
    pub time_mode: u8,
    pub horizon: f64,
}

impl BumpFlow {
    fn bump(&self, v: &[f64], c: &[f64]) -> f64 {
        (-dist(v, c).powi(2) / (2.0 * self.width * self.width)).exp()
    }
}

impl FlowTestFunction for BumpFlow {
    fn eval(&self, t: f64, v: &[f64], vstar: &[f64], _: &[f64], _: &[f64]) -> f64 {
        let s = 0.5 * (self.bump(v, &self.a) * self.bump(vstar, &self.b) + self.bump(v, &self.b) * self.bump(vstar, &self.a));
        let x = std::f64::consts::PI * t / self.horizon;
        s * match self.time_mode {
            1 => x.cos(),
            2 => x.sin(),
            _ => 1.0,
        }
    }
    fn bound(&self) -> f64 {
        1.0
    }
    fn time_homogeneous(&self) -> bool {
        self.time_mode == 0
    }
}

/// 40 functions: 13 bump pairs over the centres {0, ±1.5 e₁, ±1.5 e₂}
/// (opposite pairs left out) times {1, cos, sin}, plus the constant.
pub fn default_basis(dim: usize, horizon: f64) -> Vec<Arc<dyn FlowTestFunction>> {
    let mut centres = vec![vec![0.0; dim]];
    for axis in 0..2 {
        for s in [1.5, -1.5] {
            let mut c = vec![0.0; dim];
            c[axis] = s;
            centres.push(c);
        }
    }
    let mut out: Vec<Arc<dyn FlowTestFunction>> = vec![Arc::new(ConstantFlow(1.0))];
    for i in 0..centres.len() {
        for j in i..centres.len() {
            let opposite = centres[i].iter().zip(&centres[j]).all(|(a, b)| a + b == 0.0) && i != j;
            if opposite {
                continue;
            }
            for mode in 0..3 {
                out.push(Arc::new(BumpFlow {
                    a: centres[i].clone(),
                    b: centres[j].clone(),
                    width: 1.0,
                    time_mode: mode,
                    horizon,
                }));
            }
        }
    }
    out
}

/// True if every f_t has momentum u and energy at most e, within `tol`.
pub fn in_constraint_set(path: &DensityPath, x: &MacroState, tol: f64) -> bool {
    path.densities.iter().all(|f| dist(&f.momentum(), x.u()) <= tol && f.energy() <= x.e() + tol)
}

/// I_{e,u} = H_{e,u}(f₀) + J, or +∞ if some f_t leaves C_{e,u}.
pub fn micro_rate(pair: &DiscretizedPair, m: &BaseMeasure, x: &MacroState) -> Result<f64> {
    micro_rate_with_tol(pair, m, x, TOL_MOMENT)
}

/// [`micro_rate`] with an explicit moment tolerance (histograms of particle
/// systems carry binning error in their moments).
pub fn micro_rate_with_tol(pair: &DiscretizedPair, m: &BaseMeasure, x: &MacroState, tol: f64) -> Result<f64> {
    if !in_constraint_set(&pair.path, x, tol) {
        return Ok(f64::INFINITY);
    }
    let h = micro_sanov_rate(pair.path.initial(), m, x)?;
    Ok(h + dynamical_rate(pair)?)
}

/// Minimiser and value of the canonical rate.
#[derive(Clone, Debug, Serialize)]
pub struct CanonicalResult {
    pub e: f64,
    pub u: Vec<f64>,
    pub value: f64,
    pub dynamical: f64,
}

/// inf_e [A(e,u) + I_{e,u}(pair)] with u = f₀(ζ) and e ≥ max_t f_t(ζ₀).
/// The scan values below that bound are skipped; the best scan point is
/// refined by golden section. `e_max` defaults to 4·max_t f_t(ζ₀).
pub fn canonical_rate(pair: &DiscretizedPair, m: &BaseMeasure, scan: &[f64], e_max: Option<f64>) -> Result<CanonicalResult> {
    let u = pair.path.initial().momentum();
    let e_lo = pair.path.max_energy();
    let e_hi = e_max.unwrap_or(4.0 * e_lo);
    let mut feasible: Vec<f64> = scan.iter().copied().filter(|&e| e >= e_lo - TOL_MOMENT && e <= e_hi).collect();
    if feasible.is_empty() {
        return Err(Error::EmptyFeasible);
    }
    let j = dynamical_rate(pair)?;
    let f0 = pair.path.initial();
    let obj = |e: f64| -> f64 {
        let e = e.max(e_lo);
        let x = MacroState::new_unchecked(e, u.clone());
        if !x.is_admissible() {
            return f64::INFINITY;
        }
        match (cramer_rate(m, &x), micro_sanov_rate(f0, m, &x)) {
            (Ok(a), Ok(h)) => a + h,
            _ => f64::INFINITY,
        }
    };
    feasible.push(e_lo);
    feasible.sort_by(f64::total_cmp);
    feasible.dedup();
    let vals: Vec<f64> = feasible.iter().map(|&e| obj(e)).collect();
    let (best, _) = vals.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let lo = feasible[best.saturating_sub(1)];
    let hi = feasible[(best + 1).min(feasible.len() - 1)];
    let (mut e, mut v) = (feasible[best], vals[best]);
    if hi > lo {
        let (e2, v2) = golden_min(lo, hi, 1e-9, obj);
        if v2 < v {
            e = e2.max(e_lo);
            v = v2;
        }
    }
    Ok(CanonicalResult { e, u, value: v + j, dynamical: j })
}

/// Per-axis Gaussian smoothing of variance δ with mass-preserving weights.
fn smooth(f: &GridDensity, delta: f64) -> Vec<f64> {
    let g = f.grid();
    let n = g.points();
    let d = g.dim();
    let h = g.spacing();
    let mut kern = vec![0.0; n * n];
    for i in 0..n {
        let row: Vec<f64> = (0..n).map(|j| (-((i as f64 - j as f64) * h).powi(2) / (2.0 * delta)).exp()).collect();
        let s: f64 = row.iter().sum();
        for j in 0..n {
            kern[i * n + j] = row[j] / s;
        }
    }
    let mut cur = f.values().to_vec();
    let mut idx = vec![0usize; d];
    for axis in 0..d {
        let mut next = vec![0.0; cur.len()];
        for k in 0..cur.len() {
            if cur[k] == 0.0 {
                continue;
            }
            g.unflat(k, &mut idx);
            let i = idx[axis];
            for j in 0..n {
                let w = kern[i * n + j];
                if w == 0.0 {
                    continue;
                }
                idx[axis] = j;
                next[g.flat(&idx)] += w * cur[k];
            }
        }
        cur = next;
    }
    cur
}

/// Keys cubic convolution weight (a = −½); reproduces quadratics, so the
/// dilation adds no spurious variance.
fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        1.5 * x * x * x - 2.5 * x * x + 1.0
    } else if x < 2.0 {
        -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// Cubic interpolation of grid values at v; zero outside the box.
fn interpolate(g: &GridSpec, vals: &[f64], v: &[f64]) -> f64 {
    let d = g.dim();
    let h = g.spacing();
    let n = g.points() as i64;
    let mut base = [0i64; 3];
    let mut wts = [[0.0; 4]; 3];
    for a in 0..d {
        let x = (v[a] - g.axis_coord(0)) / h;
        if x < 0.0 || x > (n - 1) as f64 {
            return 0.0;
        }
        let i = x.floor() as i64;
        base[a] = i - 1;
        for (k, w) in wts[a].iter_mut().enumerate() {
            *w = keys(x - (i - 1 + k as i64) as f64);
        }
    }
    let mut s = 0.0;
    let mut idx = [0usize; 3];
    'corner: for c in 0..4usize.pow(d as u32) {
        let mut w = 1.0;
        let mut r = c;
        for a in 0..d {
            let k = r % 4;
            r /= 4;
            let j = base[a] + k as i64;
            if j < 0 || j >= n {
                continue 'corner;
            }
            idx[a] = j as usize;
            w *= wts[a][k];
        }
        if w != 0.0 {
            s += w * vals[g.flat(&idx[..d])];
        }
    }
    s.max(0.0)
}

fn dilate(g: &GridSpec, smoothed: &[f64], u: &[f64], alpha: f64) -> Vec<f64> {
    let d = g.dim();
    let mut p = vec![0.0; d];
    (0..g.len())
        .map(|k| {
            let v = g.node(k);
            for a in 0..d {
                p[a] = u[a] + alpha * (v[a] - u[a]);
            }
            alpha.powi(d as i32) * interpolate(g, smoothed, &p)
        })
        .collect()
}

/// Normalise and multiply by 1 + β·(v − c), c the current mean, with β
/// chosen so that the mean becomes u. Mass is unchanged by construction.
fn recenter(g: &GridSpec, vals: &[f64], u: &[f64]) -> Vec<f64> {
    let d = g.dim();
    let mass: f64 = vals.iter().zip(g.weights()).map(|(a, w)| a * w).sum();
    let mut c = vec![0.0; d];
    for k in 0..g.len() {
        for a in 0..d {
            c[a] += vals[k] * g.weight(k) * g.node(k)[a] / mass;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for k in 0..g.len() {
        let p = vals[k] * g.weight(k) / mass;
        let v = g.node(k);
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += p * (v[a] - c[a]) * (v[b] - c[b]);
            }
        }
    }
    let rhs = DVector::from_iterator(d, (0..d).map(|a| u[a] - c[a]));
    let beta = cov.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(d));
    (0..g.len())
        .map(|k| {
            let v = g.node(k);
            let lin: f64 = (0..d).map(|a| beta[a] * (v[a] - c[a])).sum();
            (vals[k] / mass * (1.0 + lin)).max(0.0)
        })
        .collect()
}

fn internal_energy(g: &GridSpec, vals: &[f64], u: &[f64]) -> f64 {
    let mass: f64 = vals.iter().zip(g.weights()).map(|(a, w)| a * w).sum();
    (0..g.len()).map(|k| vals[k] * g.weight(k) * 0.5 * dist(g.node(k), u).powi(2)).sum::<f64>() / mass
}

/// f^δ(v) = α^d (g_δ * f)(u + α(v − u)) with α chosen so that the internal
/// energy about u is unchanged. Returns the density and α.
pub fn mollify_density(f: &GridDensity, u: &[f64], delta: f64) -> Result<(GridDensity, f64)> {
    if !(delta > 0.0) {
        return invalid("delta must be positive");
    }
    let g = f.grid();
    let target = internal_energy(g, f.values(), u);
    let sm = smooth(f, delta);
    let at = |a: f64| recenter(g, &dilate(g, &sm, u, a), u);
    let alpha = bisect(0.5, 4.0, 1e-13, |a| internal_energy(g, &at(a), u) - target).ok_or(Error::AlphaNotFound)?;
    Ok((GridDensity::new(g.clone(), at(alpha))?, alpha))
}

/// Velocity mollification of a product-form pair: every f_t is mollified
/// with its own α, and each flow component with the α of the path at the
/// same snapshot.
pub fn mollify_velocity(pair: &DiscretizedPair, delta: f64) -> Result<DiscretizedPair> {
    let FlowData::Product(flow) = &pair.flow else {
        return invalid("only product-form flows can be mollified");
    };
    let u = pair.path.initial().momentum();
    let mut alphas = Vec::with_capacity(pair.path.times.len());
    let mut dens = Vec::with_capacity(pair.path.times.len());
    for f in &pair.path.densities {
        let (fd, a) = mollify_density(f, &u, delta)?;
        dens.push(fd);
        alphas.push(a);
    }
    let g = pair.path.grid().clone();
    let mut out = flow.clone();
    for seg in &mut out.segments {
        for (s, c) in seg.components.iter_mut().enumerate() {
            let sm = smooth(c, delta);
            let vals = recenter(&g, &dilate(&g, &sm, &u, alphas[seg.start + s]), &u);
            *c = GridDensity::new(g.clone(), vals)?;
        }
    }
    DiscretizedPair::product(DensityPath::new(pair.path.times.clone(), dens)?, out)
}

/// Rate report in JSON form.
#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "I_eu")]
    pub i_eu: f64,
    #[serde(rename = "I_can")]
    pub i_can: f64,
    pub argmin_e: f64,
    pub diagnostics: RateDiagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateDiagnostics {
    pub bins: usize,
    /// |Q^π(1) − Q(1)| relative to Q^π(1): a crude discretisation slack.
    pub slack: f64,
}

/// Everything at once for a pair and an ambient macrostate.
pub fn rate_report(pair: &DiscretizedPair, m: &BaseMeasure, x: &MacroState, scan: &[f64]) -> Result<RateReport> {
    let j = dynamical_rate(pair)?;
    let h = micro_sanov_rate(pair.path.initial(), m, x)?;
    let i_eu = micro_rate(pair, m, x)?;
    let can = canonical_rate(pair, m, scan, None)?;
    let bins = match &pair.flow {
        FlowData::Binned { q, .. } => q.grid.len(),
        FlowData::Product(_) => pair.path.grid().len().pow(2),
    };
    let (qm, pm) = (pair.flow_mass()?, pair.reference_mass()?);
    Ok(RateReport {
        j,
        h,
        i_eu,
        i_can: can.value,
        argmin_e: can.e,
        diagnostics: RateDiagnostics { bins, slack: (qm - pm).abs() / pm.max(1e-300) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{relative_entropy, tilt_measure};
    use crate::observables::{DirectionBins, VelocityBins};

    fn measure() -> BaseMeasure {
        BaseMeasure::gaussian(1.0, GridSpec::new(2, 7.0, 40).unwrap()).unwrap()
    }

    fn stationary_pair(m: &BaseMeasure) -> DiscretizedPair {
        let path = DensityPath::constant(m.as_grid_density(), vec![0.0, 0.5, 1.0]).unwrap();
        let flow = ProductFlow::reference(&path);
        DiscretizedPair::product(path, flow).unwrap()
    }

    fn flow_grid() -> FlowGrid {
        FlowGrid::uniform(1.0, 2, VelocityBins::new(2, 2, 1.0).unwrap(), DirectionBins::Angle(4)).unwrap()
    }

    #[test]
    fn entropy_density_values() {
        assert_eq!(entropy_density(1.0, 1.0), 0.0);
        assert_eq!(entropy_density(0.0, 0.3), 0.3);
        assert_eq!(entropy_density(0.1, 0.0), f64::INFINITY);
        assert!((entropy_density(2.0, 1.0) - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn j_vanishes_on_the_reference_and_scales_for_double_flow() {
        let m = measure();
        let pair = stationary_pair(&m);
        assert_eq!(dynamical_rate(&pair).unwrap(), 0.0);
        let FlowData::Product(p) = &pair.flow else { unreachable!() };
        let doubled = DiscretizedPair::product(pair.path.clone(), p.scaled(2.0)).unwrap();
        let qpi = pair.reference_mass().unwrap();
        let want = (2.0 * 2f64.ln() - 1.0) * qpi;
        assert!((dynamical_rate(&doubled).unwrap() - want).abs() < 1e-10 * want);
        // the same on bins
        let b = doubled.to_binned(&flow_grid()).unwrap();
        let FlowData::Binned { reference, .. } = &b.flow else { unreachable!() };
        let want_b = (2.0 * 2f64.ln() - 1.0) * reference.total();
        assert!((dynamical_rate(&b).unwrap() - want_b).abs() < 1e-10 * want_b);
        assert_eq!(dynamical_rate(&pair.to_binned(&flow_grid()).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn mass_where_the_kernel_vanishes_is_infinitely_costly() {
        let grid = GridSpec::new(2, 2.0, 9).unwrap();
        let k = grid.locate(&[0.5, 0.0]).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|j| if j == k { 1.0 / grid.weight(k) } else { 0.0 }).collect();
        let f = GridDensity::new(grid, vals).unwrap();
        let path = DensityPath::constant(f, vec![0.0, 1.0]).unwrap();
        let fg = flow_grid();
        let reference = FlowHistogram::reference_from_path(&fg, &path).unwrap();
        let mut q = FlowHistogram::zeros(&fg);
        q.mass[3] = 0.01;
        let pair = DiscretizedPair::binned(path, q, reference).unwrap();
        assert_eq!(dynamical_rate(&pair).unwrap(), f64::INFINITY);
    }

    #[test]
    fn variational_bound_recovers_exponential_tilt() {
        let m = measure();
        let pair = stationary_pair(&m).to_binned(&flow_grid()).unwrap();
        let zero: Vec<Arc<dyn FlowTestFunction>> = vec![Arc::new(ConstantFlow(0.0))];
        assert_eq!(dynamical_rate_variational(&pair, &zero, 50).unwrap().value, 0.0);

        let basis = default_basis(2, 1.0);
        let f0 = basis[7].clone();
        let FlowData::Binned { reference, .. } = &pair.flow else { unreachable!() };
        let grid = reference.grid.clone();
        let mut q = FlowHistogram::zeros(&grid);
        let mut want = 0.0;
        for k in 0..grid.len() {
            let (t, v, w, om) = grid.center(k);
            let (vp, wp) = collision_map(&v, &w, &om).unwrap();
            let f = 0.8 * f0.eval(t, &v, &w, &vp, &wp);
            q.mass[k] = f.exp() * reference.mass[k];
            want += reference.mass[k] * (f * f.exp() - f.exp() + 1.0);
        }
        let tilted = DiscretizedPair::binned(pair.path.clone(), q, reference.clone()).unwrap();
        let j = dynamical_rate(&tilted).unwrap();
        assert!((j - want).abs() < 1e-12 * want);
        let r = dynamical_rate_variational(&tilted, &basis, 100).unwrap();
        assert!((r.value - want).abs() < 1e-8 * want, "{} vs {want}", r.value);
        assert!(r.value <= j * (1.0 + 1e-12));
    }

    #[test]
    fn micro_rate_examples() {
        let m = measure();
        let x = MacroState::at_rest(1.0, 2).unwrap();
        let pair = stationary_pair(&m);
        assert!(micro_rate(&pair, &m, &x).unwrap().abs() < 1e-9);
        // the energy constraint fails somewhere along the path
        let hot = tilt_measure(&m, &MacroState::at_rest(1.2, 2).unwrap()).unwrap();
        let path = DensityPath::new(vec![0.0, 1.0], vec![m.as_grid_density(), hot]).unwrap();
        let p2 = DiscretizedPair::product(path.clone(), ProductFlow::reference(&path)).unwrap();
        assert_eq!(micro_rate(&p2, &m, &x).unwrap(), f64::INFINITY);
        // f0 = m_{1,0} inside the e = 2 shell: log 2
        let x2 = MacroState::at_rest(2.0, 2).unwrap();
        let v = micro_rate(&pair, &m, &x2).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-4, "{v}");
    }

    #[test]
    fn canonical_rate_examples() {
        let m = measure();
        let scan: Vec<f64> = (0..40).map(|k| 0.8 + 0.05 * k as f64).collect();
        let pair = stationary_pair(&m);
        let r = canonical_rate(&pair, &m, &scan, None).unwrap();
        assert!(r.value.abs() < 1e-6 && (r.e - 1.0).abs() < 1e-4, "{r:?}");
        // energy profile 1 -> 1.5 with q = q^π: cost γ₀*·ΔE = 0.5 at e = 1.5
        let hot = tilt_measure(&m, &MacroState::at_rest(1.5, 2).unwrap()).unwrap();
        let path = DensityPath::new(vec![0.0, 0.5, 1.0], vec![m.as_grid_density(), hot.clone(), hot]).unwrap();
        let p2 = DiscretizedPair::product(path.clone(), ProductFlow::reference(&path)).unwrap();
        let r2 = canonical_rate(&p2, &m, &scan, None).unwrap();
        assert!((r2.value - 0.5).abs() < 1e-4 && (r2.e - 1.5).abs() < 1e-4, "{r2:?}");
        let ent = relative_entropy(p2.path.initial(), &m.as_grid_density()).unwrap();
        assert!(r2.value >= ent + r2.dynamical - 1e-12);
        assert!(matches!(canonical_rate(&p2, &m, &[0.9, 1.0], None), Err(Error::EmptyFeasible)));
    }

    #[test]
    fn mollification_of_a_gaussian() {
        let m = BaseMeasure::gaussian(1.0, GridSpec::new(2, 8.0, 81).unwrap()).unwrap();
        let f = m.as_grid_density();
        let (fd, a) = mollify_density(&f, &[0.0, 0.0], 0.3).unwrap();
        assert!((a - 1.3f64.sqrt()).abs() < 2e-3, "{a}");
        assert!((fd.energy() - f.energy()).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for delta in [0.1, 0.01, 0.001] {
            let mix = GridDensity::from_fn(f.grid(), |v| {
                0.6 * (-(v[0] - 1.0).powi(2) - v[1] * v[1]).exp() + 0.4 * (-(v[0] + 1.5).powi(2) - (v[1] - 0.5).powi(2)).exp()
            })
            .unwrap()
            .normalized()
            .unwrap();
            let u = mix.momentum();
            let (md, _) = mollify_density(&mix, &u, delta).unwrap();
            let int = |g: &GridDensity| g.expect(|v| 0.5 * dist(v, &u).powi(2));
            assert!((int(&md) - int(&mix)).abs() < 1e-6);
            assert!(dist(&md.momentum(), &u) < 1e-12);
            let d = md.l1_distance(&mix).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn mollification_contracts_j() {
        let m = measure();
        let base = stationary_pair(&m);
        let FlowData::Product(p) = &base.flow else { unreachable!() };
        let pair = DiscretizedPair::product(base.path.clone(), p.scaled(1.5)).unwrap();
        let j = dynamical_rate(&pair).unwrap();
        let jd = dynamical_rate(&mollify_velocity(&pair, 0.05).unwrap()).unwrap();
        assert!(jd <= j * 1.02, "{jd} vs {j}");
    }
}
