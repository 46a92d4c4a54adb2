use super::base::{BaseMeasure, Family, MacroState, TiltVector};
use super::grid::{GridDensity, GridSpec};
use super::newton::{minimize, MAX_ITER, TOL_NEWTON};
use crate::error::{invalid, Error, Result};
use crate::vecops::{dist, zeta0};

/// Slack used for moment-constraint membership of gridded densities.
pub const TOL_MOMENT: f64 = 1e-6;
/// Tolerance of the entropy decomposition checks.
pub const TOL_DECOMP: f64 = 1e-4;

/// γ(e,u): the tilt whose tilted measure has energy e and momentum u.
pub fn solve_tilt(m: &BaseMeasure, x: &MacroState) -> Result<TiltVector> {
    if x.dim() != m.dim() {
        return invalid("macrostate and measure dimensions differ");
    }
    if !x.is_admissible() {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let target = x.as_vec();
    let g0s = m.gamma0_star();
    let (g, _) = minimize(vec![0.0; m.dim() + 1], TOL_NEWTON, MAX_ITER, |g| {
        if !(g[0] < g0s) {
            return Ok(None);
        }
        let s = match m.tilt_stats(&TiltVector::from_slice(g)) {
            Ok(s) => s,
            Err(Error::QuadratureOverflow(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let val = s.log_mgf - g.iter().zip(&target).map(|(a, b)| a * b).sum::<f64>();
        let grad = s.mean.iter().zip(&target).map(|(a, b)| a - b).collect();
        Ok(Some((val, grad, s.cov)))
    })?;
    Ok(TiltVector::from_slice(&g))
}

/// m_{e,u} on the grid of `m`, normalised by quadrature.
pub fn tilt_measure(m: &BaseMeasure, x: &MacroState) -> Result<GridDensity> {
    let g = solve_tilt(m, x)?;
    Ok(tilt_with(m, &g))
}

/// The tilt of `m` by `g`, normalised on the grid of `m`.
pub fn tilt_with(m: &BaseMeasure, g: &TiltVector) -> GridDensity {
    let grid = m.grid();
    let logs: Vec<f64> = (0..grid.len()).map(|k| m.log_values()[k] + g.pair(grid.node(k))).collect();
    normalize_logs(grid, &logs)
}

fn normalize_logs(grid: &GridSpec, logs: &[f64]) -> GridDensity {
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().zip(grid.weights()).map(|(l, w)| w * (l - mx).exp()).sum();
    let lz = mx + z.ln();
    GridDensity::from_raw(grid.clone(), logs.iter().map(|l| (l - lz).exp()).collect())
}

/// m_{e,u} evaluated pointwise on another grid with its exact normalisation
/// (Gaussian family). Returns the density and the mass lost outside the box.
pub fn tilt_density_on(m: &BaseMeasure, x: &MacroState, grid: &GridSpec) -> Result<(GridDensity, f64)> {
    if grid.dim() != m.dim() {
        return Err(Error::GridMismatch);
    }
    match m.family() {
        Family::Gaussian { .. } => {
            let g = solve_tilt(m, x)?;
            let lz = m.log_mgf(&g)?;
            let f = GridDensity::from_fn(grid, |v| (m.log_density(v) + g.pair(v) - lz).exp())?;
            let tail = (1.0 - f.mass()).max(0.0);
            Ok((f, tail))
        }
        Family::CustomGrid => {
            if grid != m.grid() {
                return Err(Error::GridMismatch);
            }
            Ok((tilt_measure(m, x)?, 0.0))
        }
    }
}

/// Cramér rate A(e,u) = γ·(e,u) − log m(e^{γ·ζ}).
pub fn cramer_rate(m: &BaseMeasure, x: &MacroState) -> Result<f64> {
    let g = solve_tilt(m, x)?;
    let lm = m.log_mgf(&g)?;
    Ok((g.as_vec().iter().zip(x.as_vec()).map(|(a, b)| a * b).sum::<f64>() - lm).max(0.0))
}

/// Ent(p|q) by quadrature; +∞ when p charges a node where q vanishes.
pub fn relative_entropy(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    if p.grid() != q.grid() {
        return Err(Error::GridMismatch);
    }
    let mut s = 0.0;
    for (k, (&a, &b)) in p.values().iter().zip(q.values()).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            s += p.grid().weight(k) * a * (a / b).ln();
        }
    }
    Ok(s)
}

/// H_{e,u}(π) using grid moments of π.
pub fn micro_sanov_rate(pi: &GridDensity, m: &BaseMeasure, x: &MacroState) -> Result<f64> {
    micro_sanov_rate_with_moments(pi, pi.energy(), &pi.momentum(), m, x)
}

/// H_{e,u}(π) with the moments of π supplied by the caller (e.g. exact
/// particle moments of an empirical histogram).
pub fn micro_sanov_rate_with_moments(
    pi: &GridDensity,
    energy: f64,
    momentum: &[f64],
    m: &BaseMeasure,
    x: &MacroState,
) -> Result<f64> {
    if pi.grid() != m.grid() {
        return Err(Error::GridMismatch);
    }
    if dist(momentum, x.u()) > TOL_MOMENT || energy > x.e() + TOL_MOMENT {
        return Ok(f64::INFINITY);
    }
    let gap = (x.e() - energy).max(0.0);
    let g = solve_tilt(m, x)?;
    let penalty = if m.gamma0_star().is_infinite() {
        if gap > TOL_MOMENT {
            return Ok(f64::INFINITY);
        }
        0.0
    } else {
        (m.gamma0_star() - g.gamma0) * gap
    };
    let meu = tilt_with(m, &g);
    Ok(relative_entropy(pi, &meu)? + penalty)
}

/// Minimise −λ·target + log Σ_k exp(logb_k + c·features_k) over the full
/// coefficient vector; `bounded` holds (index, upper bound) constraints.
/// Returns (minimiser, minimum).
fn maxent_dual(
    grid: &GridSpec,
    logb: &[f64],
    features: &[Vec<f64>],
    target: &[f64],
    bounded: Option<(usize, f64)>,
) -> Result<(Vec<f64>, f64)> {
    let nf = features.len();
    minimize(vec![0.0; nf], TOL_NEWTON, MAX_ITER, |c| {
        if let Some((i, ub)) = bounded {
            if !(c[i] < ub) {
                return Ok(None);
            }
        }
        let logs: Vec<f64> = (0..grid.len())
            .map(|k| logb[k] + (0..nf).map(|a| c[a] * features[a][k]).sum::<f64>())
            .collect();
        let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            return Ok(None);
        }
        let mut z = 0.0;
        let mut s1 = vec![0.0; nf];
        let mut s2 = vec![0.0; nf * nf];
        for (k, &l) in logs.iter().enumerate() {
            let p = (l - mx).exp();
            if p == 0.0 {
                continue;
            }
            z += p;
            for a in 0..nf {
                let fa = features[a][k];
                s1[a] += p * fa;
                for b in a..nf {
                    s2[a * nf + b] += p * fa * features[b][k];
                }
            }
        }
        let mean: Vec<f64> = s1.iter().map(|v| v / z).collect();
        let mut h = vec![0.0; nf * nf];
        for a in 0..nf {
            for b in a..nf {
                let v = s2[a * nf + b] / z - mean[a] * mean[b];
                h[a * nf + b] = v;
                h[b * nf + a] = v;
            }
        }
        let val = mx + z.ln() - c.iter().zip(target).map(|(a, b)| a * b).sum::<f64>();
        let grad = mean.iter().zip(target).map(|(a, b)| a - b).collect();
        Ok(Some((val, grad, h)))
    })
}

fn zeta_features(grid: &GridSpec) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let mut f = vec![(0..grid.len()).map(|k| zeta0(grid.node(k))).collect::<Vec<_>>()];
    for a in 0..d {
        f.push((0..grid.len()).map(|k| grid.node(k)[a]).collect());
    }
    f
}

/// log(w_k · m_{e,u}(x_k)) at the grid nodes, and γ₀(e,u).
fn meu_log_weights(m: &BaseMeasure, x: &MacroState) -> Result<(Vec<f64>, f64)> {
    let g = solve_tilt(m, x)?;
    let meu = tilt_with(m, &g);
    let grid = m.grid();
    let logs = meu
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| if *v > 0.0 { v.ln() + grid.weight(k).ln() } else { f64::NEG_INFINITY })
        .collect();
    Ok((logs, g.gamma0))
}

/// Λ_{e,u}(φ) = min_γ [−γ·(e,u) + log m_{e,u}(e^{φ+γ·ζ})]; also returns the
/// minimising γ.
pub fn log_mgf_micro(
    phi: &dyn Fn(&[f64]) -> f64,
    m: &BaseMeasure,
    x: &MacroState,
) -> Result<(f64, TiltVector)> {
    let grid = m.grid();
    let (mut logb, g0) = meu_log_weights(m, x)?;
    for (k, l) in logb.iter_mut().enumerate() {
        *l += phi(grid.node(k));
    }
    let (c, val) = maxent_dual(grid, &logb, &zeta_features(grid), &x.as_vec(), Some((0, m.gamma0_star() - g0)))?;
    Ok((val, TiltVector::from_slice(&c)))
}

/// sup over φ in span(family) of {π(φ) − Λ_{e,u}(φ)}, a lower bound on H_{e,u}(π).
pub fn legendre_lower_bound(
    pi: &GridDensity,
    m: &BaseMeasure,
    x: &MacroState,
    family: &[&dyn Fn(&[f64]) -> f64],
) -> Result<f64> {
    let grid = m.grid();
    if pi.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let (logb, g0) = meu_log_weights(m, x)?;
    let mut features: Vec<Vec<f64>> =
        family.iter().map(|phi| (0..grid.len()).map(|k| phi(grid.node(k))).collect()).collect();
    let mut target: Vec<f64> = family.iter().map(|phi| pi.expect(phi)).collect();
    let nfam = features.len();
    features.extend(zeta_features(grid));
    target.extend(x.as_vec());
    let (_, val) = maxent_dual(grid, &logb, &features, &target, Some((nfam, m.gamma0_star() - g0)))?;
    // the dual value is minus the sup
    Ok(-val)
}

/// A(e,u) + H_{e,u}(π).
pub fn decomposition_value(pi: &GridDensity, m: &BaseMeasure, x: &MacroState) -> Result<f64> {
    let h = micro_sanov_rate(pi, m, x)?;
    if h.is_infinite() {
        return Ok(h);
    }
    Ok(cramer_rate(m, x)? + h)
}

/// The minimiser (π(ζ₀), π(ζ)) of A + H_{e,u}(π) and the value there.
pub fn canonical_entropy_decomposition(pi: &GridDensity, m: &BaseMeasure) -> Result<(MacroState, f64)> {
    let x = MacroState::new(pi.energy(), pi.momentum())?;
    let v = decomposition_value(pi, m, &x)?;
    Ok((x, v))
}

/// Brute-force minimum of A + H_{e,u}(π) over the supplied macrostates.
pub fn decomposition_scan(pi: &GridDensity, m: &BaseMeasure, scan: &[MacroState]) -> Result<(MacroState, f64)> {
    let mut best: Option<(MacroState, f64)> = None;
    for x in scan {
        if !x.is_admissible() {
            continue;
        }
        let v = decomposition_value(pi, m, x)?;
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x.clone(), v));
        }
    }
    best.ok_or(Error::EmptyFeasible)
}
