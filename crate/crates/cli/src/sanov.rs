//! Empirical-measure events under the Gaussian microcanonical ensemble.
//!
//! Direct Monte Carlo uses the exact sampler. Importance sampling draws the
//! underlying i.i.d. Gaussians from a radially tilted law
//! q ∝ m_{e,0}·exp(θ(x)·x), x = |v|²/(2s²), θ piecewise constant on
//! {|v| ≤ R} and {|v| > R}, and pushes them through the same projection onto
//! the shell. The likelihood ratio of the underlying draws is Π Z·e^{−θ(x_i)x_i},
//! so the estimator is unbiased for every θ. The same two-piece family gives
//! the proxy for the infimum of H_{e,0} over the event.

use kacld::kac::uniform_direction;
use kacld::microcanonical::{project_to_shell, sample_gaussian_micro, Configuration};
use kacld::quad::{bisect, golden_min};
use kacld::rng::replica;
use kacld::stats::{ess_from_log_weights, log_mean_exp};
use kacld::vecops::{norm2, zeta0};
use kacld::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::gamma::{gamma_lr, gamma_ur};

/// Draws per independent random stream; fixes the aggregation order.
pub const CHUNK: usize = 1000;

/// Events on the empirical measure π^N.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SanovEvent {
    Full,
    /// π(ζ₀·1{|v| ≤ radius}) ≤ level.
    EnergyDeficit { radius: f64, level: f64 },
}

impl SanovEvent {
    pub fn contains(&self, c: &Configuration) -> bool {
        match *self {
            SanovEvent::Full => true,
            SanovEvent::EnergyDeficit { radius, level } => {
                let r2 = radius * radius;
                c.mean_of(|v| if norm2(v) <= r2 { zeta0(v) } else { 0.0 }) <= level
            }
        }
    }
}

/// q(v) ∝ exp(−x + θ(x)·x) in the reduced energy x = |v|²/(2s²), where x
/// has the Gamma(d/2, 1) law under m_{e,0}.
#[derive(Clone, Debug)]
pub struct PiecewiseTilt {
    pub k: f64,
    pub cut: f64,
    pub theta_in: f64,
    pub theta_out: f64,
    z_in: f64,
    z_out: f64,
}

impl PiecewiseTilt {
    pub fn new(dim: usize, cut: f64, theta_in: f64, theta_out: f64) -> Result<Self> {
        if !(theta_in < 1.0 && theta_out < 1.0 && cut > 0.0) {
            return Err(Error::InvalidArgument("tilts must stay below 1 and the cut positive".into()));
        }
        let k = dim as f64 / 2.0;
        let (b1, b2) = (1.0 - theta_in, 1.0 - theta_out);
        let z_in = b1.powf(-k) * gamma_lr(k, b1 * cut);
        let z_out = b2.powf(-k) * gamma_ur(k, b2 * cut);
        Ok(Self { k, cut, theta_in, theta_out, z_in, z_out })
    }

    pub fn log_z(&self) -> f64 {
        (self.z_in + self.z_out).ln()
    }

    fn theta(&self, x: f64) -> f64 {
        if x <= self.cut { self.theta_in } else { self.theta_out }
    }

    /// (E_q[x·1_in], E_q[x·1_out]).
    pub fn moments(&self) -> (f64, f64) {
        let k = self.k;
        let (b1, b2) = (1.0 - self.theta_in, 1.0 - self.theta_out);
        let z = self.z_in + self.z_out;
        let m_in = k * b1.powf(-k - 1.0) * gamma_lr(k + 1.0, b1 * self.cut) / z;
        let m_out = k * b2.powf(-k - 1.0) * gamma_ur(k + 1.0, b2 * self.cut) / z;
        (m_in, m_out)
    }

    /// Ent(q | m_{e,0}) = E_q[θ(x)x] − log Z.
    pub fn entropy(&self) -> f64 {
        let (a, b) = self.moments();
        self.theta_in * a + self.theta_out * b - self.log_z()
    }

    /// Reduced energy x from q, by inversion on the chosen piece.
    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let inside = rng.random::<f64>() * (self.z_in + self.z_out) < self.z_in;
        let b = if inside { 1.0 - self.theta_in } else { 1.0 - self.theta_out };
        let c = b * self.cut;
        let u: f64 = rng.random();
        let y = if self.k == 1.0 {
            // exponential: closed-form inversion
            if inside {
                -(-u * (1.0 - (-c).exp())).ln_1p()
            } else {
                c - (1.0 - u).ln()
            }
        } else {
            let g = Gamma::new(self.k, 1.0).expect("positive shape");
            if inside {
                g.inverse_cdf(u * gamma_lr(self.k, c)).min(c)
            } else {
                g.inverse_cdf(1.0 - (1.0 - u) * gamma_ur(self.k, c)).max(c)
            }
        };
        y / b
    }

    /// log m/q at reduced energy x.
    pub fn log_ratio(&self, x: f64) -> f64 {
        self.log_z() - self.theta(x) * x
    }
}

/// Infimum of H_{e,0} over the event restricted to the two-piece tilt family.
#[derive(Clone, Debug, Serialize)]
pub struct Proxy {
    pub value: f64,
    /// Ent(π|m_{e,0}).
    pub entropy: f64,
    /// (γ₀* − γ₀(e,0))·(e − π(ζ₀)).
    pub energy: f64,
    pub theta_in: f64,
    pub theta_out: f64,
}

/// For the Gaussian, γ₀* − γ₀(e,0) = 1/s² with s² = 2e/d, so
/// H_{e,0}(q) = Ent(q|m_{e,0}) + d/2 − E_q[x]: the base variance drops out.
pub fn event_proxy(dim: usize, e: f64, event: SanovEvent) -> Result<Proxy> {
    let (radius, level) = match event {
        SanovEvent::Full => {
            return Ok(Proxy { value: 0.0, entropy: 0.0, energy: 0.0, theta_in: 0.0, theta_out: 0.0 })
        }
        SanovEvent::EnergyDeficit { radius, level } => (radius, level),
    };
    let k = dim as f64 / 2.0;
    let s2 = e / k;
    let cut = radius * radius / (2.0 * s2);
    let target = level / s2;
    let zero = PiecewiseTilt::new(dim, cut, 0.0, 0.0)?;
    if zero.moments().0 <= target {
        return Ok(Proxy { value: 0.0, entropy: 0.0, energy: 0.0, theta_in: 0.0, theta_out: 0.0 });
    }
    if target <= 0.0 {
        return Err(Error::InvalidArgument("the event is empty: level must be positive".into()));
    }
    const LO: f64 = -200.0;
    const HI: f64 = 1.0 - 1e-6;
    // For fixed θ_out the constraint binds: solve E[x·1_in] = target for θ_in.
    let solve_in = |th_out: f64| -> Option<PiecewiseTilt> {
        let f = |th: f64| PiecewiseTilt::new(dim, cut, th, th_out).map(|p| p.moments().0 - target).unwrap_or(f64::NAN);
        let th = bisect(LO, HI, 1e-12, f)?;
        PiecewiseTilt::new(dim, cut, th, th_out).ok()
    };
    let value_at = |th_out: f64| -> f64 {
        match solve_in(th_out) {
            None => f64::INFINITY,
            Some(p) => {
                let (a, b) = p.moments();
                if a + b > k * (1.0 + 1e-12) {
                    f64::INFINITY
                } else {
                    p.entropy() + k - a - b
                }
            }
        }
    };
    // coarse scan, then golden refinement around the best point
    let n = 200;
    let grid: Vec<f64> = (0..=n).map(|i| -5.0 + (HI + 5.0) * i as f64 / n as f64).collect();
    let best = grid
        .iter()
        .map(|&t| (t, value_at(t)))
        .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    if !best.1.is_finite() {
        return Err(Error::EmptyFeasible);
    }
    let h = (HI + 5.0) / n as f64;
    let (t, v) = golden_min((best.0 - h).max(-5.0), (best.0 + h).min(HI), 1e-10, value_at);
    let (t, v) = if v <= best.1 { (t, v) } else { best };
    let p = solve_in(t).ok_or(Error::EmptyFeasible)?;
    let (a, b) = p.moments();
    Ok(Proxy { value: v, entropy: p.entropy(), energy: k - a - b, theta_in: p.theta_in, theta_out: t })
}

/// One row of the scan.
#[derive(Clone, Debug, Serialize)]
pub struct SanovRow {
    pub n: usize,
    pub samples: usize,
    pub direct_hits: usize,
    pub direct_rate: f64,
    pub is_rate: Option<f64>,
    pub is_se: Option<f64>,
    pub is_ess: Option<f64>,
    pub proxy: f64,
}

fn chunks(samples: usize) -> Vec<(u64, usize)> {
    (0..samples.div_ceil(CHUNK))
        .map(|c| (c as u64, CHUNK.min(samples - c * CHUNK)))
        .collect()
}

/// Hits of the event among `samples` exact microcanonical draws.
pub fn direct_hits(n: usize, x: &kacld::measures::MacroState, event: SanovEvent, samples: usize, seed: u64) -> Result<usize> {
    let per: Vec<Result<usize>> = chunks(samples)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = replica(seed, c);
            let mut hits = 0;
            for _ in 0..len {
                if event.contains(&sample_gaussian_micro(n, x, &mut rng)?) {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect();
    per.into_iter().sum()
}

/// Log-weights (−∞ outside the event) of `samples` tilted draws.
pub fn tilted_log_weights(
    n: usize,
    x: &kacld::measures::MacroState,
    event: SanovEvent,
    tilt: &PiecewiseTilt,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = x.dim();
    let s = (2.0 * x.internal_energy() / d as f64).sqrt();
    let per: Vec<Result<Vec<f64>>> = chunks(samples)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = replica(seed, c);
            let mut out = Vec::with_capacity(len);
            let mut dir = vec![0.0; d];
            for _ in 0..len {
                let mut w = Vec::with_capacity(n * d);
                let mut lw = 0.0;
                for _ in 0..n {
                    let xr = tilt.sample_x(&mut rng);
                    lw += tilt.log_ratio(xr);
                    uniform_direction(d, &mut rng, &mut dir);
                    let r = s * (2.0 * xr).sqrt();
                    w.extend(dir.iter().map(|a| r * a));
                }
                let mut cfg = Configuration::new(d, w)?;
                project_to_shell(&mut cfg, x)?;
                out.push(if event.contains(&cfg) { lw } else { f64::NEG_INFINITY });
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(samples);
    for p in per {
        all.extend(p?);
    }
    Ok(all)
}

/// −(1/N) log of the importance-sampling estimate, its delta-method
/// standard error and the effective sample size of the hits.
pub fn is_rate(n: usize, lw: &[f64]) -> (f64, f64, f64) {
    let lm = log_mean_exp(lw);
    let rate = -lm / n as f64;
    if !lm.is_finite() {
        return (f64::INFINITY, f64::INFINITY, 0.0);
    }
    // relative variance of the weights
    let m = lw.len() as f64;
    let second = lw.iter().map(|l| (2.0 * (l - lm)).exp()).sum::<f64>() / m;
    let rel_se = ((second - 1.0).max(0.0) / m).sqrt();
    (rate, rel_se / n as f64, ess_from_log_weights(lw))
}

/// Parameters of a scan.
#[derive(Clone, Debug)]
pub struct ScanSpec {
    pub event: SanovEvent,
    pub samples: usize,
    pub tilt: bool,
    pub seed: u64,
}

/// Direct and tilted estimates for every N.
pub fn sanov_scan(n_list: &[usize], x: &kacld::measures::MacroState, spec: &ScanSpec) -> Result<(Vec<SanovRow>, Proxy)> {
    if x.u().iter().any(|&a| a != 0.0) {
        return Err(Error::InvalidArgument("the energy-deficit scan needs u = 0".into()));
    }
    let d = x.dim();
    let proxy = event_proxy(d, x.e(), spec.event)?;
    let mut rows = Vec::new();
    let n_min = n_list.iter().copied().min().unwrap_or(0);
    for (i, &n) in n_list.iter().enumerate() {
        let seed_direct = kacld::rng::child_seed(spec.seed, 2 * i as u64);
        let hits = direct_hits(n, x, spec.event, spec.samples, seed_direct)?;
        if !spec.tilt && n == n_min && hits < 10 {
            return Err(Error::EventTooRare { hits });
        }
        let direct_rate = -((hits as f64) / spec.samples as f64).ln() / n as f64;
        let (is_rate_v, is_se, is_ess) = if spec.tilt {
            let tilt = match spec.event {
                SanovEvent::Full => PiecewiseTilt::new(d, 1.0, 0.0, 0.0)?,
                SanovEvent::EnergyDeficit { radius, .. } => {
                    let s2 = 2.0 * x.e() / d as f64;
                    PiecewiseTilt::new(d, radius * radius / (2.0 * s2), proxy.theta_in, proxy.theta_out)?
                }
            };
            let lw = tilted_log_weights(n, x, spec.event, &tilt, spec.samples, kacld::rng::child_seed(spec.seed, 2 * i as u64 + 1))?;
            let (r, se, ess) = is_rate(n, &lw);
            if ess < 10.0 {
                return Err(Error::WeightDegenerate { ess });
            }
            (Some(r), Some(se), Some(ess))
        } else {
            (None, None, None)
        };
        rows.push(SanovRow {
            n,
            samples: spec.samples,
            direct_hits: hits,
            direct_rate: if direct_rate == 0.0 { 0.0 } else { direct_rate },
            is_rate: is_rate_v,
            is_se,
            is_ess,
            proxy: proxy.value,
        });
    }
    Ok((rows, proxy))
}
