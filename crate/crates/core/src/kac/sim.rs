//! Event-driven simulators: exact pair-rate scheme, null-collision scheme
//! and thinning for bounded perturbed kernels.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::collision::{collide_in_place, sample_scatter_direction};
use super::kernel::{CollisionKernel, KernelSpec};
use super::sphere::{kappa, Vector};
use super::trajectory::{CollisionEvent, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::microcanonical::Configuration;
use crate::vecops::{dist, norm};

/// Hard-sphere scheduling algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Exact,
    Null,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Scheme::Exact),
            "null" => Ok(Scheme::Null),
            _ => Err(Error::Parse(format!("unknown scheme {s:?}"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Exact => "exact",
            Scheme::Null => "null",
        })
    }
}

/// Simulate the Kac walk with generator (1/N)Σ_{i<j}L_ij on [0, T].
/// Hard spheres use the exact scheme; perturbed kernels use thinning.
pub fn simulate<R: Rng>(init: &Configuration, kernel: &KernelSpec, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    match kernel {
        KernelSpec::HardSphere => Ok(simulate_exact(init, horizon, rng)),
        KernelSpec::Perturbed(k) => simulate_perturbed(init, k.as_ref(), horizon, rng),
    }
}

/// Hard-sphere simulation with the chosen scheme.
pub fn simulate_hard_sphere<R: Rng>(init: &Configuration, scheme: Scheme, horizon: f64, rng: &mut R) -> Trajectory {
    match scheme {
        Scheme::Exact => simulate_exact(init, horizon, rng),
        Scheme::Null => simulate_null_collision(init, horizon, rng),
    }
}

fn record(t: f64, i: usize, j: usize, c: &mut Configuration, omega: Vector) -> CollisionEvent {
    let v_in = Vector::from_slice(c.particle(i));
    let vstar_in = Vector::from_slice(c.particle(j));
    let mut v_out = v_in.clone();
    let mut vstar_out = vstar_in.clone();
    collide_in_place(&mut v_out, &mut vstar_out, &omega);
    c.particle_mut(i).copy_from_slice(&v_out);
    c.particle_mut(j).copy_from_slice(&vstar_out);
    CollisionEvent { t, i, j, v_in, vstar_in, v_out, vstar_out, omega }
}

/// Full pair-rate bookkeeping: symmetric rate matrix plus row sums.
struct PairRates {
    n: usize,
    kappa: f64,
    lam: Vec<f64>,
    row: Vec<f64>,
}

impl PairRates {
    fn new(c: &Configuration) -> Self {
        let n = c.n();
        let mut r = Self { n, kappa: kappa(c.dim()), lam: vec![0.0; n * n], row: vec![0.0; n] };
        for i in 0..n {
            for j in i + 1..n {
                let l = r.kappa * dist(c.particle(i), c.particle(j));
                r.lam[i * n + j] = l;
                r.lam[j * n + i] = l;
            }
        }
        r.refresh_rows();
        r
    }

    fn refresh_rows(&mut self) {
        for i in 0..self.n {
            self.row[i] = self.lam[i * self.n..(i + 1) * self.n].iter().sum();
        }
    }

    /// 2 Σ_{i<j} λ_ij.
    fn twice_total(&self) -> f64 {
        self.row.iter().sum()
    }

    fn pick(weights: &[f64], mut u: f64) -> usize {
        let mut last = 0;
        for (k, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                if u < w {
                    return k;
                }
                last = k;
            }
            u -= w;
        }
        last
    }

    fn update(&mut self, c: &Configuration, i: usize, j: usize) {
        let n = self.n;
        let (vi, vj) = (c.particle(i), c.particle(j));
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            let vk = c.particle(k);
            let li = self.kappa * dist(vi, vk);
            let lj = self.kappa * dist(vj, vk);
            self.row[k] += (li - self.lam[i * n + k]) + (lj - self.lam[j * n + k]);
            self.lam[i * n + k] = li;
            self.lam[k * n + i] = li;
            self.lam[j * n + k] = lj;
            self.lam[k * n + j] = lj;
        }
        let lij = self.kappa * dist(vi, vj);
        self.lam[i * n + j] = lij;
        self.lam[j * n + i] = lij;
        self.row[i] = self.lam[i * n..(i + 1) * n].iter().sum();
        self.row[j] = self.lam[j * n..(j + 1) * n].iter().sum();
    }

    #[cfg(debug_assertions)]
    fn check(&self, c: &Configuration) {
        let fresh = PairRates::new(c).twice_total();
        let kept = self.twice_total();
        debug_assert!(
            (fresh - kept).abs() <= 1e-9 * fresh.max(f64::MIN_POSITIVE),
            "pair-rate bookkeeping drifted: {kept} vs {fresh}"
        );
    }
}

/// Exact-rate scheme: waits Exp(R), R = (1/N)Σ_{i<j}λ_ij, picks a pair with
/// probability λ_ij/(NR) and refreshes the 2(N−2)+1 affected rates.
pub fn simulate_exact<R: Rng>(init: &Configuration, horizon: f64, rng: &mut R) -> Trajectory {
    let n = init.n();
    let mut c = init.clone();
    let mut rates = PairRates::new(&c);
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut since_refresh = 0;
    loop {
        let s = rates.twice_total();
        let total = s / (2.0 * n as f64);
        if !(total > 0.0) {
            break;
        }
        t += rng.sample::<f64, _>(Exp1) / total;
        if t > horizon {
            break;
        }
        let i = PairRates::pick(&rates.row, rng.random::<f64>() * s);
        let j = PairRates::pick(&rates.lam[i * n..(i + 1) * n], rng.random::<f64>() * rates.row[i]);
        let (a, b) = (i.min(j), i.max(j));
        let omega = sample_scatter_direction(c.particle(a), c.particle(b), rng).expect("selected pair has positive rate");
        events.push(record(t, a, b, &mut c, omega));
        rates.update(&c, a, b);
        since_refresh += 1;
        if since_refresh >= n {
            rates.refresh_rows();
            since_refresh = 0;
        }
        #[cfg(debug_assertions)]
        if events.len() % 1000 == 0 {
            rates.check(&c);
        }
    }
    Trajectory { initial: init.clone(), events, horizon }
}

/// Binary sum tree over nonnegative leaf weights.
struct SumTree {
    size: usize,
    tree: Vec<f64>,
}

impl SumTree {
    fn new(values: &[f64]) -> Self {
        let size = values.len().next_power_of_two();
        let mut tree = vec![0.0; 2 * size];
        tree[size..size + values.len()].copy_from_slice(values);
        for k in (1..size).rev() {
            tree[k] = tree[2 * k] + tree[2 * k + 1];
        }
        Self { size, tree }
    }
    fn total(&self) -> f64 {
        self.tree[1]
    }
    fn leaf(&self, i: usize) -> f64 {
        self.tree[self.size + i]
    }
    fn set(&mut self, i: usize, v: f64) {
        let mut k = self.size + i;
        self.tree[k] = v;
        while k > 1 {
            k /= 2;
            self.tree[k] = self.tree[2 * k] + self.tree[2 * k + 1];
        }
    }
    fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            let l = 2 * k;
            if u < self.tree[l] || self.tree[l + 1] <= 0.0 {
                k = l;
            } else {
                u -= self.tree[l];
                k = l + 1;
            }
        }
        k - self.size
    }
}

/// Null-collision scheme with majorant κ_d(|v_i| + |v_j|): candidates at
/// total rate κ_d(N−1)Σ|v_i|/N, the unordered pair drawn with probability
/// ∝ |v_i| + |v_j| (particle ∝ |v_i|, partner uniform), accepted with
/// probability |v_i − v_j|/(|v_i| + |v_j|).
pub fn simulate_null_collision<R: Rng>(init: &Configuration, horizon: f64, rng: &mut R) -> Trajectory {
    let n = init.n();
    let k = kappa(init.dim());
    let mut c = init.clone();
    let speeds: Vec<f64> = (0..n).map(|i| norm(c.particle(i))).collect();
    let mut tree = SumTree::new(&speeds);
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let s = tree.total();
        let rbar = k * (n - 1) as f64 * s / n as f64;
        if !(rbar > 0.0) {
            break;
        }
        t += rng.sample::<f64, _>(Exp1) / rbar;
        if t > horizon {
            break;
        }
        let i = tree.find(rng.random::<f64>() * s);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (si, sj) = (tree.leaf(i), tree.leaf(j));
        let rel = dist(c.particle(i), c.particle(j));
        let acc = rel / (si + sj);
        assert!(acc <= 1.0 + 1e-12, "null-collision acceptance {acc} exceeds 1");
        if rng.random::<f64>() < acc {
            let (a, b) = (i.min(j), i.max(j));
            let omega = sample_scatter_direction(c.particle(a), c.particle(b), rng).expect("accepted pair is distinct");
            events.push(record(t, a, b, &mut c, omega));
            tree.set(a, norm(c.particle(a)));
            tree.set(b, norm(c.particle(b)));
        }
    }
    Trajectory { initial: init.clone(), events, horizon }
}

/// Thinning against the constant per-pair bound of a perturbed kernel.
pub fn simulate_perturbed<R: Rng>(
    init: &Configuration,
    kernel: &dyn CollisionKernel,
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let n = init.n();
    let bound = kernel.lambda_bound();
    if !(bound > 0.0 && bound.is_finite()) {
        return invalid("thinning needs a finite positive rate bound");
    }
    let cand = bound * (n - 1) as f64 / 2.0;
    let mut c = init.clone();
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        t += rng.sample::<f64, _>(Exp1) / cand;
        if t > horizon {
            break;
        }
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (i.min(j), i.max(j));
        let lam = kernel.total_rate(t, c.particle(a), c.particle(b));
        if lam > bound * (1.0 + 1e-9) {
            return Err(Error::RateBoundViolated { rate: lam, bound });
        }
        if rng.random::<f64>() * bound < lam {
            let omega = kernel.sample_direction(t, c.particle(a), c.particle(b), rng)?;
            events.push(record(t, a, b, &mut c, omega));
        }
    }
    Ok(Trajectory { initial: init.clone(), events, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kac::kernel::{HardSphere, Maxwell, Truncated};
    use crate::rng::replica;
    use crate::stats::{chi2_gof, poisson_pmf};

    fn two() -> Configuration {
        Configuration::new(2, vec![1.0, 0.0, -1.0, 0.0]).unwrap()
    }

    fn poisson_p(counts: &[usize], mean: f64) -> f64 {
        let maxk = 15;
        let mut obs = vec![0.0; maxk + 1];
        for &c in counts {
            obs[c.min(maxk)] += 1.0;
        }
        let n = counts.len() as f64;
        let mut exp: Vec<f64> = (0..maxk).map(|k| n * poisson_pmf(k as u64, mean)).collect();
        exp.push(n - exp.iter().sum::<f64>());
        chi2_gof(&obs, &exp, 5.0).2
    }

    #[test]
    fn two_particle_counts_are_poisson() {
        for scheme in [Scheme::Exact, Scheme::Null] {
            let counts: Vec<usize> = (0..4000)
                .map(|r| simulate_hard_sphere(&two(), scheme, 1.0, &mut replica(3, r)).events.len())
                .collect();
            assert!(poisson_p(&counts, 2.0) > 0.001, "{scheme}");
        }
    }

    #[test]
    fn trajectories_replay_and_conserve() {
        let init = Configuration::new(2, (0..40).map(|k| ((k * 7 % 11) as f64 - 5.0) / 3.0).collect()).unwrap();
        for scheme in [Scheme::Exact, Scheme::Null] {
            let tr = simulate_hard_sphere(&init, scheme, 2.0, &mut replica(9, 0));
            assert!(!tr.events.is_empty());
            tr.verify().unwrap();
            let (de, dp) = tr.drift();
            assert!(de < 1e-10 && dp < 1e-10);
            let again = simulate_hard_sphere(&init, scheme, 2.0, &mut replica(9, 0));
            assert_eq!(again, tr);
        }
    }

    #[test]
    fn maxwell_kernel_counts_are_poisson() {
        let k = Maxwell { b0: 0.25, a: 0.5, dim: 2 };
        let init = Configuration::new(2, vec![0.5, 0.0, -0.5, 0.0, 0.0, 1.0, 0.0, -1.0]).unwrap();
        let mean = 1.5 * k.total();
        let counts: Vec<usize> = (0..4000)
            .map(|r| simulate_perturbed(&init, &k, 1.0, &mut replica(4, r)).unwrap().events.len())
            .collect();
        assert!(poisson_p(&counts, mean) > 0.001);
    }

    #[test]
    fn inactive_truncation_reproduces_hard_sphere_path() {
        let init = Configuration::new(2, vec![0.3, 0.1, -0.2, 0.0, 0.0, -0.4, -0.1, 0.3]).unwrap();
        let tr = Truncated { cap: 2.0, dim: 2 };
        let hs = HardSphere { bound: tr.lambda_bound() };
        let a = simulate_perturbed(&init, &hs, 3.0, &mut replica(1, 0)).unwrap();
        let b = simulate_perturbed(&init, &tr, 3.0, &mut replica(1, 0)).unwrap();
        assert!(!a.events.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn bound_violation_is_reported() {
        let hs = HardSphere { bound: 0.1 };
        let r = simulate_perturbed(&two(), &hs, 1000.0, &mut replica(0, 0));
        assert!(matches!(r, Err(Error::RateBoundViolated { .. })));
    }
}
