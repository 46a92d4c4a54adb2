//! Coarse partitions of (t, v, v*, ω) for flow histograms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kac::kappa;
use crate::quad::gauss_legendre;
use crate::vecops::norm;

/// `per_axis` equal bins on [−L, L] along each axis; the outermost bins
/// extend to infinity so every velocity is counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityBins {
    pub dim: usize,
    pub per_axis: usize,
    pub half_width: f64,
}

impl VelocityBins {
    pub fn new(dim: usize, per_axis: usize, half_width: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) || per_axis == 0 || !(half_width > 0.0) {
            return invalid("velocity bins need d in {2,3}, at least one bin and L > 0");
        }
        Ok(Self { dim, per_axis, half_width })
    }

    pub fn len(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    fn axis_index(&self, x: f64) -> usize {
        let h = 2.0 * self.half_width / self.per_axis as f64;
        let k = ((x + self.half_width) / h).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.per_axis - 1)
        }
    }

    pub fn index(&self, v: &[f64]) -> usize {
        v.iter().fold(0, |acc, &x| acc * self.per_axis + self.axis_index(x))
    }

    /// Box centre of bin `k`.
    pub fn center(&self, mut k: usize) -> Vec<f64> {
        let h = 2.0 * self.half_width / self.per_axis as f64;
        let mut c = vec![0.0; self.dim];
        for a in (0..self.dim).rev() {
            c[a] = -self.half_width + h * ((k % self.per_axis) as f64 + 0.5);
            k /= self.per_axis;
        }
        c
    }
}

/// Partition of the unit sphere of scattering directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DirectionBins {
    /// d = 2: n equal arcs of the polar angle; n must be even.
    Angle(usize),
    /// d = 3: nz equal bands in cos θ times nphi equal sectors; nphi even.
    Sphere { nz: usize, nphi: usize },
    /// The whole sphere as a single bin.
    Whole,
}

/// Antiderivative of |cos x|.
fn abs_cos_primitive(x: f64) -> f64 {
    let k = (x / PI).round();
    2.0 * k + if (k as i64) % 2 == 0 { x.sin() } else { -x.sin() }
}

impl DirectionBins {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            Self::Angle(n) if dim == 2 && n >= 2 && n % 2 == 0 => Ok(()),
            Self::Sphere { nz, nphi } if dim == 3 && nz >= 1 && nphi >= 2 && nphi % 2 == 0 => Ok(()),
            Self::Whole => Ok(()),
            _ => invalid("direction bins do not match the dimension"),
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Self::Angle(n) => n,
            Self::Sphere { nz, nphi } => nz * nphi,
            Self::Whole => 1,
        }
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    fn polar(x: f64, y: f64) -> f64 {
        y.atan2(x).rem_euclid(2.0 * PI)
    }

    pub fn index(&self, omega: &[f64]) -> usize {
        match *self {
            Self::Angle(n) => {
                let th = Self::polar(omega[0], omega[1]);
                ((th / (2.0 * PI) * n as f64) as usize).min(n - 1)
            }
            Self::Sphere { nz, nphi } => {
                let iz = (((omega[2] + 1.0) / 2.0 * nz as f64) as usize).min(nz - 1);
                let ph = Self::polar(omega[0], omega[1]);
                let ip = ((ph / (2.0 * PI) * nphi as f64) as usize).min(nphi - 1);
                iz * nphi + ip
            }
            Self::Whole => 0,
        }
    }

    /// Bin of −ω.
    pub fn antipode(&self, b: usize) -> usize {
        match *self {
            Self::Angle(n) => (b + n / 2) % n,
            Self::Sphere { nz, nphi } => {
                let (iz, ip) = (b / nphi, b % nphi);
                (nz - 1 - iz) * nphi + (ip + nphi / 2) % nphi
            }
            Self::Whole => 0,
        }
    }

    /// A direction inside bin `b`.
    pub fn center(&self, b: usize, dim: usize) -> Vec<f64> {
        match *self {
            Self::Angle(n) => {
                let th = 2.0 * PI * (b as f64 + 0.5) / n as f64;
                vec![th.cos(), th.sin()]
            }
            Self::Sphere { nz, nphi } => {
                let (iz, ip) = (b / nphi, b % nphi);
                let z = -1.0 + 2.0 * (iz as f64 + 0.5) / nz as f64;
                let ph = 2.0 * PI * (ip as f64 + 0.5) / nphi as f64;
                let r = (1.0 - z * z).sqrt();
                vec![r * ph.cos(), r * ph.sin(), z]
            }
            Self::Whole => {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                e
            }
        }
    }

    /// ∫_bin ½|w·ω| dω for every bin, written into `out`.
    pub fn kernel_integrals(&self, w: &[f64], out: &mut [f64]) {
        let r = norm(w);
        match *self {
            Self::Angle(n) => {
                if r == 0.0 {
                    out.fill(0.0);
                    return;
                }
                let phi = Self::polar(w[0], w[1]);
                let width = 2.0 * PI / n as f64;
                let mut prev = abs_cos_primitive(-phi);
                for (b, o) in out.iter_mut().enumerate() {
                    let next = abs_cos_primitive(width * (b + 1) as f64 - phi);
                    *o = 0.5 * r * (next - prev);
                    prev = next;
                }
            }
            Self::Sphere { nz, nphi } => {
                out.fill(0.0);
                if r == 0.0 {
                    return;
                }
                let rule = sphere_bin_rule(nz, nphi);
                for (b, o) in out.iter_mut().enumerate() {
                    for &(om, wt) in &rule[b] {
                        *o += wt * 0.5 * (w[0] * om[0] + w[1] * om[1] + w[2] * om[2]).abs();
                    }
                }
            }
            Self::Whole => out[0] = kappa(w.len()) * r,
        }
    }
}

type BinRule = Vec<Vec<([f64; 3], f64)>>;

/// Tensor Gauss–Legendre nodes in (z, φ) inside each sphere bin.
fn sphere_bin_rule(nz: usize, nphi: usize) -> &'static BinRule {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static BinRule>>> = OnceLock::new();
    let mut map = CACHE.get_or_init(Default::default).lock().expect("bin rule cache");
    map.entry((nz, nphi)).or_insert_with(|| {
        let mut rule = Vec::with_capacity(nz * nphi);
        for iz in 0..nz {
            let (z0, z1) = (-1.0 + 2.0 * iz as f64 / nz as f64, -1.0 + 2.0 * (iz + 1) as f64 / nz as f64);
            let (zs, wz) = gauss_legendre(6, z0, z1);
            for ip in 0..nphi {
                let (p0, p1) = (2.0 * PI * ip as f64 / nphi as f64, 2.0 * PI * (ip + 1) as f64 / nphi as f64);
                let (ps, wp) = gauss_legendre(6, p0, p1);
                let mut cell = Vec::with_capacity(36);
                for (z, a) in zs.iter().zip(&wz) {
                    let s = (1.0 - z * z).sqrt();
                    for (p, b) in ps.iter().zip(&wp) {
                        cell.push(([s * p.cos(), s * p.sin(), *z], a * b));
                    }
                }
                rule.push(cell);
            }
        }
        Box::leak(Box::new(rule))
    })
}

/// Time bins × velocity bins for v and v* × direction bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowGrid {
    pub time_edges: Vec<f64>,
    pub velocity: VelocityBins,
    pub directions: DirectionBins,
}

impl FlowGrid {
    pub fn new(time_edges: Vec<f64>, velocity: VelocityBins, directions: DirectionBins) -> Result<Self> {
        if time_edges.len() < 2 || time_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("time edges must be strictly increasing");
        }
        directions.validate(velocity.dim)?;
        Ok(Self { time_edges, velocity, directions })
    }

    /// `nt` equal time bins on [0, T].
    pub fn uniform(horizon: f64, nt: usize, velocity: VelocityBins, directions: DirectionBins) -> Result<Self> {
        let nt = nt.max(1);
        Self::new((0..=nt).map(|k| horizon * k as f64 / nt as f64).collect(), velocity, directions)
    }

    /// T/20 time bins, 16 velocity bins per axis on [−L, L], 16 angle bins
    /// (d = 2) or 4 × 8 sphere bins (d = 3).
    pub fn default_for(dim: usize, horizon: f64, half_width: f64) -> Result<Self> {
        let dirs = if dim == 2 { DirectionBins::Angle(16) } else { DirectionBins::Sphere { nz: 4, nphi: 8 } };
        Self::uniform(horizon, 20, VelocityBins::new(dim, 16, half_width)?, dirs)
    }

    pub fn dim(&self) -> usize {
        self.velocity.dim
    }
    pub fn time_bins(&self) -> usize {
        self.time_edges.len() - 1
    }
    /// Bins per time slice.
    pub fn slice_len(&self) -> usize {
        let nv = self.velocity.len();
        nv * nv * self.directions.len()
    }
    pub fn len(&self) -> usize {
        self.time_bins() * self.slice_len()
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time bin of t (T falls in the last bin).
    pub fn time_index(&self, t: f64) -> usize {
        let k = self.time_edges.partition_point(|&e| e <= t);
        k.saturating_sub(1).min(self.time_bins() - 1)
    }

    pub fn slice_index(&self, a: usize, b: usize, o: usize) -> usize {
        (a * self.velocity.len() + b) * self.directions.len() + o
    }

    pub fn index(&self, tb: usize, a: usize, b: usize, o: usize) -> usize {
        tb * self.slice_len() + self.slice_index(a, b, o)
    }

    /// (t, v, v*, ω) at the centre of bin `k`.
    pub fn center(&self, k: usize) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
        let no = self.directions.len();
        let nv = self.velocity.len();
        let s = self.slice_len();
        let (tb, r) = (k / s, k % s);
        let (ab, o) = (r / no, r % no);
        let (a, b) = (ab / nv, ab % nv);
        let t = 0.5 * (self.time_edges[tb] + self.time_edges[tb + 1]);
        (t, self.velocity.center(a), self.velocity.center(b), self.directions.center(o, self.dim()))
    }

    /// Spread `value` per unit time over [t0, t1] into the time slices of
    /// entry `e`.
    pub(crate) fn spread_in_time(&self, acc: &mut [f64], e: usize, value: f64, t0: f64, t1: f64) {
        if !(t1 > t0) || value == 0.0 {
            return;
        }
        let s = self.slice_len();
        let mut tb = self.time_index(t0);
        let mut a = t0;
        loop {
            let hi = if tb + 1 == self.time_bins() { f64::INFINITY } else { self.time_edges[tb + 1] };
            let b = t1.min(hi);
            acc[tb * s + e] += value * (b - a);
            if b >= t1 {
                break;
            }
            a = b;
            tb += 1;
        }
    }
}
