//! Uniform tensor velocity grids with trapezoidal weights, and densities on them.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::vecops::zeta0;

/// Uniform grid on [−L, L]^d with `points` nodes per axis.
#[derive(Clone, Debug)]
pub struct GridSpec {
    dim: usize,
    half_width: f64,
    points: usize,
    nodes: Arc<[f64]>,
    weights: Arc<[f64]>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.half_width == other.half_width && self.points == other.points
    }
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return invalid(format!("grid dimension {dim} not supported"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) || points < 2 {
            return invalid("grid needs L > 0 and at least 2 points per axis");
        }
        let total = points.pow(dim as u32);
        let h = 2.0 * half_width / (points - 1) as f64;
        let mut nodes = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        for k in 0..total {
            let mut rem = k;
            let mut w = 1.0;
            let start = nodes.len();
            nodes.resize(start + dim, 0.0);
            for a in (0..dim).rev() {
                let i = rem % points;
                rem /= points;
                nodes[start + a] = -half_width + i as f64 * h;
                w *= if i == 0 || i == points - 1 { 0.5 * h } else { h };
            }
            weights.push(w);
        }
        Ok(Self { dim, half_width, points, nodes: nodes.into(), weights: weights.into() })
    }

    /// The default 2-d grid: L = 8, 128 points per axis.
    pub fn default_2d() -> Self {
        Self::new(2, 8.0, 128).expect("valid default grid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn points(&self) -> usize {
        self.points
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }
    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Flat index from per-axis indices (first axis slowest).
    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points + i)
    }

    /// Per-axis indices of a flat index.
    pub fn unflat(&self, mut k: usize, out: &mut [usize]) {
        for a in (0..self.dim).rev() {
            out[a] = k % self.points;
            k /= self.points;
        }
    }

    /// Nearest node to `v`, or `None` if `v` lies outside the cells of the box.
    pub fn locate(&self, v: &[f64]) -> Option<usize> {
        let h = self.spacing();
        let mut k = 0usize;
        for &x in v.iter().take(self.dim) {
            let r = ((x + self.half_width) / h).round();
            if !(r >= 0.0 && r <= (self.points - 1) as f64) {
                return None;
            }
            k = k * self.points + r as usize;
        }
        Some(k)
    }

    /// Nearest node with coordinates clamped into the box.
    pub fn locate_clamped(&self, v: &[f64]) -> usize {
        let h = self.spacing();
        let mut k = 0usize;
        for &x in v.iter().take(self.dim) {
            let r = ((x + self.half_width) / h).round().clamp(0.0, (self.points - 1) as f64);
            k = k * self.points + r as usize;
        }
        k
    }

    /// Whether node `k` lies on the boundary of the box.
    pub fn on_boundary(&self, k: usize) -> bool {
        let mut rem = k;
        for _ in 0..self.dim {
            let i = rem % self.points;
            rem /= self.points;
            if i == 0 || i == self.points - 1 {
                return true;
            }
        }
        false
    }

    pub fn header(&self) -> String {
        format!("d={},L={},n_g={}", self.dim, self.half_width, self.points)
    }

    pub fn parse_header(line: &str) -> Result<Self> {
        let mut d = None;
        let mut l = None;
        let mut n = None;
        for part in line.trim().split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad grid header field {part:?}")))?;
            let bad = |_| Error::Parse(format!("bad value in {part:?}"));
            match k.trim() {
                "d" => d = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "L" => l = Some(v.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "n_g" => n = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                _ => {}
            }
        }
        match (d, l, n) {
            (Some(d), Some(l), Some(n)) => Self::new(d, l, n),
            _ => Err(Error::Parse("grid header needs d, L and n_g".into())),
        }
    }
}

/// Nonnegative node values of a density on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(x) = values.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return invalid(format!("density value {x} is not finite and nonnegative"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(grid.node(k))).collect();
        Self::new(grid.clone(), values)
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Quadrature of `g · f`.
    pub fn expect(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        let mut s = 0.0;
        for (k, &f) in self.values.iter().enumerate() {
            if f != 0.0 {
                s += self.grid.weight(k) * f * g(self.grid.node(k));
            }
        }
        s
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().zip(self.grid.weights()).map(|(f, w)| f * w).sum()
    }

    pub fn energy(&self) -> f64 {
        self.expect(zeta0)
    }

    pub fn momentum(&self) -> Vec<f64> {
        (0..self.grid.dim()).map(|a| self.expect(|v| v[a])).collect()
    }

    /// Rescale to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return invalid("cannot normalise a density of zero mass");
        }
        Ok(Self::from_raw(self.grid.clone(), self.values.iter().map(|x| x / m).collect()))
    }

    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.grid.weights())
            .map(|((a, b), w)| w * (a - b).abs())
            .sum())
    }

    /// Affine combination `a·self + b·other` (nonnegative coefficients).
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self::new(self.grid.clone(), values)
    }

    /// Scale all values.
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|x| x * c).collect())
    }

    /// Histogram of point samples: density = count / (n · w_k) at the nearest node.
    /// Returns the density and the fraction of samples outside the box.
    pub fn histogram(grid: &GridSpec, points: &[f64]) -> (Self, f64) {
        let d = grid.dim();
        let n = points.len() / d;
        let mut counts = vec![0.0; grid.len()];
        let mut clipped = 0usize;
        for v in points.chunks_exact(d) {
            match grid.locate(v) {
                Some(k) => counts[k] += 1.0,
                None => clipped += 1,
            }
        }
        for (k, c) in counts.iter_mut().enumerate() {
            *c /= n as f64 * grid.weight(k);
        }
        (Self::from_raw(grid.clone(), counts), clipped as f64 / n as f64)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 24);
        s.push_str(&self.grid.header());
        s.push('\n');
        for v in &self.values {
            let _ = writeln!(s, "{v}");
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty density file".into()))?;
        let grid = GridSpec::parse_header(header)?;
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{l:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_box_volume() {
        let g = GridSpec::new(2, 3.0, 11).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 36.0).abs() < 1e-12);
        assert_eq!(g.node(0), &[-3.0, -3.0]);
        assert_eq!(g.node(g.len() - 1), &[3.0, 3.0]);
        assert_eq!(g.locate(&[0.01, -2.96]), Some(g.flat(&[5, 0])));
        assert_eq!(g.locate(&[3.5, 0.0]), None);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = GridSpec::new(2, 8.0, 16).unwrap();
        let f = GridDensity::from_fn(&g, |v| (-(v[0] * v[0] + 0.3 * v[1])).exp() / 7.0).unwrap();
        let back = GridDensity::from_csv_str(&f.to_csv_string()).unwrap();
        assert_eq!(back, f);
        assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn histogram_has_unit_mass() {
        let g = GridSpec::new(2, 2.0, 9).unwrap();
        let pts = [0.1, 0.2, -1.99, 2.0, 1.0, -0.3, 9.0, 9.0];
        let (h, clipped) = GridDensity::histogram(&g, &pts);
        assert!((h.mass() - 0.75).abs() < 1e-14);
        assert!((clipped - 0.25).abs() < 1e-14);
    }
}
