//! Elastic collision rules and the hard-sphere kernel.

use rand::Rng;
use smallvec::SmallVec;

use super::sphere::{kappa, uniform_direction, Vector};
use crate::error::{Error, Result};
use crate::vecops::{dist, dot, norm};

/// v' = v + (ω·(v*−v))ω, v*' = v* − (ω·(v*−v))ω.
pub fn collision_map(v: &[f64], vstar: &[f64], omega: &[f64]) -> Result<(Vector, Vector)> {
    let n = norm(omega);
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnit { norm: n });
    }
    let mut a: Vector = SmallVec::from_slice(v);
    let mut b: Vector = SmallVec::from_slice(vstar);
    collide_in_place(&mut a, &mut b, omega);
    Ok((a, b))
}

/// In-place version of [`collision_map`] without the unit check.
#[inline]
pub fn collide_in_place(v: &mut [f64], vstar: &mut [f64], omega: &[f64]) {
    let s: f64 = omega.iter().zip(v.iter().zip(vstar.iter())).map(|(o, (a, b))| o * (b - a)).sum();
    for k in 0..omega.len() {
        let dv = s * omega[k];
        v[k] += dv;
        vstar[k] -= dv;
    }
}

/// B(v − v*, ω) = ½|(v − v*)·ω|.
#[inline]
pub fn hard_sphere_b(v: &[f64], vstar: &[f64], omega: &[f64]) -> f64 {
    0.5 * omega.iter().zip(v.iter().zip(vstar)).map(|(o, (a, b))| o * (a - b)).sum::<f64>().abs()
}

/// λ(v, v*) = κ_d |v − v*|.
#[inline]
pub fn pair_rate(v: &[f64], vstar: &[f64]) -> f64 {
    kappa(v.len()) * dist(v, vstar)
}

/// ω with density ∝ |(v − v*)·ω|, by rejection from the uniform law.
pub fn sample_scatter_direction<R: Rng + ?Sized>(v: &[f64], vstar: &[f64], rng: &mut R) -> Result<Vector> {
    let d = v.len();
    let w: Vector = v.iter().zip(vstar).map(|(a, b)| a - b).collect();
    let wn = norm(&w);
    if wn == 0.0 {
        return Err(Error::DegeneratePair);
    }
    let mut om: Vector = SmallVec::from_elem(0.0, d);
    loop {
        uniform_direction(d, rng, &mut om);
        if rng.random::<f64>() < dot(&om, &w).abs() / wn {
            return Ok(om);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::vecops::zeta0;

    #[test]
    fn examples() {
        let (a, b) = collision_map(&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!((a.as_slice(), b.as_slice()), (&[1.0, 0.0][..], &[-1.0, 0.0][..]));
        let (a, b) = collision_map(&[1.0, 0.0], &[-1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!((a.as_slice(), b.as_slice()), (&[-1.0, 0.0][..], &[1.0, 0.0][..]));
        assert!(matches!(collision_map(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]), Err(Error::NotUnit { .. })));
        assert!((pair_rate(&[1.0, 0.0], &[-1.0, 0.0]) - 4.0).abs() < 1e-14);
        assert!((pair_rate(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]) - 2.0 * std::f64::consts::PI).abs() < 1e-14);
        assert_eq!(pair_rate(&[0.3, 0.2], &[0.3, 0.2]), 0.0);
        assert!(matches!(sample_scatter_direction(&[1.0, 1.0], &[1.0, 1.0], &mut seeded(0)), Err(Error::DegeneratePair)));
    }

    #[test]
    fn conservation_over_random_trials() {
        use rand::Rng;
        let mut rng = seeded(11);
        let mut om = [0.0; 3];
        for _ in 0..100_000 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            uniform_direction(3, &mut rng, &mut om);
            let (a, b) = collision_map(&v, &w, &om).unwrap();
            let e0 = zeta0(&v) + zeta0(&w);
            assert!((zeta0(&a) + zeta0(&b) - e0).abs() <= 1e-12 * e0);
            for k in 0..3 {
                assert!((a[k] + b[k] - v[k] - w[k]).abs() <= 1e-12 * (v[k].abs() + w[k].abs()).max(1.0));
            }
        }
    }

    #[test]
    fn scatter_symmetry() {
        let mut rng = seeded(5);
        let (v, w) = ([0.3, -1.0], [1.2, 0.4]);
        let e: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
        let n = 200_000;
        let pos = (0..n).filter(|_| dot(&sample_scatter_direction(&v, &w, &mut rng).unwrap(), &e) > 0.0).count();
        let p = pos as f64 / n as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }
}
