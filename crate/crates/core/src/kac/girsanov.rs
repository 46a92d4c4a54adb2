//! λ^F and the exponential-martingale log-weight of a trajectory.

use super::collision::{collide_in_place, hard_sphere_b, pair_rate};
use super::sphere::{SphereRule, Vector};
use super::trajectory::Trajectory;
use crate::observables::FlowTestFunction;
use crate::quad::gauss_legendre;
use crate::vecops::{dist, norm};

/// λ^F(t; v, v*) = ∫ B(v − v*, ω) exp F(t; v, v*, v', v*') dω.
pub fn lambda_f(f: &dyn FlowTestFunction, t: f64, v: &[f64], vstar: &[f64], rule: &SphereRule) -> f64 {
    if let Some(x) = f.lambda_closed_form(t, v, vstar) {
        return x;
    }
    let w: Vector = v.iter().zip(vstar).map(|(a, b)| a - b).collect();
    let wn = norm(&w);
    if wn == 0.0 {
        return 0.0;
    }
    let axis: Vector = w.iter().map(|x| x / wn).collect();
    let mut vp: Vector = Vector::from_slice(v);
    let mut vsp: Vector = Vector::from_slice(vstar);
    rule.integrate(&axis, |om| {
        let b = hard_sphere_b(v, vstar, om);
        if b == 0.0 {
            return 0.0;
        }
        vp.copy_from_slice(v);
        vsp.copy_from_slice(vstar);
        collide_in_place(&mut vp, &mut vsp, om);
        b * f.eval(t, v, vstar, &vp, &vsp).exp()
    })
}

fn pair_g(f: &dyn FlowTestFunction, t: f64, v: &[f64], vstar: &[f64], rule: &SphereRule) -> f64 {
    if dist(v, vstar) == 0.0 {
        return 0.0;
    }
    lambda_f(f, t, v, vstar, rule) - pair_rate(v, vstar)
}

/// N·[Q^N(F) − ½∫π^N⊗π^N(λ^F − λ)ds] along the trajectory. The time
/// integral is an exact sum over constancy intervals when F does not depend
/// on time, and a 4-point Gauss rule per interval otherwise.
pub fn girsanov_log_weight(traj: &Trajectory, f: &dyn FlowTestFunction, rule: &SphereRule) -> f64 {
    let n = traj.n();
    let mut c = traj.initial.clone();
    let mut events_sum = 0.0;
    let mut integral = 0.0;
    let mut t_prev = 0.0;
    if f.time_homogeneous() {
        let mut g = vec![0.0; n * n];
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let x = pair_g(f, 0.0, c.particle(i), c.particle(j), rule);
                g[i * n + j] = x;
                g[j * n + i] = x;
                total += x;
            }
        }
        for ev in &traj.events {
            integral += total * (ev.t - t_prev);
            t_prev = ev.t;
            events_sum += f.eval(ev.t, &ev.v_in, &ev.vstar_in, &ev.v_out, &ev.vstar_out);
            c.particle_mut(ev.i).copy_from_slice(&ev.v_out);
            c.particle_mut(ev.j).copy_from_slice(&ev.vstar_out);
            for k in 0..n {
                if k == ev.i || k == ev.j {
                    continue;
                }
                let gi = pair_g(f, 0.0, c.particle(ev.i), c.particle(k), rule);
                let gj = pair_g(f, 0.0, c.particle(ev.j), c.particle(k), rule);
                total += gi - g[ev.i * n + k] + gj - g[ev.j * n + k];
                g[ev.i * n + k] = gi;
                g[k * n + ev.i] = gi;
                g[ev.j * n + k] = gj;
                g[k * n + ev.j] = gj;
            }
            let gij = pair_g(f, 0.0, c.particle(ev.i), c.particle(ev.j), rule);
            total += gij - g[ev.i * n + ev.j];
            g[ev.i * n + ev.j] = gij;
            g[ev.j * n + ev.i] = gij;
        }
        integral += total * (traj.horizon - t_prev);
    } else {
        let interval = |c: &crate::microcanonical::Configuration, a: f64, b: f64| -> f64 {
            if b <= a {
                return 0.0;
            }
            let (ts, ws) = gauss_legendre(4, a, b);
            let mut s = 0.0;
            for (t, w) in ts.into_iter().zip(ws) {
                let mut tot = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        tot += pair_g(f, t, c.particle(i), c.particle(j), rule);
                    }
                }
                s += w * tot;
            }
            s
        };
        for ev in &traj.events {
            integral += interval(&c, t_prev, ev.t);
            t_prev = ev.t;
            events_sum += f.eval(ev.t, &ev.v_in, &ev.vstar_in, &ev.v_out, &ev.vstar_out);
            c.particle_mut(ev.i).copy_from_slice(&ev.v_out);
            c.particle_mut(ev.j).copy_from_slice(&ev.vstar_out);
        }
        integral += interval(&c, t_prev, traj.horizon);
    }
    events_sum - integral / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kac::sphere::{kappa, sphere_area};
    use crate::kac::{simulate_exact, SphereRule};
    use crate::microcanonical::sample_gaussian_micro;
    use crate::measures::MacroState;
    use crate::observables::{ClippedLogInverseB, ConstantFlow, FnFlow};
    use crate::rng::replica;

    #[test]
    fn lambda_f_examples() {
        let rule = SphereRule::default_for(2);
        let (v, w) = ([0.7, -0.2], [-0.4, 0.9]);
        let zero = FnFlow::homogeneous(0.0, |_, _, _, _| 0.0);
        assert!((lambda_f(&zero, 0.0, &v, &w, rule) - pair_rate(&v, &w)).abs() < 1e-12);
        let c = FnFlow::homogeneous(0.3, |_, _, _, _| 0.3);
        assert!((lambda_f(&c, 0.0, &v, &w, rule) - 0.3f64.exp() * pair_rate(&v, &w)).abs() < 1e-12);
        assert!((lambda_f(&ConstantFlow(0.3), 0.0, &v, &w, rule) - 0.3f64.exp() * pair_rate(&v, &w)).abs() < 1e-15);
        let lb = ClippedLogInverseB { clip: 20.0 };
        assert!((lambda_f(&lb, 0.0, &v, &w, rule) - sphere_area(2)).abs() < 1e-6);
        let rule3 = SphereRule::default_for(3);
        let (v3, w3) = ([0.7, -0.2, 0.1], [-0.4, 0.9, 0.5]);
        assert!((lambda_f(&lb, 0.0, &v3, &w3, rule3) - sphere_area(3)).abs() < 1e-6);
        assert!((lambda_f(&zero, 0.0, &v3, &w3, rule3) - kappa(3) * dist(&v3, &w3)).abs() < 1e-12);
    }

    #[test]
    fn zero_flow_has_zero_weight_and_time_paths_agree() {
        let x = MacroState::at_rest(1.0, 2).unwrap();
        let init = sample_gaussian_micro(8, &x, &mut replica(1, 0)).unwrap();
        let tr = simulate_exact(&init, 1.0, &mut replica(1, 1));
        let rule = SphereRule::new(2, 8);
        let zero = FnFlow::homogeneous(0.0, |_, _, _, _| 0.0);
        assert!(girsanov_log_weight(&tr, &zero, &rule).abs() < 1e-10);
        let f = |_: f64, v: &[f64], vs: &[f64], vp: &[f64]| 0.2 * ((v[0] - vs[0]) * (vp[1] - v[1])).sin().powi(2);
        let hom = FnFlow::homogeneous(0.2, f);
        let inh = FnFlow { f: std::sync::Arc::new(f), bound: 0.2, homogeneous: false };
        let a = girsanov_log_weight(&tr, &hom, &rule);
        let b = girsanov_log_weight(&tr, &inh, &rule);
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
}
