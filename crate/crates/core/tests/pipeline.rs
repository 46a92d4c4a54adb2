//! End-to-end paths through the public API: sample, simulate, log, reload,
//! bin and evaluate.

use std::io::{BufReader, Cursor};

use kacld::kac::{read_event_log, simulate_hard_sphere, write_event_log, EventLogHeader, Scheme, Trajectory};
use kacld::measures::{micro_sanov_rate, tilt_measure, BaseMeasure, GridSpec, MacroState};
use kacld::microcanonical::{constraint_residual, sample_gaussian_micro, Configuration};
use kacld::observables::{DensityPath, DirectionBins, FlowGrid, ProductFlow, VelocityBins};
use kacld::rates::{dynamical_rate, micro_rate, DiscretizedPair};
use kacld::rng::replica;

fn x() -> MacroState {
    MacroState::new(1.0, vec![0.2, -0.1]).unwrap()
}

fn trajectory(n: usize, seed: u64) -> Trajectory {
    let mut rng = replica(seed, 0);
    let init = sample_gaussian_micro(n, &x(), &mut rng).unwrap();
    simulate_hard_sphere(&init, Scheme::Exact, 1.0, &mut rng)
}

#[test]
fn event_log_round_trip_replays() {
    let tr = trajectory(30, 1);
    let header = EventLogHeader {
        n: 30,
        d: 2,
        horizon: 1.0,
        seed: 1,
        scheme: "exact".into(),
        kernel: "hard_sphere".into(),
    };
    let mut buf = Vec::new();
    write_event_log(&mut buf, &header, &tr.events).unwrap();
    let (h2, events) = read_event_log(BufReader::new(Cursor::new(buf))).unwrap();
    assert_eq!(h2.n, 30);
    assert_eq!(events, tr.events);
    let back = Trajectory { initial: tr.initial.clone(), events, horizon: 1.0 };
    back.verify().unwrap();
    assert_eq!(back.final_configuration(), tr.final_configuration());
}

#[test]
fn configurations_survive_binary_and_json() {
    let tr = trajectory(12, 2);
    let c = tr.final_configuration();
    assert_eq!(Configuration::from_bytes(&c.to_bytes()).unwrap(), c);
    assert_eq!(Configuration::from_json(&c.to_json().unwrap()).unwrap(), c);
    let (de, du) = constraint_residual(&c, &x());
    assert!(de < 1e-12 && du < 1e-12);
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    assert_eq!(trajectory(25, 9), trajectory(25, 9));
    assert_ne!(trajectory(25, 9), trajectory(25, 10));
}

#[test]
fn simulated_pair_has_finite_positive_rate() {
    let tr = trajectory(200, 3);
    let grid = GridSpec::new(2, 6.0, 24).unwrap();
    let fg = FlowGrid::uniform(1.0, 2, VelocityBins::new(2, 2, 1.0).unwrap(), DirectionBins::Angle(4)).unwrap();
    let (pair, clipped) = DiscretizedPair::from_trajectory(&tr, &[0.0, 0.5, 1.0], &grid, &fg).unwrap();
    assert!(clipped < 0.01);
    let j = dynamical_rate(&pair).unwrap();
    assert!(j.is_finite() && j > 0.0, "{j}");
    // Q^N(1) and the exact reference mass agree to sampling accuracy
    let (q, p) = (pair.flow_mass().unwrap(), pair.reference_mass().unwrap());
    assert!((q - p).abs() < 0.2 * p, "{q} {p}");
}

#[test]
fn stationary_tilt_costs_only_its_entropy() {
    let m = BaseMeasure::gaussian(1.0, GridSpec::new(2, 7.0, 40).unwrap()).unwrap();
    let ambient = MacroState::at_rest(2.0, 2).unwrap();
    let f = tilt_measure(&m, &MacroState::at_rest(1.0, 2).unwrap()).unwrap();
    let path = DensityPath::constant(f.clone(), vec![0.0, 0.5, 1.0]).unwrap();
    let pair = DiscretizedPair::product(path.clone(), ProductFlow::reference(&path)).unwrap();
    let i = micro_rate(&pair, &m, &ambient).unwrap();
    let h = micro_sanov_rate(&f, &m, &ambient).unwrap();
    assert_eq!(dynamical_rate(&pair).unwrap(), 0.0);
    assert!((i - h).abs() < 1e-12);
    assert!((h - 2f64.ln()).abs() < 1e-4);
}
