//! Collision events, trajectories and the JSON-lines event log.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::collision::collide_in_place;
use super::sphere::Vector;
use crate::error::{invalid, Error, Result};
use crate::microcanonical::Configuration;
use crate::vecops::zeta0;

/// One binary collision; `i < j` and incoming velocities are left limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    #[serde(rename = "vin")]
    pub v_in: Vector,
    #[serde(rename = "vsin")]
    pub vstar_in: Vector,
    #[serde(rename = "vout")]
    pub v_out: Vector,
    #[serde(rename = "vsout")]
    pub vstar_out: Vector,
    pub omega: Vector,
}

impl CollisionEvent {
    /// Relative violation of energy and momentum conservation.
    pub fn conservation_error(&self) -> (f64, f64) {
        let e_in = zeta0(&self.v_in) + zeta0(&self.vstar_in);
        let e_out = zeta0(&self.v_out) + zeta0(&self.vstar_out);
        let de = (e_in - e_out).abs() / e_in.max(f64::MIN_POSITIVE);
        let scale: f64 = self.v_in.iter().chain(&self.vstar_in).map(|x| x.abs()).fold(0.0, f64::max);
        let dp = (0..self.v_in.len())
            .map(|k| (self.v_in[k] + self.vstar_in[k] - self.v_out[k] - self.vstar_out[k]).abs())
            .fold(0.0, f64::max)
            / scale.max(f64::MIN_POSITIVE);
        (de, dp)
    }
}

/// Initial configuration, the time-ordered events in (0, T], and T.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: Configuration,
    pub events: Vec<CollisionEvent>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.initial.n()
    }
    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    fn apply(c: &mut Configuration, ev: &CollisionEvent) {
        c.particle_mut(ev.i).copy_from_slice(&ev.v_out);
        c.particle_mut(ev.j).copy_from_slice(&ev.vstar_out);
    }

    /// Configuration at time t (right-continuous: events at t are applied).
    pub fn configuration_at(&self, t: f64) -> Configuration {
        let mut c = self.initial.clone();
        for ev in self.events.iter().take_while(|e| e.t <= t) {
            Self::apply(&mut c, ev);
        }
        c
    }

    pub fn final_configuration(&self) -> Configuration {
        self.configuration_at(f64::INFINITY)
    }

    /// Configurations at the given nondecreasing times.
    pub fn snapshots(&self, times: &[f64]) -> Vec<Configuration> {
        let mut c = self.initial.clone();
        let mut k = 0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            while k < self.events.len() && self.events[k].t <= t {
                Self::apply(&mut c, &self.events[k]);
                k += 1;
            }
            out.push(c.clone());
        }
        out
    }

    /// Replays the log and checks that every event starts from the current
    /// state and that its outputs are the collision map of its inputs,
    /// bit for bit.
    pub fn verify(&self) -> Result<()> {
        let mut c = self.initial.clone();
        let mut last = 0.0;
        for (k, ev) in self.events.iter().enumerate() {
            if !(ev.t > last && ev.t <= self.horizon) || ev.i >= ev.j || ev.j >= c.n() {
                return invalid(format!("event {k} has bad time or indices"));
            }
            last = ev.t;
            if c.particle(ev.i) != ev.v_in.as_slice() || c.particle(ev.j) != ev.vstar_in.as_slice() {
                return invalid(format!("event {k} does not start from the current state"));
            }
            let mut a = ev.v_in.clone();
            let mut b = ev.vstar_in.clone();
            collide_in_place(&mut a, &mut b, &ev.omega);
            if a != ev.v_out || b != ev.vstar_out {
                return invalid(format!("event {k} outputs differ from the collision map"));
            }
            Self::apply(&mut c, ev);
        }
        Ok(())
    }

    /// Largest per-event relative conservation errors (energy, momentum).
    pub fn max_event_error(&self) -> (f64, f64) {
        self.events.iter().map(|e| e.conservation_error()).fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    }

    /// Relative drift of total energy and momentum between start and end.
    pub fn drift(&self) -> (f64, f64) {
        let f = self.final_configuration();
        let e0 = self.initial.total_energy();
        let de = (f.total_energy() - e0).abs() / e0.max(f64::MIN_POSITIVE);
        let p0 = self.initial.total_momentum();
        let p1 = f.total_momentum();
        let scale = (2.0 * e0 * self.n() as f64).sqrt().max(f64::MIN_POSITIVE);
        let dp = p0.iter().zip(&p1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        (de, dp)
    }
}

/// Header line of an event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLogHeader {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub scheme: String,
    pub kernel: String,
}

pub fn write_event_log(w: &mut impl Write, header: &EventLogHeader, events: &[CollisionEvent]) -> Result<()> {
    serde_json::to_writer(&mut *w, header)?;
    w.write_all(b"\n")?;
    for ev in events {
        serde_json::to_writer(&mut *w, ev)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_event_log(r: impl BufRead) -> Result<(EventLogHeader, Vec<CollisionEvent>)> {
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| Error::Parse("empty event log".into()))??;
    let header: EventLogHeader = serde_json::from_str(&head)?;
    let mut events = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(&line)?);
        }
    }
    Ok((header, events))
}
