//! Flat INI-style experiment configuration.
//!
//! Every key lives in the unnamed top section; sections are rejected so a
//! config file stays a plain list of `key = value` lines. Unknown keys are
//! errors, which catches typos before a long run starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use kacld::kac::Scheme;
use kacld::measures::{BaseMeasure, GridSpec, MacroState};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Keys understood by at least one subcommand.
pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "measure",
    "sigma",
    "dim",
    "e",
    "u",
    "n",
    "T",
    "replicas",
    "seed",
    "scheme",
    "grid_half_width",
    "grid_points",
    "out",
    "init",
    "snapshots",
    // sanov-scan
    "event",
    "radius",
    "level",
    "samples",
    "tilt",
    // kac-ldp
    "eps",
    "tube_half_width",
    "target_energy",
    "energy_half_width",
    // rate
    "flow_time_bins",
    "flow_per_axis",
    "flow_half_width",
    "flow_directions",
    "moment_tol",
    "variational_iterations",
    // luw
    "profile",
    "luw_mode",
    "luw_n_mf",
    "luw_replicas",
    "luw_export",
];

/// Which velocities a simulation starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// Exact Gaussian microcanonical sample on the (e, u) shell.
    Micro,
    /// i.i.d. draws from the tilt m_{e,u}.
    Canonical,
    /// ±√(2e) along the first axis, alternating (N even).
    Opposed,
}

impl std::str::FromStr for InitKind {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "micro" => Ok(Self::Micro),
            "canonical" => Ok(Self::Canonical),
            "opposed" => Ok(Self::Opposed),
            _ => Err(CliError::Config(format!("unknown init {s:?} (micro, canonical, opposed)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub sigma: f64,
    pub macrostate: MacroState,
    pub n_list: Vec<usize>,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub grid: GridSpec,
    pub out: PathBuf,
    pub init: InitKind,
    /// Raw key/value pairs, for subcommand-specific keys.
    pub raw: BTreeMap<String, String>,
    /// SHA-256 of the canonical `key=value` listing (after overrides).
    pub hash: String,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub scheme: Option<Scheme>,
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|_| CliError::Config(format!("{key}: cannot parse {x:?}"))))
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, ov: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_with(&text, ov)
    }

    pub fn from_str_with(text: &str, ov: &Overrides) -> CliResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        let mut raw = BTreeMap::new();
        for (sec, props) in ini.iter() {
            if let Some(name) = sec {
                if !props.is_empty() || !name.is_empty() {
                    return Err(CliError::Config(format!("sections are not supported ([{name}])")));
                }
            }
            for (k, v) in props.iter() {
                if !KNOWN_KEYS.contains(&k) {
                    return Err(CliError::Config(format!("unknown key {k:?}")));
                }
                if raw.insert(k.to_string(), v.trim().to_string()).is_some() {
                    return Err(CliError::Config(format!("duplicate key {k:?}")));
                }
            }
        }
        if let Some(s) = ov.seed {
            raw.insert("seed".into(), s.to_string());
        }
        if let Some(o) = &ov.out {
            raw.insert("out".into(), o.display().to_string());
        }
        if let Some(s) = ov.scheme {
            raw.insert("scheme".into(), s.to_string());
        }
        Self::from_map(raw)
    }

    fn from_map(raw: BTreeMap<String, String>) -> CliResult<Self> {
        let get = |k: &str| raw.get(k).map(String::as_str);
        let num = |k: &str, default: f64| -> CliResult<f64> {
            match get(k) {
                None => Ok(default),
                Some(s) => s.parse::<f64>().map_err(|_| CliError::Config(format!("{k}: not a number: {s:?}"))),
            }
        };
        let count = |k: &str, default: usize| -> CliResult<usize> {
            match get(k) {
                None => Ok(default),
                Some(s) => s.parse::<usize>().map_err(|_| CliError::Config(format!("{k}: not a count: {s:?}"))),
            }
        };

        if let Some(m) = get("measure") {
            if m != "gaussian" {
                return Err(CliError::Config(format!("measure {m:?}: only gaussian is supported")));
            }
        }
        let sigma = num("sigma", 1.0)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CliError::Config("sigma must be positive".into()));
        }
        let dim = count("dim", 2)?;
        if !(dim == 2 || dim == 3) {
            return Err(CliError::Config("dim must be 2 or 3".into()));
        }
        let e = num("e", sigma * sigma * dim as f64 / 2.0)?;
        let u = match get("u") {
            None => vec![0.0; dim],
            Some(s) => parse_list::<f64>("u", s)?,
        };
        if u.len() != dim {
            return Err(CliError::Config(format!("u has {} components, expected {dim}", u.len())));
        }
        let macrostate = MacroState::new(e, u).map_err(|err| CliError::Config(format!("macrostate: {err}")))?;
        let n_list = parse_list::<usize>("n", get("n").ok_or_else(|| CliError::Config("missing key n".into()))?)?;
        if n_list.is_empty() {
            return Err(CliError::Config("the n list is empty".into()));
        }
        let horizon = num("T", 1.0)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(CliError::Config("T must be positive".into()));
        }
        let replicas = count("replicas", 1)?;
        if replicas == 0 {
            return Err(CliError::Config("replicas must be at least 1".into()));
        }
        let seed = match get("seed") {
            None => return Err(CliError::Config("missing key seed".into())),
            Some(s) => s.parse::<u64>().map_err(|_| CliError::Config(format!("seed must be a 64-bit unsigned integer: {s:?}")))?,
        };
        let scheme = get("scheme")
            .unwrap_or("exact")
            .parse::<Scheme>()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let grid = GridSpec::new(dim, num("grid_half_width", 7.0 * sigma)?, count("grid_points", 40)?)
            .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        let init = get("init").unwrap_or("micro").parse::<InitKind>()?;
        let out = PathBuf::from(get("out").unwrap_or("out"));
        let experiment = get("experiment").unwrap_or("experiment").to_string();

        // the output location does not change the experiment
        let mut h = Sha256::new();
        for (k, v) in raw.iter().filter(|(k, _)| k.as_str() != "out") {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();

        Ok(Self { experiment, sigma, macrostate, n_list, horizon, replicas, seed, scheme, grid, out, init, raw, hash })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn base_measure(&self) -> CliResult<BaseMeasure> {
        BaseMeasure::gaussian(self.sigma, self.grid.clone()).map_err(|e| CliError::Config(format!("measure: {e}")))
    }

    pub fn get_f64(&self, key: &str, default: f64) -> CliResult<f64> {
        match self.raw.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| CliError::Config(format!("{key}: not a number: {s:?}"))),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.raw.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| CliError::Config(format!("{key}: not a count: {s:?}"))),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.raw.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true" | "yes" | "on" | "1") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(s) => Err(CliError::Config(format!("{key}: not a boolean: {s:?}"))),
        }
    }

    pub fn get_str<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw.get(key).map(String::as_str).unwrap_or(default)
    }

    pub fn get_opt_f64(&self, key: &str) -> CliResult<Option<f64>> {
        self.raw.get(key).map(|_| self.get_f64(key, 0.0)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "experiment = t\nn = 2, 10\nseed = 7\nT = 0.5\n";

    #[test]
    fn parses_defaults_and_lists() {
        let c = ExperimentConfig::from_str_with(BASIC, &Overrides::default()).unwrap();
        assert_eq!(c.n_list, vec![2, 10]);
        assert_eq!(c.seed, 7);
        assert_eq!(c.horizon, 0.5);
        assert_eq!(c.macrostate.e(), 1.0);
        assert_eq!(c.scheme, Scheme::Exact);
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn overrides_change_the_hash() {
        let a = ExperimentConfig::from_str_with(BASIC, &Overrides::default()).unwrap();
        let b = ExperimentConfig::from_str_with(BASIC, &Overrides { seed: Some(8), ..Default::default() }).unwrap();
        assert_eq!(b.seed, 8);
        assert_ne!(a.hash, b.hash);
        let c = ExperimentConfig::from_str_with(BASIC, &Overrides::default()).unwrap();
        assert_eq!(a.hash, c.hash);
        let o = Overrides { out: Some("elsewhere".into()), ..Default::default() };
        assert_eq!(a.hash, ExperimentConfig::from_str_with(BASIC, &o).unwrap().hash);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "n = \nseed = 1\n",
            "n = 2\nseed = -1\n",
            "n = 2\n",
            "n = 2\nseed = 1\nbogus = 3\n",
            "n = 2\nseed = 1\n[section]\nx = 1\n",
            "n = 2\nseed = 1\nscheme = fast\n",
            "n = 2\nseed = 1\nu = 0\n",
            "n = 2\nseed = 1\nsigma = 0\n",
            "n = 2, x\nseed = 1\n",
        ] {
            let r = ExperimentConfig::from_str_with(bad, &Overrides::default());
            assert!(matches!(r, Err(CliError::Config(_))), "{bad:?}");
        }
    }
}
