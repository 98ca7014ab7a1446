//! Experiment configuration documents.
//!
//! Parsing is strict: unknown keys and keys whose unit suffix differs from
//! the expected one are rejected, and every problem in the document is
//! reported, not only the first.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use topolattice::lattice::LatticeSpec;
use topolattice::magnon::MagnonSpec;
use topolattice::scattering::PortConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Spectrum,
    Winding,
    EpScan,
    ThresholdScaling,
    Map,
    Absorptivity,
    Fit,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::Spectrum,
        TaskKind::Winding,
        TaskKind::EpScan,
        TaskKind::ThresholdScaling,
        TaskKind::Map,
        TaskKind::Absorptivity,
        TaskKind::Fit,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Spectrum => "spectrum",
            TaskKind::Winding => "winding",
            TaskKind::EpScan => "ep-scan",
            TaskKind::ThresholdScaling => "threshold-scaling",
            TaskKind::Map => "map",
            TaskKind::Absorptivity => "absorptivity",
            TaskKind::Fit => "fit",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A one-dimensional sampling grid: either `points` evenly spaced values
/// from `start` to `stop` inclusive, or an explicit ascending list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Range { start: f64, stop: f64, points: usize },
    Values(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Range { start, stop, points: 1 } if start == stop => vec![*start],
            Grid::Range { start, stop, points } => {
                let n = *points;
                (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect()
            }
            Grid::Values(v) => v.clone(),
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            Grid::Range { start, stop, points } => {
                if !(start.is_finite() && stop.is_finite()) {
                    Err("start and stop must be finite".into())
                } else if *points == 0 {
                    Err("points must be at least 1".into())
                } else if *points == 1 && start != stop {
                    Err("a single-point range needs start == stop".into())
                } else if *points > 1 && stop <= start {
                    Err(format!("stop ({stop}) must exceed start ({start})"))
                } else {
                    Ok(())
                }
            }
            Grid::Values(v) => {
                if v.is_empty() {
                    Err("value list is empty".into())
                } else if v.iter().any(|x| !x.is_finite()) {
                    Err("values must be finite".into())
                } else if v.windows(2).any(|w| w[1] <= w[0]) {
                    Err("values must be strictly ascending".into())
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub currents_a: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omegas_ghz: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_gammas_mhz: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    /// Brillouin-zone samples for winding numbers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_points: Option<usize>,
}

/// Options of the `fit` task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_m_ghz: Option<f64>,
    /// Starting chain-mode loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_m_mhz: Option<f64>,
    /// Half width of the frequency window around `omega0` searched for the
    /// two branches of a simulated map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_mhz: Option<f64>,
    /// Measured branches instead of a simulated map: CSV with header
    /// `current_a,branch,omega_ghz`, branch `a` or `b`. Relative paths are
    /// resolved against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub lattice: LatticeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnon: Option<MagnonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ports: Option<PortConfig>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub grids: Grids,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    /// Prefix prepended to every artifact file name.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub output: String,
}

fn is_default<T: Default + PartialEq>(x: &T) -> bool {
    *x == T::default()
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    /// Dotted location inside the document, empty for the root.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "invalid config ({} problems): {}", lines.len(), lines.join("; "))
    }
}

const TOP_KEYS: &[&str] = &["task", "lattice", "magnon", "ports", "grids", "fit", "output"];
const LATTICE_KEYS: &[&str] =
    &["n_cells", "omega0_ghz", "gamma_a_mhz", "gamma_b_mhz", "v_mhz", "w_mhz", "hopping_imag_mhz"];
const MAGNON_KEYS: &[&str] = &["site", "g0_mhz", "gamma_n_mhz", "c0_ghz", "c1_ghz_per_a"];
const PORT_KEYS: &[&str] = &["port1_site", "port2_site", "kappa1_mhz", "kappa2_mhz"];
const GRID_KEYS: &[&str] = &["currents_a", "omegas_ghz", "delta_gammas_mhz", "n_values", "k_points"];
const RANGE_KEYS: &[&str] = &["start", "stop", "points"];
const FIT_KEYS: &[&str] = &["g_mhz", "omega_m_ghz", "loss_m_mhz", "window_mhz", "branches_csv"];

const UNIT_SUFFIXES: &[&str] =
    &["_ghz_per_a", "_mhz_per_a", "_ghz", "_mhz", "_khz", "_hz", "_ma", "_a"];

fn unit_stem(key: &str) -> &str {
    UNIT_SUFFIXES.iter().find_map(|s| key.strip_suffix(s)).unwrap_or(key)
}

struct Collector(Vec<ConfigIssue>);

impl Collector {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(ConfigIssue { path: path.to_owned(), message: message.into() });
    }

    fn keys(&mut self, path: &str, obj: &Map<String, Value>, allowed: &[&str]) -> bool {
        let mut ok = true;
        for key in obj.keys() {
            if allowed.contains(&key.as_str()) {
                continue;
            }
            ok = false;
            let at = join(path, key);
            match allowed.iter().find(|a| unit_stem(a) == unit_stem(key)) {
                Some(expected) => self.push(&at, format!("unit suffix mismatch, expected `{expected}`")),
                None => self.push(&at, "unknown key"),
            }
        }
        ok
    }

    fn typed<T: DeserializeOwned>(&mut self, path: &str, value: &Value) -> Option<T> {
        match serde_json::from_value(value.clone()) {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }

    fn section<T: DeserializeOwned>(&mut self, root: &Map<String, Value>, key: &str, allowed: &[&str]) -> Option<T> {
        let value = root.get(key)?;
        let Some(obj) = value.as_object() else {
            self.push(key, "expected an object");
            return None;
        };
        if self.keys(key, obj, allowed) {
            self.typed(key, value)
        } else {
            None
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_owned()
    } else {
        format!("{path}.{key}")
    }
}

/// Parses and validates a config document, collecting every problem.
pub fn parse_config(document: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut c = Collector(Vec::new());
    let root: Value = serde_json::from_str(document)
        .map_err(|e| ConfigErrors(vec![ConfigIssue { path: String::new(), message: format!("malformed JSON: {e}") }]))?;
    let Some(obj) = root.as_object() else {
        return Err(ConfigErrors(vec![ConfigIssue { path: String::new(), message: "expected a JSON object".into() }]));
    };
    c.keys("", obj, TOP_KEYS);

    let task: Option<TaskKind> = match obj.get("task") {
        Some(v) => c.typed("task", v),
        None => {
            c.push("task", "missing required key");
            None
        }
    };
    let lattice: Option<LatticeSpec> = c.section(obj, "lattice", LATTICE_KEYS);
    if !obj.contains_key("lattice") {
        c.push("lattice", "missing required section");
    }
    let magnon: Option<MagnonSpec> = c.section(obj, "magnon", MAGNON_KEYS);
    let ports: Option<PortConfig> = c.section(obj, "ports", PORT_KEYS);
    let fit: Option<FitSection> = c.section(obj, "fit", FIT_KEYS);
    let grids = parse_grids(&mut c, obj.get("grids"));
    let output = match obj.get("output") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            c.push("output", "expected a string");
            String::new()
        }
        None => String::new(),
    };

    if let Some(l) = &lattice {
        if let Err(e) = l.validate() {
            c.push("lattice", e.to_string());
        }
        let dim = l.n_sites();
        if let Some(m) = &magnon {
            if let Err(e) = m.validate(dim) {
                c.push("magnon", e.to_string());
            }
        }
        if let Some(p) = &ports {
            if let Err(e) = p.validate(dim) {
                c.push("ports", e.to_string());
            }
        }
    }
    if let Some(f) = &fit {
        for (key, value) in [("g_mhz", f.g_mhz), ("loss_m_mhz", f.loss_m_mhz), ("window_mhz", f.window_mhz)] {
            if value.is_some_and(|x| !(x.is_finite() && x > 0.0)) {
                c.push(&join("fit", key), "must be finite and positive");
            }
        }
    }
    if let Some(task) = task {
        let config_view = Requirements {
            magnon: obj.contains_key("magnon"),
            ports: obj.contains_key("ports"),
            grids: grids.clone().unwrap_or_default(),
            branches_csv: fit.as_ref().is_some_and(|f| f.branches_csv.is_some()),
        };
        for (path, message) in config_view.missing(task) {
            c.push(&path, message);
        }
        if task == TaskKind::Map {
            if let Some(m) = &magnon {
                if m.c1_ghz_per_a == 0.0 {
                    c.push("magnon.c1_ghz_per_a", "must be nonzero when sweeping current");
                }
            }
        }
    }

    if !c.0.is_empty() {
        return Err(ConfigErrors(c.0));
    }
    Ok(ExperimentConfig {
        task: task.expect("checked"),
        lattice: lattice.expect("checked"),
        magnon,
        ports,
        grids: grids.unwrap_or_default(),
        fit,
        output,
    })
}

fn parse_grids(c: &mut Collector, value: Option<&Value>) -> Option<Grids> {
    let value = value?;
    let Some(obj) = value.as_object() else {
        c.push("grids", "expected an object");
        return None;
    };
    let before = c.0.len();
    c.keys("grids", obj, GRID_KEYS);
    for key in ["currents_a", "omegas_ghz", "delta_gammas_mhz"] {
        let Some(g) = obj.get(key) else { continue };
        let path = join("grids", key);
        if let Some(range) = g.as_object() {
            c.keys(&path, range, RANGE_KEYS);
        }
        if let Some(grid) = c.typed::<Grid>(&path, g) {
            if let Err(e) = grid.check() {
                c.push(&path, e);
            }
        }
    }
    if let Some(v) = obj.get("n_values") {
        if let Some(ns) = c.typed::<Vec<usize>>("grids.n_values", v) {
            if ns.is_empty() {
                c.push("grids.n_values", "list is empty");
            } else if ns.iter().any(|&n| n < 2) {
                c.push("grids.n_values", "every N must be at least 2");
            } else if ns.windows(2).any(|w| w[1] <= w[0]) {
                c.push("grids.n_values", "values must be strictly ascending");
            }
        }
    }
    if let Some(v) = obj.get("k_points") {
        if let Some(k) = c.typed::<usize>("grids.k_points", v) {
            if k < topolattice::topology::MIN_K_POINTS {
                c.push("grids.k_points", format!("must be at least {}", topolattice::topology::MIN_K_POINTS));
            }
        }
    }
    if c.0.len() > before {
        return None;
    }
    c.typed("grids", value)
}

struct Requirements {
    magnon: bool,
    ports: bool,
    grids: Grids,
    branches_csv: bool,
}

impl Requirements {
    fn missing(&self, task: TaskKind) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut need = |present: bool, path: &str| {
            if !present {
                out.push((path.to_owned(), format!("required by task `{task}`")));
            }
        };
        let g = &self.grids;
        match task {
            TaskKind::Spectrum | TaskKind::Winding => {}
            TaskKind::EpScan => need(g.delta_gammas_mhz.is_some(), "grids.delta_gammas_mhz"),
            TaskKind::ThresholdScaling => need(g.n_values.is_some(), "grids.n_values"),
            TaskKind::Map => {
                need(self.magnon, "magnon");
                need(self.ports, "ports");
                need(g.currents_a.is_some(), "grids.currents_a");
                need(g.omegas_ghz.is_some(), "grids.omegas_ghz");
            }
            TaskKind::Absorptivity => {
                need(self.ports, "ports");
                need(g.omegas_ghz.is_some(), "grids.omegas_ghz");
            }
            TaskKind::Fit => {
                need(self.magnon, "magnon");
                if !self.branches_csv {
                    need(self.ports, "ports");
                    need(g.currents_a.is_some(), "grids.currents_a");
                    need(g.omegas_ghz.is_some(), "grids.omegas_ghz");
                }
            }
        }
        out
    }
}
