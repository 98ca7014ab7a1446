//! Experiment tasks, looked up by name in a [`TaskRegistry`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use topolattice::fitting::{find_peaks, fit_level_repulsion, Branches, FitInit};
use topolattice::format::sig9;
use topolattice::lattice::build_chain_hamiltonian;
use topolattice::magnon::anticrossing_sweep;
use topolattice::scattering::{s_spectrum, transmission_map};
use topolattice::spectral::Spectrum;
use topolattice::topology::{
    beta_sweep, beta_sweep_csv, ep_reports_csv, ep_scan, threshold_vs_length, winding_generalized, winding_hermitian,
};

use crate::config::{ExperimentConfig, Grid, TaskKind};

const DEFAULT_K_POINTS: usize = 256;

/// One output file, produced in memory before anything is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    /// File name, appended to the config's output prefix.
    pub name: String,
    pub contents: String,
    pub rows: usize,
    pub summary: String,
}

impl Artifact {
    fn csv(name: &str, contents: String, summary: String) -> Self {
        let rows = contents.lines().count().saturating_sub(1);
        Artifact { name: name.to_owned(), contents, rows, summary }
    }

    fn json(name: &str, contents: String, summary: String) -> Self {
        Artifact { name: name.to_owned(), contents, rows: 1, summary }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Engine(#[from] topolattice::Error),
    #[error("{0}")]
    Input(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("bad branch file {path}: {source}")]
    BranchFile { path: PathBuf, source: csv::Error },
}

/// Where relative paths inside a config are resolved.
pub struct TaskContext<'a> {
    pub config_dir: &'a Path,
}

pub trait Task: Send + Sync {
    fn kind(&self) -> TaskKind;
    fn description(&self) -> &'static str;
    fn run(&self, config: &ExperimentConfig, ctx: &TaskContext) -> Result<Vec<Artifact>, TaskError>;
}

pub struct TaskRegistry {
    tasks: Vec<Box<dyn Task>>,
}

impl TaskRegistry {
    pub fn empty() -> Self {
        TaskRegistry { tasks: Vec::new() }
    }

    /// Adds `task`, replacing any task of the same kind.
    pub fn register(&mut self, task: Box<dyn Task>) {
        self.tasks.retain(|t| t.kind() != task.kind());
        self.tasks.push(task);
    }

    pub fn get(&self, kind: TaskKind) -> Option<&dyn Task> {
        self.tasks.iter().find(|t| t.kind() == kind).map(|t| t.as_ref())
    }

    pub fn kinds(&self) -> Vec<TaskKind> {
        let mut kinds: Vec<TaskKind> = self.tasks.iter().map(|t| t.kind()).collect();
        kinds.sort();
        kinds
    }
}

impl Default for TaskRegistry {
    fn default() -> Self {
        let mut r = TaskRegistry::empty();
        r.register(Box::new(SpectrumTask));
        r.register(Box::new(WindingTask));
        r.register(Box::new(EpScanTask));
        r.register(Box::new(ThresholdScalingTask));
        r.register(Box::new(MapTask));
        r.register(Box::new(AbsorptivityTask));
        r.register(Box::new(FitTask));
        r
    }
}

fn grid(g: &Option<Grid>, name: &str) -> Result<Vec<f64>, TaskError> {
    g.as_ref().map(Grid::values).ok_or_else(|| TaskError::Input(format!("grids.{name} is required")))
}

fn section<T: Copy>(s: &Option<T>, name: &str) -> Result<T, TaskError> {
    s.ok_or_else(|| TaskError::Input(format!("section `{name}` is required")))
}

struct SpectrumTask;

impl Task for SpectrumTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Spectrum
    }

    fn description(&self) -> &'static str {
        "eigenvalues, mode classes and PDOS of the chain"
    }

    fn run(&self, config: &ExperimentConfig, _: &TaskContext) -> Result<Vec<Artifact>, TaskError> {
        let spectrum = Spectrum::of_lattice(&config.lattice)?;
        let summary = format!("{} modes, {} edge modes", spectrum.len(), spectrum.edge_modes().len());
        Ok(vec![
            Artifact::csv("spectrum.csv", spectrum.to_csv(), summary.clone()),
            Artifact::json("spectrum.json", spectrum.to_json()?, summary),
        ])
    }
}

#[derive(Serialize, Deserialize)]
struct WindingReport {
    k_points: usize,
    w_h: i64,
    /// Absent outside the generalized winding's domain.
    w_nh: Option<i64>,
}

struct WindingTask;

impl Task for WindingTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Winding
    }

    fn description(&self) -> &'static str {
        "Hermitian and generalized winding numbers"
    }

    fn run(&self, config: &ExperimentConfig, _: &TaskContext) -> Result<Vec<Artifact>, TaskError> {
        let k = config.grids.k_points.unwrap_or(DEFAULT_K_POINTS);
        let w_h = winding_hermitian(&config.lattice, k)?;
        let w_nh = match winding_generalized(&config.lattice, k) {
            Ok(w) => Some(w),
            Err(topolattice::Error::OutOfDomain { half_contrast, gap }) => {
                log::warn!("generalized winding undefined: δγ/2 = {half_contrast} MHz ≥ |w - v| = {gap} MHz");
                None
            }
            Err(e) => return Err(e.into()),
        };
        let report = WindingReport { k_points: k, w_h, w_nh };
        let summary = match w_nh {
            Some(w) => format!("W={w} (hermitian {w_h}, generalized {w})"),
            None => format!("W_h={w_h}, generalized winding out of domain"),
        };
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        Ok(vec![Artifact::json("winding.json", json, summary)])
    }
}

struct EpScanTask;

impl Task for EpScanTask {
    fn kind(&self) -> TaskKind {
        TaskKind::EpScan
    }

    fn description(&self) -> &'static str {
        "exceptional points and normalized eigenvalues over a loss-contrast sweep"
    }

    fn run(&self, config: &ExperimentConfig, _: &TaskContext) -> Result<Vec<Artifact>, TaskError> {
        let dg = grid(&config.grids.delta_gammas_mhz, "delta_gammas_mhz")?;
        let reports = ep_scan(&config.lattice, &dg)?;
        let points = beta_sweep(&config.lattice, &dg)?;
        let summary = match reports.first() {
            Some(r) => format!(
                "{} EPs, first {} at δγ_c = {} MHz (normalized {})",
                reports.len(),
                r.kind.as_str(),
                sig9(r.delta_gamma_c),
                sig9(r.normalized)
            ),
            None => "no EP inside the grid".to_owned(),
        };
        Ok(vec![
            Artifact::csv("ep_scan.csv", ep_reports_csv(&reports), summary),
            Artifact::csv("beta.csv", beta_sweep_csv(&points), format!("{} contrast points", dg.len())),
        ])
    }
}

struct ThresholdScalingTask;

impl Task for ThresholdScalingTask {
    fn kind(&self) -> TaskKind {
        TaskKind::ThresholdScaling
    }

    fn description(&self) -> &'static str {
        "edge symmetry-breaking threshold against chain length"
    }

    fn run(&self, config: &ExperimentConfig, _: &TaskContext) -> Result<Vec<Artifact>, TaskError> {
        let ns = config.grids.n_values.clone().ok_or_else(|| TaskError::Input("grids.n_values is required".into()))?;
        let table = threshold_vs_length(&config.lattice, &ns)?;
        let summary = match &table.fit {
            Some(f) => format!("R²={}, slope {} per cell", sig9(f.r_squared), sig9(f.slope)),
            None => format!("δγ_c = {} MHz", sig9(table.rows[0].1)),
        };
        Ok(vec![Artifact::csv("thresholds.csv", table.to_csv(), summary)])
    }
}

struct MapTask;

impl Task for MapTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Map
    }

    fn description(&self) -> &'static str {
        "transmission map and hybrid branches over a current sweep"
    }

    fn run(&self, config: &ExperimentConfig, _: &TaskContext) -> Result<Vec<Artifact>, TaskError> {
        let magnon = section(&config.magnon, "magnon")?;
        let ports = section(&config.ports, "ports")?;
        let currents = grid(&config.grids.currents_a, "currents_a")?;
        let omegas = grid(&config.grids.omegas_ghz, "omegas_ghz")?;
        let map = transmission_map(&config.lattice, &magnon, &ports, &currents, &omegas)?;
        let sweep = anticrossing_sweep(&config.lattice, &magnon, &currents)?;
        let peak = map.s21_sq.iter().copied().fold(0.0, f64::max);
        Ok(vec![
            Artifact::csv(
                "map.csv",
                map.to_csv(),
                format!("{} currents × {} frequencies, max |S21|² {}", currents.len(), omegas.len(), sig9(peak)),
            ),
            Artifact::json("map.json", map.header.to_json()?, "grid header".to_owned()),
            Artifact::csv(
                "branches.csv",
                sweep.to_csv(),
                format!("{} branches, {} ambiguous points", sweep.n_branches(), sweep.ambiguities.len()),
            ),
        ])
    }
}

struct AbsorptivityTask;

impl Task for AbsorptivityTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Absorptivity
    }

    fn description(&self) -> &'static str {
        "transmission and port absorptivities of the bare chain"
    }

    fn run(&self, config: &ExperimentConfig, _: &TaskContext) -> Result<Vec<Artifact>, TaskError> {
        let ports = section(&config.ports, "ports")?;
        let omegas = grid(&config.grids.omegas_ghz, "omegas_ghz")?;
        let h = build_chain_hamiltonian(&config.lattice)?;
        let params = s_spectrum(&h, &ports, &omegas)?;
        let mut csv = String::from("omega_ghz,s21_sq,a1,a2\n");
        let (mut a1, mut a2) = (Vec::with_capacity(omegas.len()), Vec::with_capacity(omegas.len()));
        for (w, s) in omegas.iter().zip(&params) {
            let (x, y) = (s.absorptivity(1)?, s.absorptivity(2)?);
            csv.push_str(&format!("{},{},{},{}\n", sig9(*w), sig9(s.s21.norm_sqr()), sig9(x), sig9(y)));
            a1.push(x);
            a2.push(y);
        }
        let asym = a1.iter().zip(&a2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let centre = config.lattice.omega0_ghz;
        let fwhm = |a: &[f64]| -> String {
            find_peaks(&omegas, a)
                .ok()
                .and_then(|peaks| {
                    peaks.into_iter().min_by(|x, y| (x.center - centre).abs().total_cmp(&(y.center - centre).abs()))
                })
                .map_or("n/a".to_owned(), |p| format!("{} MHz", sig9(1e3 * p.fwhm)))
        };
        let summary = format!("max |A1 - A2| {}, centre FWHM A1 {} / A2 {}", sig9(asym), fwhm(&a1), fwhm(&a2));
        Ok(vec![Artifact::csv("absorptivity.csv", csv, summary)])
    }
}

#[derive(Deserialize)]
struct BranchRow {
    current_a: f64,
    branch: String,
    omega_ghz: f64,
}

fn read_branches(path: &Path) -> Result<Branches, TaskError> {
    let bad = |source| TaskError::BranchFile { path: path.to_owned(), source };
    let mut reader = csv::Reader::from_path(path).map_err(bad)?;
    let mut branches = Branches::default();
    for row in reader.deserialize::<BranchRow>() {
        let row = row.map_err(bad)?;
        match row.branch.as_str() {
            "a" => branches.a.push((row.current_a, row.omega_ghz)),
            "b" => branches.b.push((row.current_a, row.omega_ghz)),
            other => {
                return Err(TaskError::Input(format!("{}: branch label `{other}` is not `a` or `b`", path.display())))
            }
        }
    }
    Ok(branches)
}

fn branches_csv(b: &Branches) -> String {
    let mut out = String::from("current_a,branch,omega_ghz\n");
    for (label, pts) in [("a", &b.a), ("b", &b.b)] {
        for (i, w) in pts {
            out.push_str(&format!("{},{label},{}\n", sig9(*i), sig9(*w)));
        }
    }
    out
}

struct FitTask;

impl FitTask {
    /// Upper and lower `|S21|²` peaks inside `window_mhz` of the chain
    /// centre at every current where two are resolved.
    fn simulated_branches(config: &ExperimentConfig, window_mhz: Option<f64>) -> Result<Branches, TaskError> {
        let magnon = section(&config.magnon, "magnon")?;
        let ports = section(&config.ports, "ports")?;
        let currents = grid(&config.grids.currents_a, "currents_a")?;
        let omegas = grid(&config.grids.omegas_ghz, "omegas_ghz")?;
        let window = match window_mhz {
            Some(w) => w,
            None => {
                // Three quarters of the way to the first mode past the
                // central pair.
                let spectrum = Spectrum::of_lattice(&config.lattice)?;
                let mut offsets: Vec<f64> = spectrum.values().iter().map(|z| z.re.abs()).collect();
                offsets.sort_by(f64::total_cmp);
                0.75 * offsets.get(2).copied().unwrap_or(config.lattice.hopping_sum())
            }
        };
        let map = transmission_map(&config.lattice, &magnon, &ports, &currents, &omegas)?;
        let mut branches = Branches::default();
        for (i, &current) in currents.iter().enumerate() {
            let Ok(peaks) = find_peaks(&omegas, map.s21_cut(i)) else { continue };
            let inside: Vec<f64> = peaks
                .iter()
                .map(|p| p.center)
                .filter(|w| 1e3 * (w - config.lattice.omega0_ghz).abs() < window)
                .collect();
            if inside.len() >= 2 {
                branches.a.push((current, inside.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
                branches.b.push((current, inside.iter().copied().fold(f64::INFINITY, f64::min)));
            }
        }
        Ok(branches)
    }
}

impl Task for FitTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Fit
    }

    fn description(&self) -> &'static str {
        "level-repulsion fit of two anticrossing branches"
    }

    fn run(&self, config: &ExperimentConfig, ctx: &TaskContext) -> Result<Vec<Artifact>, TaskError> {
        let magnon = section(&config.magnon, "magnon")?;
        let options = config.fit.clone().unwrap_or_default();
        let branches = match &options.branches_csv {
            Some(p) => read_branches(&ctx.config_dir.join(p))?,
            None => Self::simulated_branches(config, options.window_mhz)?,
        };
        let init = FitInit {
            g_mhz: options.g_mhz,
            omega_m_ghz: options.omega_m_ghz,
            loss_m_mhz: options.loss_m_mhz.unwrap_or(config.lattice.gamma_bar()),
            gamma_n_mhz: magnon.gamma_n_mhz,
        };
        let fit = fit_level_repulsion(&branches, magnon.c0_ghz, magnon.c1_ghz_per_a, &init)?;
        let summary = format!(
            "g = {} MHz, ω_m = {} GHz, residual {} MHz{}",
            sig9(fit.g_mhz),
            sig9(fit.omega_m_ghz),
            sig9(fit.residual),
            if fit.converged { "" } else { " (not converged)" }
        );
        let points = format!("{} + {} branch points", branches.a.len(), branches.b.len());
        Ok(vec![
            Artifact::json("fit.json", fit.to_json()?, summary),
            Artifact::csv("fit_branches.csv", branches_csv(&branches), points),
        ])
    }
}
