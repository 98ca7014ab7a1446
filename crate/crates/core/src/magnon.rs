//! A single magnon mode coupled to one chain site.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{csv_line, sig9};
use crate::lattice::{build_chain_hamiltonian, ComplexMatrix, LatticeSpec};
use crate::spectral::{eigendecompose, Spectrum};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Two candidate branches whose overlaps with a tracked branch differ by
/// less than this are reported as ambiguous.
pub const TRACKING_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnonSpec {
    /// 1-based chain site the sphere couples to.
    pub site: usize,
    /// Bare site coupling, MHz.
    pub g0_mhz: f64,
    /// Total magnon loss, MHz.
    pub gamma_n_mhz: f64,
    /// Magnon frequency at zero current, GHz.
    pub c0_ghz: f64,
    /// Tuning slope, GHz per ampere.
    pub c1_ghz_per_a: f64,
}

impl MagnonSpec {
    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if self.site == 0 || self.site > n_sites {
            return Err(Error::SiteOutOfRange { site: self.site, n_sites });
        }
        let mut problems = Vec::new();
        for (name, value) in [("g0_mhz", self.g0_mhz), ("gamma_n_mhz", self.gamma_n_mhz)] {
            if !(value.is_finite() && value >= 0.0) {
                problems.push(format!("{name} must be finite and non-negative, got {value}"));
            }
        }
        for (name, value) in [("c0_ghz", self.c0_ghz), ("c1_ghz_per_a", self.c1_ghz_per_a)] {
            if !value.is_finite() {
                problems.push(format!("{name} must be finite"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    /// Magnon frequency in GHz at electromagnet current `current_a`.
    pub fn frequency_ghz(&self, current_a: f64) -> f64 {
        self.c0_ghz + self.c1_ghz_per_a * current_a
    }

    /// Current that tunes the magnon to `omega_ghz`.
    pub fn current_for(&self, omega_ghz: f64) -> Result<f64> {
        if self.c1_ghz_per_a == 0.0 {
            return Err(Error::InvalidInput("c1_ghz_per_a is zero; the magnon cannot be tuned".into()));
        }
        Ok((omega_ghz - self.c0_ghz) / self.c1_ghz_per_a)
    }
}

/// Microscopic inputs of the coupling-strength scaling law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalCouplingParams {
    /// Mode overlap factor, `0 < eta <= 1`.
    pub eta: f64,
    /// Gyromagnetic ratio.
    pub chi: f64,
    pub n_spins: f64,
    /// Spin quantum number (5/2 for Fe³⁺ in YIG).
    pub spin_s: f64,
    /// Resonance frequency.
    pub omega_r: f64,
    pub mode_volume: f64,
}

/// `g0 = calibration · η·χ·sqrt(n·S·ħ·ω_r / 2V)`.
///
/// The proportionality constant is not known a priori and is supplied as
/// `calibration`; fix it once from a measured coupling and reuse it.
pub fn g_from_physical(params: &PhysicalCouplingParams, calibration: f64) -> Result<f64> {
    let p = params;
    let positive = [
        ("chi", p.chi),
        ("n_spins", p.n_spins),
        ("spin_s", p.spin_s),
        ("omega_r", p.omega_r),
        ("mode_volume", p.mode_volume),
        ("calibration", calibration),
    ];
    let mut problems: Vec<String> = positive
        .iter()
        .filter(|(_, v)| !(v.is_finite() && *v > 0.0))
        .map(|(name, v)| format!("{name} must be positive, got {v}"))
        .collect();
    if !(p.eta > 0.0 && p.eta <= 1.0) {
        problems.push(format!("eta must lie in (0, 1], got {}", p.eta));
    }
    if !problems.is_empty() {
        return Err(Error::InvalidInput(problems.join("; ")));
    }
    Ok(calibration * p.eta * p.chi * (p.n_spins * p.spin_s * HBAR * p.omega_r / (2.0 * p.mode_volume)).sqrt())
}

/// Appends the magnon as the last row/column of `h`.
///
/// The magnon diagonal is `ω_n - iγ_n` (as an offset from the reference of
/// `h`) and it couples with `g0` to `magnon.site` only.
pub fn build_coupled_hamiltonian(h: &ComplexMatrix, magnon: &MagnonSpec, omega_n_ghz: f64) -> Result<ComplexMatrix> {
    let n = h.dim();
    magnon.validate(n)?;
    let mut out = ComplexMatrix::zeros(n + 1, h.reference_ghz());
    out.matrix_mut().view_mut((0, 0), (n, n)).copy_from(h.matrix());
    out[(n, n)] = Complex64::new(1e3 * (omega_n_ghz - h.reference_ghz()), -magnon.gamma_n_mhz);
    let s = magnon.site - 1;
    out[(n, s)] = Complex64::new(magnon.g0_mhz, 0.0);
    out[(s, n)] = Complex64::new(magnon.g0_mhz, 0.0);
    Ok(out)
}

/// Hybrid eigenvalues of two coupled modes,
/// `½[ω̃_n + ω̃_m ± sqrt((ω̃_n - ω̃_m)² + 4g²)]`, principal root, `+` first.
pub fn two_mode_hybrid(omega_n: Complex64, omega_m: Complex64, g: f64) -> (Complex64, Complex64) {
    let mean = 0.5 * (omega_n + omega_m);
    let d = omega_n - omega_m;
    let root = 0.5 * (d * d + 4.0 * g * g).sqrt();
    (mean + root, mean - root)
}

/// `g_{m,s} = g0·|φ_{m,s}|` for 1-based mode `m` and site `s`.
pub fn effective_coupling(spectrum: &Spectrum, m: usize, s: usize, g0: f64) -> Result<f64> {
    let mode = spectrum.mode(m)?;
    let n_sites = mode.amplitudes.len();
    if s == 0 || s > n_sites {
        return Err(Error::SiteOutOfRange { site: s, n_sites });
    }
    Ok(g0 * mode.amplitude(s).norm())
}

/// Loss seen at site `s` through the two edge modes, weighted by their
/// intensities there: `Σ loss_m |φ_{m,s}|² / Σ |φ_{m,s}|²`.
pub fn edge_linewidth(spectrum: &Spectrum, s: usize) -> Result<f64> {
    let edges = spectrum.edge_modes();
    if edges.len() != 2 {
        return Err(Error::NoEdgePair(format!("spectrum has {} edge modes, need 2", edges.len())));
    }
    let n_sites = edges[0].amplitudes.len();
    if s == 0 || s > n_sites {
        return Err(Error::SiteOutOfRange { site: s, n_sites });
    }
    let (w6, w7) = (edges[0].amplitude(s).norm_sqr(), edges[1].amplitude(s).norm_sqr());
    if w6 + w7 == 0.0 {
        return Err(Error::NoEdgePair(format!("both edge modes vanish at site {s}")));
    }
    Ok((edges[0].loss_mhz() * w6 + edges[1].loss_mhz() * w7) / (w6 + w7))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub current_a: f64,
    /// Branches whose continuation could not be told apart.
    pub branches: Vec<usize>,
    /// Difference between the best and second-best overlap.
    pub margin: f64,
}

/// Hybrid eigenvalue traces over a current sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AnticrossingSweep {
    pub currents_a: Vec<f64>,
    pub reference_ghz: f64,
    /// `branches[b][i]`: eigenvalue (MHz offset) of branch `b` at current
    /// `i`. Branches are numbered by real part at the first current.
    pub branches: Vec<Vec<Complex64>>,
    pub ambiguities: Vec<Ambiguity>,
}

impl AnticrossingSweep {
    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Smallest real-part separation between branches `a` and `b`, with the
    /// current where it occurs.
    pub fn min_gap(&self, a: usize, b: usize) -> (f64, f64) {
        self.branches[a]
            .iter()
            .zip(&self.branches[b])
            .zip(&self.currents_a)
            .map(|((x, y), &i)| ((x.re - y.re).abs(), i))
            .fold((f64::INFINITY, f64::NAN), |best, cur| if cur.0 < best.0 { cur } else { best })
    }

    /// CSV with header `current_a,branch,re_ghz,loss_mhz`, branches 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = csv_line(["current_a", "branch", "re_ghz", "loss_mhz"]);
        for (i, current) in self.currents_a.iter().enumerate() {
            for (b, trace) in self.branches.iter().enumerate() {
                let z = trace[i];
                out.push_str(&csv_line([
                    sig9(*current),
                    (b + 1).to_string(),
                    sig9(self.reference_ghz + 1e-3 * z.re),
                    sig9(-z.im),
                ]));
            }
        }
        out
    }
}

fn overlap(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm()
}

/// Diagonalizes the magnon-coupled chain at each current and links the
/// eigenvalues into continuous branches by maximal eigenvector overlap
/// between neighbouring currents.
///
/// Where two continuations of a branch are nearly equally likely the point
/// is recorded in `ambiguities` and the branches keep their real-part rank
/// there instead.
pub fn anticrossing_sweep(spec: &LatticeSpec, magnon: &MagnonSpec, currents_a: &[f64]) -> Result<AnticrossingSweep> {
    let h = build_chain_hamiltonian(spec)?;
    magnon.validate(h.dim())?;
    if currents_a.is_empty() {
        return Err(Error::InvalidInput("current grid is empty".into()));
    }
    if currents_a.iter().any(|c| !c.is_finite()) || currents_a.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("current grid must be finite and strictly ascending".into()));
    }
    if currents_a.len() > 1 && magnon.c1_ghz_per_a == 0.0 {
        return Err(Error::InvalidInput("c1_ghz_per_a is zero; the current sweep does not tune the magnon".into()));
    }
    let band = 1e-3 * spec.hopping_sum();
    let (f_first, f_last) = (magnon.frequency_ghz(currents_a[0]), magnon.frequency_ghz(currents_a[currents_a.len() - 1]));
    let (f_lo, f_hi) = (f_first.min(f_last), f_first.max(f_last));
    if f_hi < spec.omega0_ghz - band || f_lo > spec.omega0_ghz + band {
        log::warn!("magnon sweep {f_lo}..{f_hi} GHz never enters the chain band");
    }

    let spectra = currents_a
        .par_iter()
        .map(|&i| {
            build_coupled_hamiltonian(&h, magnon, magnon.frequency_ghz(i))
                .and_then(|hc| eigendecompose(&hc))
                .map_err(|e| Error::at_current(i, e))
        })
        .collect::<Result<Vec<_>>>()?;

    let dim = h.dim() + 1;
    // assignment[b] = mode index (0-based) that branch b occupies at the
    // current point.
    let mut assignment: Vec<usize> = (0..dim).collect();
    let mut branches: Vec<Vec<Complex64>> = (0..dim).map(|b| vec![spectra[0].modes[b].value]).collect();
    let mut ambiguities = Vec::new();

    for i in 1..spectra.len() {
        let (prev, next) = (&spectra[i - 1], &spectra[i]);
        let overlaps: Vec<Vec<f64>> = assignment
            .iter()
            .map(|&p| next.modes.iter().map(|m| overlap(&prev.modes[p].amplitudes, &m.amplitudes)).collect())
            .collect();

        let mut unclear = Vec::new();
        let mut worst = f64::INFINITY;
        for (b, row) in overlaps.iter().enumerate() {
            let mut sorted = row.clone();
            sorted.sort_by(|x, y| y.total_cmp(x));
            let margin = sorted[0] - sorted.get(1).copied().unwrap_or(0.0);
            if margin < TRACKING_MARGIN {
                unclear.push(b + 1);
                worst = worst.min(margin);
            }
        }

        let mut next_assignment = vec![usize::MAX; dim];
        if unclear.is_empty() {
            let mut pairs: Vec<(usize, usize, f64)> = overlaps
                .iter()
                .enumerate()
                .flat_map(|(b, row)| row.iter().enumerate().map(move |(j, &o)| (b, j, o)))
                .collect();
            pairs.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
            let mut taken = vec![false; dim];
            for (b, j, _) in pairs {
                if next_assignment[b] == usize::MAX && !taken[j] {
                    next_assignment[b] = j;
                    taken[j] = true;
                }
            }
        } else {
            ambiguities.push(Ambiguity { current_a: currents_a[i], branches: unclear, margin: worst });
            // Keep each branch's real-part rank from the previous point.
            let mut rank: Vec<usize> = (0..dim).collect();
            rank.sort_by_key(|&b| assignment[b]);
            for (r, b) in rank.into_iter().enumerate() {
                next_assignment[b] = r;
            }
        }
        assignment = next_assignment;
        for (b, &j) in assignment.iter().enumerate() {
            branches[b].push(next.modes[j].value);
        }
    }

    Ok(AnticrossingSweep { currents_a: currents_a.to_vec(), reference_ghz: h.reference_ghz(), branches, ambiguities })
}
