//! Winding numbers, PT-breaking thresholds and exceptional-point scans.
//!
//! Loss-contrast sweeps keep the mean loss `γ̄` of the input chain. When a
//! requested contrast would drive a sublattice loss below zero, the mean
//! loss is raised just enough to keep both rates non-negative. A uniform
//! loss shift moves every eigenvalue by the same imaginary constant, so
//! coalescence points, eigenvectors and normalized `β` values are
//! unaffected.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{csv_line, sig9};
use crate::lattice::LatticeSpec;
use crate::spectral::{normalized_eigenvalues, ModeClass, Spectrum};

/// Smallest Brillouin-zone grid accepted by the winding routines.
pub const MIN_K_POINTS: usize = 64;
/// Allowed distance of a raw winding from the nearest integer.
pub const WINDING_TOL: f64 = 0.01;
/// Relative accuracy of every threshold bisection.
pub const BISECTION_RTOL: f64 = 1e-6;
/// Eigenvector overlap required to accept a coalescence.
pub const ALIGNMENT_MIN: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpKind {
    Edge,
    Bulk,
}

impl EpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EpKind::Edge => "edge",
            EpKind::Bulk => "bulk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpReport {
    /// Loss contrast at coalescence, MHz.
    pub delta_gamma_c: f64,
    /// `δγ_c / [2(v + w)]`.
    pub normalized: f64,
    /// 1-based indices of the coalescing pair in the `δγ = 0` spectrum.
    pub mode_pair: (usize, usize),
    pub kind: EpKind,
}

/// Same chain at loss contrast `delta_gamma`, mean loss kept where possible.
pub fn at_contrast(spec: &LatticeSpec, delta_gamma: f64) -> LatticeSpec {
    let bar = spec.gamma_bar().max(0.5 * delta_gamma);
    LatticeSpec {
        gamma_a_mhz: bar - 0.5 * delta_gamma,
        gamma_b_mhz: bar + 0.5 * delta_gamma,
        ..*spec
    }
}

fn wrap(phase: f64) -> f64 {
    let mut p = phase % (2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    } else if p <= -PI {
        p += 2.0 * PI;
    }
    p
}

/// Raw winding of `f` around the origin, counted counterclockwise in
/// `z = e^{-ik}` (i.e. with `k` running from `π` down to `-π`).
fn raw_winding(f: impl Fn(f64) -> Complex64, n_k: usize) -> Result<f64> {
    if n_k < MIN_K_POINTS {
        return Err(Error::GridTooCoarse(n_k));
    }
    let values: Vec<Complex64> = (0..n_k).map(|j| f(PI - 2.0 * PI * j as f64 / n_k as f64)).collect();
    let peak = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut total = 0.0;
    let mut resolved = true;
    for j in 0..n_k {
        let step = wrap(values[(j + 1) % n_k].arg() - values[j].arg());
        resolved &= step.abs() < 0.5 * PI;
        total += step;
    }
    let raw = total / (2.0 * PI);
    let touches_zero = values.iter().any(|z| z.norm() <= 1e-12 * peak) || peak == 0.0;
    if touches_zero || !resolved {
        return Err(Error::NonIntegerWinding { raw });
    }
    Ok(raw)
}

fn quantize(raw: f64) -> Result<i64> {
    let rounded = raw.round();
    if (raw - rounded).abs() > WINDING_TOL {
        return Err(Error::NonIntegerWinding { raw });
    }
    Ok(rounded as i64)
}

/// Bulk winding number of `h(k) = v + w·e^{-ik}`; `1` for `v < w`.
pub fn winding_hermitian(spec: &LatticeSpec, n_k: usize) -> Result<i64> {
    spec.validate()?;
    quantize(raw_winding(|k| spec.bloch_offdiag(k), n_k)?)
}

/// Generalized winding number of the PT-symmetric chain: half the winding
/// of `h(k)·h(-k)* - (δγ/2)²`, i.e. the winding of its continuous square
/// root. Defined only while the bulk is PT-unbroken.
pub fn winding_generalized(spec: &LatticeSpec, n_k: usize) -> Result<i64> {
    spec.validate()?;
    let half = 0.5 * spec.delta_gamma().abs();
    let gap = (spec.w_mhz - spec.v_mhz).abs();
    if half >= gap {
        return Err(Error::OutOfDomain { half_contrast: half, gap });
    }
    let raw = raw_winding(|k| spec.bloch_offdiag(k) * spec.bloch_offdiag(-k).conj() - half * half, n_k)?;
    quantize(0.5 * raw)
}

/// Loss contrast at which the `k = π` bulk pair coalesces: `2|w - v|`.
pub fn bulk_sptb_threshold(spec: &LatticeSpec) -> f64 {
    2.0 * (spec.w_mhz - spec.v_mhz).abs()
}

/// Indices (0-based, into `spectrum.modes`) sorted by `|Re ε|` ascending.
fn by_centre_distance(spectrum: &Spectrum, offset: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..spectrum.len()).collect();
    idx.sort_by(|&a, &b| {
        (spectrum.modes[a].value.re + offset)
            .abs()
            .total_cmp(&(spectrum.modes[b].value.re + offset).abs())
    });
    idx
}

fn centre_offset(spectrum: &Spectrum, spec: &LatticeSpec) -> f64 {
    1e3 * (spectrum.reference_ghz - spec.omega0_ghz)
}

/// Whether the two modes closest to the band centre have split losses
/// rather than split real parts.
fn edge_pair_broken(spec: &LatticeSpec, delta_gamma: f64) -> Result<bool> {
    let s = Spectrum::of_lattice(&at_contrast(spec, delta_gamma))?;
    let order = by_centre_distance(&s, centre_offset(&s, spec));
    let (a, b) = (&s.modes[order[0]], &s.modes[order[1]]);
    Ok((a.value.im - b.value.im).abs() > (a.value.re - b.value.re).abs())
}

fn bisect(mut lo: f64, mut hi: f64, mut above: impl FnMut(f64) -> Result<bool>) -> Result<(f64, f64)> {
    while hi - lo > BISECTION_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Loss contrast at which the two mid-gap modes coalesce, found by
/// bisection with `γ̄` held fixed.
///
/// The pair is the two modes closest to the band centre; for short chains
/// their hybridization can push them outside the mid-gap window used by
/// mode classification.
pub fn edge_sptb_threshold(spec: &LatticeSpec) -> Result<EpReport> {
    spec.validate()?;
    if spec.v_mhz >= spec.w_mhz {
        return Err(Error::NoEdgePair(format!(
            "v = {} MHz is not below w = {} MHz",
            spec.v_mhz, spec.w_mhz
        )));
    }
    let scale = spec.hopping_sum();
    if edge_pair_broken(spec, 0.0)? {
        return Err(Error::NoEdgePair("centre pair already split in loss at zero contrast".into()));
    }
    let hi = 2.0 * scale;
    if !edge_pair_broken(spec, hi)? {
        return Err(Error::NoEdgePair(format!("centre pair unbroken up to delta_gamma = {hi} MHz")));
    }
    let (lo, hi) = bisect(0.0, hi, |dg| edge_pair_broken(spec, dg))?;
    let delta_gamma_c = 0.5 * (lo + hi);
    let n = spec.n_cells;
    Ok(EpReport {
        delta_gamma_c,
        normalized: delta_gamma_c / (2.0 * scale),
        mode_pair: (n, n + 1),
        kind: EpKind::Edge,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    /// `(N, δγ_c)` in input order.
    pub rows: Vec<(usize, f64)>,
    /// Least-squares fit of `ln δγ_c` against `N`; absent for fewer than
    /// two lengths.
    pub fit: Option<LogLinearFit>,
}

impl ThresholdTable {
    /// CSV with header `n_cells,delta_gamma_c_mhz,r_squared`; the fit
    /// quality is repeated on every row and left empty without a fit.
    pub fn to_csv(&self) -> String {
        let r2 = self.fit.map_or(String::new(), |f| sig9(f.r_squared));
        let mut out = csv_line(["n_cells", "delta_gamma_c_mhz", "r_squared"]);
        for (n, dg) in &self.rows {
            out.push_str(&csv_line([n.to_string(), sig9(*dg), r2.clone()]));
        }
        out
    }
}

fn log_linear_fit(rows: &[(usize, f64)]) -> Option<LogLinearFit> {
    if rows.len() < 2 {
        return None;
    }
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(LogLinearFit { slope, intercept, r_squared })
}

/// Edge threshold for each chain length in `n_values`, plus a log-linear
/// fit of the thresholds against `N`.
pub fn threshold_vs_length(spec: &LatticeSpec, n_values: &[usize]) -> Result<ThresholdTable> {
    if let Some(&bad) = n_values.iter().find(|&&n| n < 2) {
        return Err(Error::at_n(bad, Error::InvalidInput("chain length must be at least 2 cells".into())));
    }
    let rows = n_values
        .par_iter()
        .map(|&n| {
            edge_sptb_threshold(&spec.with_cells(n))
                .map(|r| (n, r.delta_gamma_c))
                .map_err(|e| Error::at_n(n, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = log_linear_fit(&rows);
    Ok(ThresholdTable { rows, fit })
}

/// Number of modes whose real part sits at the band centre (coalesced,
/// purely dissipative pairs).
fn coalesced_count(spec: &LatticeSpec, delta_gamma: f64) -> Result<usize> {
    let s = Spectrum::of_lattice(&at_contrast(spec, delta_gamma))?;
    let offset = centre_offset(&s, spec);
    let tol = 1e-6 * spec.hopping_sum();
    Ok(s.modes.iter().filter(|m| (m.value.re + offset).abs() <= tol).count())
}

/// Overlap `|⟨φ_i, φ_j⟩|` of the two still-unbroken modes closest to the
/// band centre at `delta_gamma`.
fn approaching_pair_alignment(spec: &LatticeSpec, delta_gamma: f64) -> Result<f64> {
    let s = Spectrum::of_lattice(&at_contrast(spec, delta_gamma))?;
    let offset = centre_offset(&s, spec);
    let tol = 1e-6 * spec.hopping_sum();
    let open: Vec<usize> = by_centre_distance(&s, offset)
        .into_iter()
        .filter(|&i| (s.modes[i].value.re + offset).abs() > tol)
        .collect();
    if open.len() < 2 {
        return Ok(0.0);
    }
    let (a, b) = (&s.modes[open[0]].amplitudes, &s.modes[open[1]].amplitudes);
    Ok(a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm())
}

/// Locates every coalescence between consecutive points of an ascending
/// loss-contrast grid.
///
/// A coalescence shows up as two more modes collapsing onto the band
/// centre; each one is refined by bisection and accepted when the
/// approaching eigenvectors are aligned. Pairs coalesce in order of their
/// `δγ = 0` distance from the centre, which fixes `mode_pair` and `kind`.
/// Returns an empty list when the grid ends below the first coalescence.
pub fn ep_scan(spec: &LatticeSpec, delta_gamma_grid: &[f64]) -> Result<Vec<EpReport>> {
    spec.validate()?;
    if delta_gamma_grid.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::InvalidInput("loss-contrast grid must be finite and non-negative".into()));
    }
    if delta_gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("loss-contrast grid must be strictly ascending".into()));
    }
    if delta_gamma_grid.is_empty() {
        return Ok(Vec::new());
    }
    let counts = delta_gamma_grid
        .par_iter()
        .map(|&dg| coalesced_count(spec, dg).map_err(|e| Error::at_delta_gamma(dg, e)))
        .collect::<Result<Vec<_>>>()?;

    let reference = Spectrum::of_lattice(&at_contrast(spec, 0.0))?;
    let centre = by_centre_distance(&reference, centre_offset(&reference, spec));
    let scale = spec.hopping_sum();
    if counts[0] > 0 {
        log::warn!(
            "grid starts at delta_gamma = {} MHz with {} modes already coalesced; earlier points are not reported",
            delta_gamma_grid[0],
            counts[0]
        );
    }

    let mut reports = Vec::new();
    for (i, pair) in counts.windows(2).enumerate() {
        let (lo, hi) = (delta_gamma_grid[i], delta_gamma_grid[i + 1]);
        let mut target = pair[0] + 2;
        while target <= pair[1] {
            let (below, above) = bisect(lo, hi, |dg| Ok(coalesced_count(spec, dg)? >= target))
                .map_err(|e| Error::at_delta_gamma(hi, e))?;
            let delta_gamma_c = 0.5 * (below + above);
            let alignment = approaching_pair_alignment(spec, below).map_err(|e| Error::at_delta_gamma(below, e))?;
            if alignment < ALIGNMENT_MIN {
                log::warn!(
                    "rejecting candidate coalescence at delta_gamma = {delta_gamma_c} MHz: eigenvector overlap {alignment}"
                );
            } else {
                let rank = target / 2 - 1;
                let (a, b) = (centre[2 * rank], centre[2 * rank + 1]);
                let (a, b) = (a.min(b), a.max(b));
                let edge = reference.modes[a].class == Some(ModeClass::Edge)
                    && reference.modes[b].class == Some(ModeClass::Edge);
                reports.push(EpReport {
                    delta_gamma_c,
                    normalized: delta_gamma_c / (2.0 * scale),
                    mode_pair: (a + 1, b + 1),
                    kind: if edge { EpKind::Edge } else { EpKind::Bulk },
                });
            }
            target += 2;
        }
    }
    Ok(reports)
}

/// CSV with header `delta_gamma_mhz,normalized,kind,mode_i,mode_j`.
pub fn ep_reports_csv(reports: &[EpReport]) -> String {
    let mut out = csv_line(["delta_gamma_mhz", "normalized", "kind", "mode_i", "mode_j"]);
    for r in reports {
        out.push_str(&csv_line([
            sig9(r.delta_gamma_c),
            sig9(r.normalized),
            r.kind.as_str().to_owned(),
            r.mode_pair.0.to_string(),
            r.mode_pair.1.to_string(),
        ]));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub delta_gamma_mhz: f64,
    pub m: usize,
    pub beta_real: f64,
    pub beta_imag: f64,
}

/// Normalized eigenvalues of every mode along a loss-contrast sweep.
pub fn beta_sweep(spec: &LatticeSpec, delta_gamma_grid: &[f64]) -> Result<Vec<BetaPoint>> {
    spec.validate()?;
    let per_point = delta_gamma_grid
        .par_iter()
        .map(|&dg| {
            let s = Spectrum::of_lattice(&at_contrast(spec, dg)).map_err(|e| Error::at_delta_gamma(dg, e))?;
            let beta = normalized_eigenvalues(&s)?;
            Ok(beta
                .into_iter()
                .enumerate()
                .map(|(i, (re, im))| BetaPoint { delta_gamma_mhz: dg, m: i + 1, beta_real: re, beta_imag: im })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// CSV with header `delta_gamma_mhz,m,beta_real,beta_imag`.
pub fn beta_sweep_csv(points: &[BetaPoint]) -> String {
    let mut out = csv_line(["delta_gamma_mhz", "m", "beta_real", "beta_imag"]);
    for p in points {
        out.push_str(&csv_line([sig9(p.delta_gamma_mhz), p.m.to_string(), sig9(p.beta_real), sig9(p.beta_imag)]));
    }
    out
}
