//! Peak extraction and anticrossing fits.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::magnon::two_mode_hybrid;
use crate::scattering::TransmissionMap;

/// Minimum trace length accepted by [`find_peaks`].
pub const MIN_TRACE_LEN: usize = 16;
/// Default prominence threshold as a fraction of the global maximum.
pub const DEFAULT_PROMINENCE: f64 = 0.05;
/// Iteration cap of the least-squares fit.
pub const MAX_ITERATIONS: usize = 200;
/// Relative parameter step below which the fit counts as converged.
pub const STEP_TOL: f64 = 1e-10;
/// Also stop once an accepted step lowers the cost by less than this fraction.
pub const COST_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Refined position, in the units of the abscissa.
    pub center: f64,
    /// Full width at half maximum, in the units of the abscissa.
    pub fwhm: f64,
    /// Refined peak value.
    pub height: f64,
    pub prominence: f64,
}

/// Local maxima of `ys` sampled on the uniform grid `xs`, with the default
/// prominence threshold.
pub fn find_peaks(xs: &[f64], ys: &[f64]) -> Result<Vec<Peak>> {
    find_peaks_with(xs, ys, DEFAULT_PROMINENCE)
}

/// Local maxima whose topographic prominence is at least
/// `rel_prominence` times the global maximum.
///
/// Each maximum is refined by a parabola through the logarithms of the
/// three samples around it; the width is interpolated linearly at half
/// the refined height. If only one flank drops below half height before
/// the peak's base, the width is twice that flank's half width.
pub fn find_peaks_with(xs: &[f64], ys: &[f64], rel_prominence: f64) -> Result<Vec<Peak>> {
    let n = ys.len();
    if n == 0 {
        return Err(Error::Peaks("empty trace".into()));
    }
    if xs.len() != n {
        return Err(Error::Peaks(format!("{} abscissae for {} samples", xs.len(), n)));
    }
    if n < MIN_TRACE_LEN {
        return Err(Error::Peaks(format!("{n} samples, need at least {MIN_TRACE_LEN}")));
    }
    if ys.iter().chain(xs).any(|v| !v.is_finite()) {
        return Err(Error::Peaks("non-finite sample".into()));
    }
    let dx = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    if dx <= 0.0 || xs.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > 1e-6 * dx) {
        return Err(Error::Peaks("abscissa grid must be uniform and ascending".into()));
    }
    let global = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    if global <= 0.0 || global == floor {
        return Ok(Vec::new());
    }
    let threshold = rel_prominence * global;

    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if ys[i].partial_cmp(&ys[i - 1]) != Some(std::cmp::Ordering::Greater) {
            i += 1;
            continue;
        }
        // Plateaus count once, at their first sample.
        let mut j = i;
        while j + 1 < n && ys[j + 1] == ys[i] {
            j += 1;
        }
        if j + 1 >= n || ys[j + 1] > ys[i] {
            i = j + 1;
            continue;
        }
        let (left_base, right_base) = bases(ys, i, j);
        let prominence = ys[i] - ys[left_base].max(ys[right_base]);
        if prominence >= threshold {
            peaks.push(refine(xs, ys, i, j, left_base, right_base, dx, prominence)?);
        }
        i = j + 1;
    }
    Ok(peaks)
}

/// Indices of the lowest points between the maximum `[i, j]` and the
/// nearest higher sample on each side (or the trace ends).
fn bases(ys: &[f64], i: usize, j: usize) -> (usize, usize) {
    let top = ys[i];
    let mut left = i;
    let mut k = i;
    while k > 0 && ys[k - 1] <= top {
        k -= 1;
        if ys[k] < ys[left] {
            left = k;
        }
    }
    let mut right = j;
    let mut k = j;
    while k + 1 < ys.len() && ys[k + 1] <= top {
        k += 1;
        if ys[k] < ys[right] {
            right = k;
        }
    }
    (left, right)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    xs: &[f64],
    ys: &[f64],
    i: usize,
    j: usize,
    left_base: usize,
    right_base: usize,
    dx: f64,
    prominence: f64,
) -> Result<Peak> {
    let (l, c, r) = (ys[i - 1], ys[i], ys[j + 1]);
    let (center, height) = if j == i && l > 0.0 && c > 0.0 && r > 0.0 {
        let (a, b, d) = (l.ln(), c.ln(), r.ln());
        let curvature = a - 2.0 * b + d;
        if curvature < 0.0 {
            let delta = 0.5 * (a - d) / curvature;
            (xs[i] + delta * dx, (b - 0.25 * (a - d) * delta).exp())
        } else {
            (xs[i], c)
        }
    } else {
        (0.5 * (xs[i] + xs[j]), c)
    };
    let half = 0.5 * height;
    let above = (left_base..=right_base).filter(|&k| ys[k] >= half).count();
    if above < 3 {
        return Err(Error::Peaks(format!(
            "peak at {center} spans {above} samples above half height, need at least 3"
        )));
    }
    let left = (left_base..i).rev().find(|&k| ys[k] < half).map(|k| {
        let t = (half - ys[k]) / (ys[k + 1] - ys[k]);
        center - (xs[k] + t * dx)
    });
    let right = (j + 1..=right_base).find(|&k| ys[k] < half).map(|k| {
        let t = (ys[k - 1] - half) / (ys[k - 1] - ys[k]);
        (xs[k - 1] + t * dx) - center
    });
    let fwhm = match (left, right) {
        (Some(a), Some(b)) => a + b,
        (Some(a), None) => 2.0 * a,
        (None, Some(b)) => 2.0 * b,
        (None, None) => xs[right_base] - xs[left_base],
    };
    Ok(Peak { center, fwhm, height, prominence })
}

/// Measured branch positions: `(current A, frequency GHz)` pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Branches {
    pub a: Vec<(f64, f64)>,
    pub b: Vec<(f64, f64)>,
}

/// Starting point of a level-repulsion fit. Missing `g` and `ω_m` are
/// estimated from the data: half the smallest branch gap and the branch
/// midpoint there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitInit {
    pub g_mhz: Option<f64>,
    pub omega_m_ghz: Option<f64>,
    pub loss_m_mhz: f64,
    /// Held fixed during the fit: only the loss difference between the two
    /// modes shapes the real parts.
    pub gamma_n_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub g_mhz: f64,
    pub omega_m_ghz: f64,
    /// Total loss of the chain mode, intrinsic plus extrinsic.
    pub loss_m_mhz: f64,
    pub gamma_n_mhz: f64,
    /// RMS of the branch residuals, MHz.
    pub residual: f64,
    pub converged: bool,
    /// Variance estimates of `(g, ω_m, loss_m)` in MHz².
    #[serde(skip)]
    pub covariance_diag: [f64; 3],
    #[serde(skip)]
    pub iterations: usize,
    /// The fitted coupling is not distinguishable from zero.
    #[serde(skip)]
    pub weak_identifiability: bool,
    /// The branches never come within `4g` of each other.
    #[serde(skip)]
    pub degenerate_data: bool,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let k = points.windows(2).position(|w| w[0].0 <= x && x <= w[1].0)?;
    let ((x0, y0), (x1, y1)) = (points[k], points[k + 1]);
    if x1 == x0 {
        return Some(y0);
    }
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// Smallest separation of two branches over their common current range,
/// in MHz, with the midpoint frequency (GHz) at that current.
fn closest_approach(upper: &[(f64, f64)], lower: &[(f64, f64)]) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &(x, y) in upper {
        if let Some(z) = interpolate(lower, x) {
            let gap = 1e3 * (y - z).abs();
            if best.is_none_or(|b| gap < b.0) {
                best = Some((gap, 0.5 * (y + z)));
            }
        }
    }
    for &(x, z) in lower {
        if let Some(y) = interpolate(upper, x) {
            let gap = 1e3 * (y - z).abs();
            if best.is_none_or(|b| gap < b.0) {
                best = Some((gap, 0.5 * (y + z)));
            }
        }
    }
    best
}

struct Problem<'a> {
    upper: &'a [(f64, f64)],
    lower: &'a [(f64, f64)],
    c0_ghz: f64,
    c1_ghz_per_a: f64,
    gamma_n: f64,
    /// Reference for frequency offsets, GHz.
    reference: f64,
}

impl Problem<'_> {
    /// Residuals in MHz for parameters `(g, ω_m offset MHz, loss_m)`.
    fn residuals(&self, p: &Vector3<f64>) -> DVector<f64> {
        let wm = Complex64::new(p[1], -p[2]);
        let model = |current: f64| {
            let wn = Complex64::new(1e3 * (self.c0_ghz + self.c1_ghz_per_a * current - self.reference), -self.gamma_n);
            let (x, y) = two_mode_hybrid(wn, wm, p[0]);
            (x.re.max(y.re), x.re.min(y.re))
        };
        let up = self.upper.iter().map(|&(i, w)| 1e3 * (w - self.reference) - model(i).0);
        let lo = self.lower.iter().map(|&(i, w)| 1e3 * (w - self.reference) - model(i).1);
        DVector::from_iterator(self.upper.len() + self.lower.len(), up.chain(lo))
    }

    fn jacobian(&self, p: &Vector3<f64>, scale: f64) -> DMatrix<f64> {
        let m = self.upper.len() + self.lower.len();
        let mut jac = DMatrix::zeros(m, 3);
        for k in 0..3 {
            let h = 1e-6 * p[k].abs().max(1e-3 * scale);
            let mut hi = *p;
            let mut lo = *p;
            hi[k] += h;
            lo[k] -= h;
            let d = (self.residuals(&hi) - self.residuals(&lo)) / (2.0 * h);
            jac.set_column(k, &d);
        }
        jac
    }
}

/// Least-squares fit of the two-mode hybrid real parts to two measured
/// branches, with the magnon frequency `c0 + c1·I` (GHz, current in A).
///
/// The branch with the higher mean frequency is matched to the upper
/// hybrid, so the result does not depend on how the branches are labeled.
pub fn fit_level_repulsion(branches: &Branches, c0_ghz: f64, c1_ghz_per_a: f64, init: &FitInit) -> Result<FitResult> {
    for (name, pts) in [("a", &branches.a), ("b", &branches.b)] {
        if pts.len() < 6 {
            return Err(Error::InvalidInput(format!("branch {name} has {} points, need at least 6", pts.len())));
        }
        if pts.iter().any(|(i, w)| !i.is_finite() || !w.is_finite()) {
            return Err(Error::InvalidInput(format!("branch {name} has non-finite points")));
        }
    }
    if !(c0_ghz.is_finite() && c1_ghz_per_a.is_finite() && c1_ghz_per_a != 0.0) {
        return Err(Error::InvalidInput("magnon map needs finite c0 and nonzero c1".into()));
    }
    let sorted = |pts: &[(f64, f64)]| {
        let mut v = pts.to_vec();
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        v
    };
    let (a, b) = (sorted(&branches.a), sorted(&branches.b));
    let mean = |pts: &[(f64, f64)]| pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let (upper, lower) = if mean(&a) >= mean(&b) { (a, b) } else { (b, a) };
    let (min_gap, mid) = closest_approach(&upper, &lower)
        .ok_or_else(|| Error::InvalidInput("branches share no current range".into()))?;

    let reference = mid;
    let problem = Problem { upper: &upper, lower: &lower, c0_ghz, c1_ghz_per_a, gamma_n: init.gamma_n_mhz, reference };
    let g0 = init.g_mhz.filter(|g| g.is_finite() && *g > 0.0).unwrap_or(0.5 * min_gap);
    let wm0 = init.omega_m_ghz.filter(|w| w.is_finite()).unwrap_or(mid);
    let mut p = Vector3::new(g0, 1e3 * (wm0 - reference), init.loss_m_mhz);
    let scale = min_gap.max(1.0) + p[2].abs();

    let cost = |p: &Vector3<f64>| problem.residuals(p).norm_squared();
    let mut current = cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jac = problem.jacobian(&p, scale);
        let r = problem.residuals(&p);
        let jtj: Matrix3<f64> = (jac.transpose() * &jac).fixed_view::<3, 3>(0, 0).into();
        let grad: Vector3<f64> = (jac.transpose() * &r).fixed_view::<3, 1>(0, 0).into();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_cost = cost(&trial);
            if trial_cost <= current {
                let rel = step.norm() / p.norm().max(1e-12);
                let stalled = current - trial_cost <= COST_TOL * current;
                p = trial;
                current = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < STEP_TOL || stalled {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left at machine precision: a minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let m = upper.len() + lower.len();
    let dof = (m as f64 - 3.0).max(1.0);
    let sigma2 = current / dof;
    let jac = problem.jacobian(&p, scale);
    let jtj: Matrix3<f64> = (jac.transpose() * &jac).fixed_view::<3, 3>(0, 0).into();
    let covariance_diag = jtj
        .try_inverse()
        .map(|inv| [sigma2 * inv[(0, 0)], sigma2 * inv[(1, 1)], sigma2 * inv[(2, 2)]])
        .unwrap_or([f64::INFINITY; 3]);
    let residual = (current / m as f64).sqrt();
    let g = p[0].abs();
    let weak_identifiability = g <= (2.0 * residual).max(2.0 * covariance_diag[0].sqrt()).max(1e-3);
    let degenerate_data = min_gap > 4.0 * g;
    if !converged {
        log::warn!("level-repulsion fit stopped after {iterations} iterations, rms residual {residual} MHz");
    }
    Ok(FitResult {
        g_mhz: g,
        omega_m_ghz: reference + 1e-3 * p[1],
        loss_m_mhz: p[2],
        gamma_n_mhz: init.gamma_n_mhz,
        residual,
        converged,
        covariance_diag,
        iterations,
        weak_identifiability,
        degenerate_data,
    })
}

/// Which peak of a frequency cut a linewidth refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchSelector {
    /// Nearest peak above the magnon frequency at that current.
    Upper,
    /// Nearest peak below the magnon frequency at that current.
    Lower,
    /// Peak closest to the given frequency, GHz.
    Near(f64),
}

/// Half width at half maximum (MHz) of the selected branch in the `|S21|²`
/// cut nearest to `at_current`.
pub fn extract_linewidth(map: &TransmissionMap, branch: BranchSelector, at_current: f64) -> Result<f64> {
    let currents = &map.header.currents_a;
    let (lo, hi) = currents.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
    if !(at_current >= lo && at_current <= hi) {
        return Err(Error::InvalidInput(format!("current {at_current} A outside map range {lo}..={hi} A")));
    }
    let i = currents
        .iter()
        .enumerate()
        .min_by(|x, y| (x.1 - at_current).abs().total_cmp(&(y.1 - at_current).abs()))
        .map(|(k, _)| k)
        .expect("nonempty grid");
    let current_a = currents[i];
    let unresolved = |reason: String| Error::BranchNotResolvable { current_a, reason };
    let peaks = find_peaks(&map.header.omegas_ghz, map.s21_cut(i)).map_err(|e| unresolved(e.to_string()))?;
    let magnon_ghz = || {
        map.header
            .magnon
            .map(|m| m.frequency_ghz(current_a))
            .ok_or_else(|| unresolved("map carries no magnon tuning".into()))
    };
    let chosen = match branch {
        BranchSelector::Upper => {
            let f = magnon_ghz()?;
            peaks.iter().filter(|p| p.center > f).min_by(|x, y| x.center.total_cmp(&y.center))
        }
        BranchSelector::Lower => {
            let f = magnon_ghz()?;
            peaks.iter().filter(|p| p.center < f).max_by(|x, y| x.center.total_cmp(&y.center))
        }
        BranchSelector::Near(f) => peaks.iter().min_by(|x, y| (x.center - f).abs().total_cmp(&(y.center - f).abs())),
    };
    let peak = chosen.ok_or_else(|| unresolved(format!("no peak for {branch:?} among {} peaks", peaks.len())))?;
    Ok(0.5e3 * peak.fwhm)
}
