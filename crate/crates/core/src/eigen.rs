//! Dense eigensolver for general complex matrices.
//!
//! Householder reduction to upper Hessenberg form, then single-shift QR
//! sweeps with Wilkinson shifts and Givens rotations until the matrix is
//! upper triangular (complex Schur form `A = Z·T·Z^H`). Right eigenvectors
//! come from back-substitution in `T`, mapped back through `Z`.
//!
//! Cost is cubic in the dimension; the chains handled here stay below a few
//! hundred sites.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvalues and unit-norm right eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: DMatrix<Complex64>,
}

/// Complex Schur form `A = Z·T·Z^H`.
#[derive(Debug, Clone)]
pub struct Schur {
    pub t: DMatrix<Complex64>,
    pub z: DMatrix<Complex64>,
}

#[inline]
fn abs1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Reduces `a` to upper Hessenberg form in place and returns the unitary
/// `Q` with `a_original = Q·H·Q^H`.
fn hessenberg(a: &mut DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    let mut q = DMatrix::<Complex64>::identity(n, n);
    if n < 3 {
        return q;
    }
    let mut v = vec![ZERO; n];
    for k in 0..n - 2 {
        let alpha = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        let tail = (k + 2..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>();
        if alpha == 0.0 || tail == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] += phase * alpha;
        let vnorm = (k + 1..n).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        for vi in v.iter_mut().take(n).skip(k + 1) {
            *vi /= vnorm;
        }
        // Left: rows k+1.., P = I - 2 v v^H.
        for j in k..n {
            let dot: Complex64 = (k + 1..n).map(|i| v[i].conj() * a[(i, j)]).sum();
            for i in k + 1..n {
                a[(i, j)] -= 2.0 * v[i] * dot;
            }
        }
        // Right: columns k+1.., on A and on the accumulated Q.
        for i in 0..n {
            let dot: Complex64 = (k + 1..n).map(|j| a[(i, j)] * v[j]).sum();
            for j in k + 1..n {
                a[(i, j)] -= 2.0 * dot * v[j].conj();
            }
            let dot: Complex64 = (k + 1..n).map(|j| q[(i, j)] * v[j]).sum();
            for j in k + 1..n {
                q[(i, j)] -= 2.0 * dot * v[j].conj();
            }
        }
        a[(k + 1, k)] = -phase * alpha;
        for i in k + 2..n {
            a[(i, k)] = ZERO;
        }
    }
    q
}

/// Rotation `G = [[c, s], [-conj(s), c]]` with `G·[x, y]^T = [r, 0]^T`.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, ZERO);
    }
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (ax / r, (x / ax) * y.conj() / r)
}

/// Complex Schur decomposition of a square matrix.
pub fn schur(a: &DMatrix<Complex64>) -> Result<Schur> {
    let n = a.nrows();
    let mut h = a.clone();
    let mut z = hessenberg(&mut h);
    if n < 2 {
        return Ok(Schur { t: h, z });
    }
    let eps = f64::EPSILON;
    let max_sweeps = 30 * n.max(10);
    let mut sweeps = 0usize;
    let mut its = 0usize;
    let mut ihi = n - 1;

    while ihi > 0 {
        // Look for a negligible subdiagonal element in the active block.
        let mut l = 0;
        for k in (1..=ihi).rev() {
            let mut tst = abs1(h[(k - 1, k - 1)]) + abs1(h[(k, k)]);
            if tst == 0.0 {
                if k >= 2 {
                    tst += h[(k - 1, k - 2)].re.abs();
                }
                if k < ihi {
                    tst += h[(k + 1, k)].re.abs();
                }
            }
            if abs1(h[(k, k - 1)]) <= eps * tst {
                h[(k, k - 1)] = ZERO;
                l = k;
                break;
            }
        }
        if l == ihi {
            ihi -= 1;
            its = 0;
            continue;
        }

        sweeps += 1;
        its += 1;
        if sweeps > max_sweeps {
            return Err(Error::NoConvergence {
                dim: n,
                iterations: sweeps - 1,
                block_lo: l,
                block_hi: ihi,
                subdiagonal: h[(ihi, ihi - 1)].norm(),
            });
        }

        let shift = if its.is_multiple_of(10) {
            // Exceptional shift to break cycles.
            h[(ihi, ihi)] + 0.75 * abs1(h[(ihi, ihi - 1)])
        } else {
            let a11 = h[(ihi - 1, ihi - 1)];
            let a12 = h[(ihi - 1, ihi)];
            let a21 = h[(ihi, ihi - 1)];
            let a22 = h[(ihi, ihi)];
            let half = 0.5 * (a11 - a22);
            let disc = (half * half + a12 * a21).sqrt();
            let mid = 0.5 * (a11 + a22);
            let (mu1, mu2) = (mid + disc, mid - disc);
            if (mu1 - a22).norm() <= (mu2 - a22).norm() {
                mu1
            } else {
                mu2
            }
        };

        for k in l..ihi {
            let (x, y) = if k == l {
                (h[(l, l)] - shift, h[(l + 1, l)])
            } else {
                (h[(k, k - 1)], h[(k + 1, k - 1)])
            };
            let (c, s) = givens(x, y);
            let first_col = if k == l { l } else { k - 1 };
            for j in first_col..n {
                let hk = h[(k, j)];
                let hk1 = h[(k + 1, j)];
                h[(k, j)] = c * hk + s * hk1;
                h[(k + 1, j)] = -s.conj() * hk + c * hk1;
            }
            if k > l {
                h[(k + 1, k - 1)] = ZERO;
            }
            let last_row = (k + 2).min(ihi);
            for i in 0..=last_row {
                let hk = h[(i, k)];
                let hk1 = h[(i, k + 1)];
                h[(i, k)] = c * hk + s.conj() * hk1;
                h[(i, k + 1)] = -s * hk + c * hk1;
            }
            for i in 0..n {
                let zk = z[(i, k)];
                let zk1 = z[(i, k + 1)];
                z[(i, k)] = c * zk + s.conj() * zk1;
                z[(i, k + 1)] = -s * zk + c * zk1;
            }
        }
    }

    // Clean below the diagonal.
    for j in 0..n {
        for i in j + 1..n {
            h[(i, j)] = ZERO;
        }
    }
    Ok(Schur { t: h, z })
}

/// All eigenpairs of a general complex matrix. Eigenvectors have unit
/// Euclidean norm and their largest component real and positive.
pub fn eig(a: &DMatrix<Complex64>) -> Result<Eigen> {
    if !a.is_square() {
        return Err(Error::InvalidMatrix(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".to_owned()));
    }
    let n = a.nrows();
    let Schur { t, z } = schur(a)?;
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();

    let tnorm = t.iter().map(|x| abs1(*x)).fold(0.0, f64::max);
    let small = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE * 1e10);

    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    let mut y = vec![ZERO; n];
    for k in 0..n {
        let lambda = t[(k, k)];
        y.iter_mut().for_each(|v| *v = ZERO);
        y[k] = ONE;
        for j in (0..k).rev() {
            let rhs: Complex64 = (j + 1..=k).map(|l| t[(j, l)] * y[l]).sum();
            let mut den = t[(j, j)] - lambda;
            if abs1(den) < small {
                den = Complex64::new(small, 0.0);
            }
            y[j] = -rhs / den;
            // Rescale on growth; only the direction matters.
            let m = abs1(y[j]);
            if m > 1e100 {
                for v in y.iter_mut().take(k + 1) {
                    *v /= m;
                }
            }
        }
        let mut x: Vec<Complex64> =
            (0..n).map(|i| (0..=k).map(|l| z[(i, l)] * y[l]).sum()).collect();
        normalize(&mut x);
        for i in 0..n {
            vectors[(i, k)] = x[i];
        }
    }
    Ok(Eigen { values, vectors })
}

fn normalize(x: &mut [Complex64]) {
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    // Fix the global phase on the largest component; ties go to the lowest
    // index so the result is deterministic.
    let mut pivot = 0;
    for (i, z) in x.iter().enumerate() {
        if z.norm() > x[pivot].norm() * (1.0 + 1e-12) {
            pivot = i;
        }
    }
    let phase = x[pivot].conj() / x[pivot].norm();
    for z in x.iter_mut() {
        *z = *z * phase / norm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn residual(a: &DMatrix<Complex64>, e: &Eigen) -> f64 {
        (0..a.nrows())
            .map(|k| {
                let v = e.vectors.column(k);
                (a * v - v * e.values[k]).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn schur_form_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 5, 12, 40] {
            let a = random_matrix(n, &mut rng);
            let Schur { t, z } = schur(&a).unwrap();
            let back = &z * &t * z.adjoint();
            assert!((back - &a).norm() < 1e-12 * n as f64 * a.norm().max(1.0), "n = {n}");
            let unit = z.adjoint() * &z - DMatrix::<Complex64>::identity(n, n);
            assert!(unit.norm() < 1e-12 * n as f64);
            for j in 0..n {
                for i in j + 1..n {
                    assert_eq!(t[(i, j)], ZERO);
                }
            }
        }
    }

    #[test]
    fn eigenpairs_have_small_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 4, 9, 25, 60] {
            let a = random_matrix(n, &mut rng);
            let e = eig(&a).unwrap();
            assert!(residual(&a, &e) < 1e-11 * a.norm(), "n = {n}");
            for k in 0..n {
                assert!((e.vectors.column(k).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn agrees_with_nalgebra_schur() {
        // Independent implementation used only as an oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 8, 20] {
            let a = random_matrix(n, &mut rng);
            let ours = eig(&a).unwrap().values;
            let theirs = a.clone().schur().eigenvalues().expect("triangular");
            let mut used = vec![false; n];
            for z in &ours {
                let (j, d) = theirs
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| !used[*j])
                    .map(|(j, w)| (j, (z - w).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                used[j] = true;
                assert!(d < 1e-10, "n = {n}: {z} unmatched ({d:e})");
            }
        }
    }

    #[test]
    fn symmetric_two_mode() {
        let g = 80.0;
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[ZERO, Complex64::new(g, 0.0), Complex64::new(g, 0.0), ZERO],
        );
        let e = eig(&a).unwrap();
        let mut vals: Vec<f64> = e.values.iter().map(|z| z.re).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] + g).abs() < 1e-12 && (vals[1] - g).abs() < 1e-12);
        for k in 0..2 {
            let v = e.vectors.column(k);
            assert!((v[0].norm() - 0.5f64.sqrt()).abs() < 1e-12);
            assert!((v[1].norm() - 0.5f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_block_keeps_small_residual() {
        // Exceptional point: the two eigenvectors coalesce.
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(0.0, 1.0), ONE, Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.0)],
        );
        let e = eig(&a).unwrap();
        assert!(residual(&a, &e) < 1e-7);
        let overlap = (e.vectors.column(0).adjoint() * e.vectors.column(1))[(0, 0)].norm();
        assert!(overlap > 0.999);
    }

    #[test]
    fn diagonal_and_triangular_inputs() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 2.0),
            Complex64::new(0.5, -0.5),
        ]));
        let e = eig(&a).unwrap();
        assert_eq!(e.values[0], Complex64::new(3.0, 0.0));
        assert!(residual(&a, &e) < 1e-14);

        let mut u = DMatrix::<Complex64>::zeros(4, 4);
        for i in 0..4 {
            for j in i..4 {
                u[(i, j)] = Complex64::new((i + 2 * j) as f64, (j as f64) - 1.0);
            }
        }
        let e = eig(&u).unwrap();
        assert!(residual(&u, &e) < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = DMatrix::<Complex64>::zeros(3, 3);
        a[(1, 2)] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(eig(&a), Err(Error::InvalidMatrix(_))));
        let rect = DMatrix::<Complex64>::zeros(2, 3);
        assert!(matches!(eig(&rect), Err(Error::InvalidMatrix(_))));
    }
}
