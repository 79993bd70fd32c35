//! Small dense linear algebra: the shifted-QR Hessenberg eigensolver plus the
//! orthogonalization and eigenvector helpers shared by the solvers.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenvalues of an upper-Hessenberg matrix by Francis double-shift QR.
///
/// Entries below the first subdiagonal are ignored. Conjugate pairs come out
/// of 2x2 real-Schur blocks and are therefore exact conjugates. The result is
/// sorted with [`sort_eigenvalues`]. Fails with [`Error::NoConvergence`] after
/// `100 * m` QR sweeps; [`hessenberg_eigenvalues_partial`] exposes the values
/// found up to that point.
pub fn hessenberg_eigenvalues(h: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let (values, converged) = hessenberg_eigenvalues_partial(h)?;
    if converged {
        Ok(values)
    } else {
        Err(Error::NoConvergence {
            found: values.len(),
            total: h.nrows(),
        })
    }
}

/// Like [`hessenberg_eigenvalues`], but returns whatever eigenvalues were
/// deflated together with a convergence flag instead of failing.
pub fn hessenberg_eigenvalues_partial(h: &DMatrix<f64>) -> Result<(Vec<Complex64>, bool)> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "Hessenberg eigensolver needs a non-empty square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix entry".into()));
    }

    // 1-based working copy, zero below the subdiagonal.
    let mut a = vec![vec![0.0f64; n + 1]; n + 1];
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            a[i][j] = h[(i - 1, j - 1)];
        }
    }
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }

    let max_sweeps = 100 * n;
    let mut sweeps = 0usize;
    let mut values: Vec<Complex64> = Vec::with_capacity(n);
    let mut nn = n;
    let mut t = 0.0;

    while nn >= 1 {
        let mut its = 0usize;
        loop {
            // Look for a single small subdiagonal element.
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nn][nn];
            if l == nn {
                values.push(Complex64::new(x + t, 0.0));
                nn -= 1;
                break;
            }
            let mut y = a[nn - 1][nn - 1];
            let mut w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    let first = x + z;
                    let second = if z != 0.0 { x - w / z } else { first };
                    values.push(Complex64::new(first, 0.0));
                    values.push(Complex64::new(second, 0.0));
                } else {
                    values.push(Complex64::new(x + p, z));
                    values.push(Complex64::new(x + p, -z));
                }
                nn = nn.saturating_sub(2);
                break;
            }

            if sweeps >= max_sweeps {
                sort_eigenvalues(&mut values);
                return Ok((values, false));
            }
            if its > 0 && its % 10 == 0 {
                // Exceptional shift.
                t += x;
                for i in 1..=nn {
                    a[i][i] -= x;
                }
                let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            sweeps += 1;

            // Look for two consecutive small subdiagonal elements.
            let mut m = nn - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[m][m];
                let r0 = x - z;
                let s0 = y - z;
                p = (r0 * s0 - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r0 - s0;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }

            // Double QR step on rows l..nn and columns m..nn.
            for k in m..nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k != nn - 1 { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        let mut pp = x * a[i][k] + y * a[i][k + 1];
                        if k != nn - 1 {
                            pp += z * a[i][k + 2];
                            a[i][k + 2] -= pp * r;
                        }
                        a[i][k + 1] -= pp * q;
                        a[i][k] -= pp;
                    }
                }
            }
        }
    }

    sort_eigenvalues(&mut values);
    Ok((values, true))
}

/// Descending modulus, ties broken by descending imaginary part.
pub fn sort_eigenvalues(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
    });
}

/// Eigenvalues of a general small square matrix (Hessenberg reduction, then
/// [`hessenberg_eigenvalues`]).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let h = m.clone().hessenberg().h();
    hessenberg_eigenvalues(&h)
}

/// Unit-norm approximate eigenvector of `m` for the eigenvalue `mu`: the
/// right singular vector of `m - mu I` with the smallest singular value.
pub fn eigenvector(m: &DMatrix<f64>, mu: Complex64) -> DVector<Complex64> {
    let n = m.nrows();
    let shifted = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        let x = Complex64::new(m[(i, j)], 0.0);
        if i == j {
            x - mu
        } else {
            x
        }
    });
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
        .expect("non-empty matrix");
    let mut v = DVector::<Complex64>::from_fn(n, |j, _| v_t[(idx, j)].conj());
    // Fix the phase so the largest component is real and positive.
    if let Some((k, _)) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap_or(Ordering::Equal))
    {
        let phase = v[k] / v[k].norm();
        if phase.norm() > 0.0 {
            v /= phase;
        }
    }
    let norm = v.norm();
    if norm > 0.0 {
        v /= Complex64::new(norm, 0.0);
    }
    v
}

/// Orthogonalizes `v` against the columns of `basis` (two modified
/// Gram-Schmidt passes) and normalizes it. Returns `None` when less than
/// `drop_tol` of the original norm survives.
pub fn orthonormalize_against(
    basis: &[DVector<f64>],
    v: &DVector<f64>,
    drop_tol: f64,
) -> Option<DVector<f64>> {
    let original = v.norm();
    if original == 0.0 || !original.is_finite() {
        return None;
    }
    let mut w = v.clone();
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&w);
            w.axpy(-c, b, 1.0);
        }
    }
    let norm = w.norm();
    if norm <= drop_tol * original {
        return None;
    }
    Some(w / norm)
}

/// Matrix whose columns are the given vectors.
pub fn columns_to_matrix(n: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// `max |V^T V - I|` over all entries.
pub fn orthonormality_error(v: &DMatrix<f64>) -> f64 {
    let k = v.ncols();
    if k == 0 {
        return 0.0;
    }
    let g = v.transpose() * v;
    (g - DMatrix::<f64>::identity(k, k)).amax()
}

/// 2-norm condition number of a small square matrix; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Characteristic polynomial of an upper-Hessenberg matrix by the
    /// Hyman-style recurrence on leading principal minors. Coefficients are
    /// returned lowest degree first and the polynomial is monic.
    fn hessenberg_charpoly(h: &DMatrix<f64>) -> Vec<f64> {
        let n = h.nrows();
        // p[k] = det(x I - H[0..k, 0..k]) as coefficient vectors.
        let mut p: Vec<Vec<f64>> = vec![vec![1.0]];
        for k in 1..=n {
            let i = k - 1;
            // (x - h_ii) p_{k-1}
            let mut next = vec![0.0; k + 1];
            for (d, c) in p[k - 1].iter().enumerate() {
                next[d + 1] += c;
                next[d] -= h[(i, i)] * c;
            }
            // - sum_{j<i} h_{j,i} * prod_{l=j+1}^{i} h_{l,l-1} * p_j
            let mut prod = 1.0;
            for j in (0..i).rev() {
                prod *= h[(j + 1, j)];
                let coef = h[(j, i)] * prod;
                for (d, c) in p[j].iter().enumerate() {
                    next[d] -= coef * c;
                }
            }
            p.push(next);
        }
        p.pop().unwrap()
    }

    /// Aberth-Ehrlich simultaneous root finder on a monic polynomial.
    fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
        let n = coeffs.len() - 1;
        let eval = |z: Complex64| -> (Complex64, Complex64) {
            let mut p = Complex64::new(0.0, 0.0);
            let mut dp = Complex64::new(0.0, 0.0);
            for c in coeffs.iter().rev() {
                dp = dp * z + p;
                p = p * z + c;
            }
            (p, dp)
        };
        let radius = 1.0 + coeffs[..n].iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| {
                Complex64::from_polar(0.5 * radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64)
            })
            .collect();
        for _ in 0..500 {
            let mut max_step: f64 = 0.0;
            for k in 0..n {
                let (p, dp) = eval(z[k]);
                let ratio = p / dp;
                let sum: Complex64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| Complex64::new(1.0, 0.0) / (z[k] - z[j]))
                    .sum();
                let step = ratio / (Complex64::new(1.0, 0.0) - ratio * sum);
                z[k] -= step;
                max_step = max_step.max(step.norm());
            }
            if max_step < 1e-15 {
                break;
            }
        }
        z
    }

    fn match_sets(a: &[Complex64], b: &[Complex64]) -> f64 {
        let mut used = vec![false; b.len()];
        let mut worst: f64 = 0.0;
        for x in a {
            let (j, d) = b
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, y)| (j, (x - y).norm()))
                .min_by(|p, q| p.1.partial_cmp(&q.1).unwrap())
                .unwrap();
            used[j] = true;
            worst = worst.max(d);
        }
        worst
    }

    #[test]
    fn one_by_one() {
        let ev = hessenberg_eigenvalues(&DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert_eq!(ev, vec![Complex64::new(0.5, 0.0)]);
    }

    #[test]
    fn rotation_gives_plus_minus_i() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = hessenberg_eigenvalues(&h).unwrap();
        assert_eq!(ev.len(), 2);
        assert!((ev[0] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((ev[1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn random_hessenberg_matches_characteristic_polynomial_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(20011);
        let n = 8;
        let h = DMatrix::from_fn(n, n, |i, j| {
            if i > j + 1 {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let ev = hessenberg_eigenvalues(&h).unwrap();
        let roots = polynomial_roots(&hessenberg_charpoly(&h));
        assert!(match_sets(&ev, &roots) < 1e-8, "{ev:?} vs {roots:?}");
    }

    #[test]
    fn many_random_hessenberg_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=12 {
            for _ in 0..5 {
                let h = DMatrix::from_fn(n, n, |i, j| {
                    if i > j + 1 {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                });
                let ev = hessenberg_eigenvalues(&h).unwrap();
                assert_eq!(ev.len(), n);
                let reference = h.complex_eigenvalues();
                let reference: Vec<Complex64> = reference.iter().copied().collect();
                assert!(match_sets(&ev, &reference) < 1e-8);
                // Trace check.
                let trace: f64 = ev.iter().map(|z| z.re).sum();
                assert!((trace - h.trace()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conjugate_pairs_are_exact_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10;
        let h = DMatrix::from_fn(n, n, |i, j| {
            if i > j + 1 {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let ev = hessenberg_eigenvalues(&h).unwrap();
        for z in ev.iter().filter(|z| z.im != 0.0) {
            assert!(ev.iter().any(|w| w.re == z.re && w.im == -z.im));
        }
        for pair in ev.windows(2) {
            assert!(pair[0].norm() >= pair[1].norm() - 1e-15);
        }
    }

    #[test]
    fn ordering_breaks_ties_by_imaginary_part() {
        let mut v = vec![
            Complex64::new(0.0, -1.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 1.0),
        ];
        sort_eigenvalues(&mut v);
        assert_eq!(v[0], Complex64::new(0.0, 1.0));
        assert_eq!(v[1], Complex64::new(0.0, -1.0));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(hessenberg_eigenvalues(&DMatrix::zeros(0, 0)).is_err());
        assert!(hessenberg_eigenvalues(&DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn eigenvector_of_rotation_contraction() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let a = DMatrix::from_row_slice(2, 2, &[0.97 * c, -0.97 * s, 0.97 * s, 0.97 * c]);
        let mu = Complex64::from_polar(0.97, 0.3);
        let v = eigenvector(&a, mu);
        let ac = a.map(|x| Complex64::new(x, 0.0));
        let res = &ac * &v - &v * mu;
        assert!(res.norm() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormalize_drops_dependent_vectors() {
        let e1 = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let v = DVector::from_column_slice(&[2.0, 0.0, 0.0]);
        assert!(orthonormalize_against(std::slice::from_ref(&e1), &v, 1e-10).is_none());
        let w = DVector::from_column_slice(&[1.0, 1.0, 0.0]);
        let q = orthonormalize_against(std::slice::from_ref(&e1), &w, 1e-10).unwrap();
        assert!(q.dot(&e1).abs() < 1e-15);
        assert!((q.norm() - 1.0).abs() < 1e-15);
    }
}
