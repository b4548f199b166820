//! Small dense solvers for the normal-equation sized systems that show up in
//! IRLS and the W* computation. Matrices here are at most a few dozen wide.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Cholesky factor of a symmetric positive definite matrix, `None` when a
/// pivot falls below `tol` times the largest diagonal entry.
pub fn cholesky(a: ArrayView2<f64>, tol: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tol * scale) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut z = b.to_owned();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    z
}

pub fn cholesky_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    let mut e = Array1::<f64>::zeros(n);
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        let col = cholesky_solve(l, e.view());
        inv.column_mut(j).assign(&col);
    }
    // symmetrize against rounding
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = v;
            inv[[j, i]] = v;
        }
    }
    inv
}

/// Inverse of a general square matrix by Gauss-Jordan with partial pivoting.
pub fn inverse(a: ArrayView2<f64>, tol: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut m = a.to_owned();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, m[[r, col]].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval <= tol * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap([piv, k], [col, k]);
                inv.swap([piv, k], [col, k]);
            }
        }
        let d = m[[col, col]];
        for k in 0..n {
            m[[col, k]] /= d;
            inv[[col, k]] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[[r, col]];
                if f != 0.0 {
                    for k in 0..n {
                        m[[r, k]] -= f * m[[col, k]];
                        inv[[r, k]] -= f * inv[[col, k]];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Weighted cross products `(Z'WZ, Z'Wv)` for a design with an implicit
/// leading intercept column.
pub fn weighted_normal_equations(
    z: ArrayView2<f64>,
    w: &[f64],
    v: &[f64],
) -> (Array2<f64>, Array1<f64>) {
    let q = z.ncols() + 1;
    let mut xtwx = Array2::<f64>::zeros((q, q));
    let mut xtwv = Array1::<f64>::zeros(q);
    let mut row = vec![0.0; q];
    for i in 0..z.nrows() {
        row[0] = 1.0;
        for j in 1..q {
            row[j] = z[[i, j - 1]];
        }
        let wi = w[i];
        for a in 0..q {
            let ra = wi * row[a];
            xtwv[a] += ra * v[i];
            for b in 0..=a {
                xtwx[[a, b]] += ra * row[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            xtwx[[b, a]] = xtwx[[a, b]];
        }
    }
    (xtwx, xtwv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, 2.0, 3.0];
        let l = cholesky(a.view(), 1e-14).unwrap();
        let x = cholesky_solve(&l, b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let inv = cholesky_inverse(&l);
        let id = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[[i, j]] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrices_are_rejected() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(cholesky(a.view(), 1e-12).is_none());
        assert!(inverse(a.view(), 1e-12).is_none());
    }

    #[test]
    fn gauss_jordan_inverse_of_nonsymmetric() {
        let a = array![[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let inv = inverse(a.view(), 1e-14).unwrap();
        let id = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[[i, j]] - e).abs() < 1e-12);
            }
        }
    }
}
