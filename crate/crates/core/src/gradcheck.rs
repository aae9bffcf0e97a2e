//! Finite-difference oracles for checking analytic gradients and Jacobians.

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = f(&p);
            p[i] = orig - h;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Relative error with an absolute floor so near-zero gradients compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central-difference Jacobian of `f: R^n → R^m`, returned row-major `m × n`.
pub fn fd_jacobian(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let n = x.len();
    let m = f(x).len();
    let mut jac = vec![vec![0.0; n]; m];
    let mut p = x.to_vec();
    for j in 0..n {
        let orig = p[j];
        p[j] = orig + h;
        let fp = f(&p);
        p[j] = orig - h;
        let fm = f(&p);
        p[j] = orig;
        for i in 0..m {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// log|det A| by Gaussian elimination with partial pivoting.
pub fn log_abs_det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, piv);
        let d = a[k][k];
        acc += d.abs().ln();
        for i in k + 1..n {
            let f = a[i][k] / d;
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    acc
}
