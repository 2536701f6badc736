//! Shared numerics: adaptive Gauss-Kronrod quadrature with open endpoints,
//! simplex utilities, compensated summation, and small dense linear algebra.

use crate::error::{Error, Result};

// 15-point Kronrod / 7-point Gauss abscissae and weights on [-1, 1]
// (QUADPACK dqk15 constants). All nodes are interior, so integrands may be
// singular at the endpoints of the integration interval.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod 15-point evaluation on `[a, b]`.
/// Returns the Kronrod estimate and an error estimate.
fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut result_gauss = 0.0;
    let mut result_kronrod = fc * WGK[7];
    let mut result_abs = result_kronrod.abs();
    let mut fv = [0.0f64; 14];

    for j in 0..3 {
        let jtw = 2 * j + 1;
        let absc = half * XGK[jtw];
        let f1 = f(center - absc);
        let f2 = f(center + absc);
        fv[jtw] = f1;
        fv[jtw + 7] = f2;
        result_gauss += WG[j] * (f1 + f2);
        result_kronrod += WGK[jtw] * (f1 + f2);
        result_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    result_gauss += WG[3] * fc;
    for j in 0..4 {
        let jtwm1 = 2 * j;
        let absc = half * XGK[jtwm1];
        let f1 = f(center - absc);
        let f2 = f(center + absc);
        fv[jtwm1] = f1;
        fv[jtwm1 + 7] = f2;
        result_kronrod += WGK[jtwm1] * (f1 + f2);
        result_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }

    let mean = result_kronrod * 0.5;
    let mut result_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        result_asc += WGK[j] * ((fv[j] - mean).abs() + (fv[j + 7] - mean).abs());
    }

    let err = ((result_kronrod - result_gauss) * half).abs();
    let result_abs = result_abs * half.abs();
    let result_asc = result_asc * half.abs();
    let mut scaled_err = err;
    if result_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / result_asc).powf(1.5);
        scaled_err = if scale < 1.0 { result_asc * scale } else { result_asc };
    }
    if result_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled_err = scaled_err.max(50.0 * f64::EPSILON * result_abs);
    }
    (result_kronrod * half, scaled_err)
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

/// Adaptive quadrature of `f` on `[a, b]` to absolute tolerance `abs_tol`.
///
/// Nodes never touch `a` or `b`, so integrable endpoint singularities are
/// handled by subdividing toward the endpoints until the tail contribution
/// is resolved. Non-convergence (e.g. a divergent integral) is reported as
/// a numeric error.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::Argument(format!("bad integration interval [{a}, {b}]")));
    }
    let (v, e) = qk15(&f, a, b);
    if !v.is_finite() {
        return Err(Error::Numeric("integrand evaluated to a non-finite value".into()));
    }
    let mut intervals = vec![Interval { a, b, value: v, err: e }];
    loop {
        let total_err: f64 = intervals.iter().map(|i| i.err).sum();
        if total_err <= abs_tol {
            let mut sum = NeumaierSum::new();
            for i in &intervals {
                sum.add(i.value);
            }
            return Ok(sum.total());
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!(
                "quadrature did not converge: error estimate {total_err:.3e} > {abs_tol:.3e}"
            )));
        }
        // split the interval with the largest error estimate
        let (worst_idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.partial_cmp(&y.1.err).unwrap())
            .unwrap();
        let w = intervals.swap_remove(worst_idx);
        let mid = 0.5 * (w.a + w.b);
        if mid <= w.a || mid >= w.b {
            return Err(Error::Numeric(
                "quadrature interval collapsed below machine precision".into(),
            ));
        }
        let (v1, e1) = qk15(&f, w.a, mid);
        let (v2, e2) = qk15(&f, mid, w.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Numeric("integrand evaluated to a non-finite value".into()));
        }
        intervals.push(Interval { a: w.a, b: mid, value: v1, err: e1 });
        intervals.push(Interval { a: mid, b: w.b, value: v2, err: e2 });
    }
}

/// Neumaier compensated summation; associative enough for deterministic
/// parallel reductions over per-trial statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn csum(xs: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    for &x in xs {
        s.add(x);
    }
    s.total()
}

/// Euclidean projection of `v` onto the probability simplex, by the sorted
/// threshold method.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projection of `v` onto the zero-sum hyperplane `{x : sum(x) = 0}`.
/// Canonical representative of a vector modulo the all-ones direction.
pub fn project_zero_sum(v: &[f64]) -> Vec<f64> {
    let mean = csum(v) / v.len() as f64;
    v.iter().map(|&x| x - mean).collect()
}

/// Solve the dense linear system `A x = b` in place by Gaussian elimination
/// with partial pivoting. `A` is row-major, `n x n`.
pub fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best < 1e-300 {
            return Err(Error::Numeric("singular linear system".into()));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in (row + 1)..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    Ok(x)
}

/// Cholesky factorization of a symmetric positive definite matrix (row-major).
/// Returns the lower triangular factor, or an error if not positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Argument("matrix is not positive definite".into()));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_handles_endpoint_singularity() {
        // integral of x^(-1/2) on (0,1] is 2
        let v = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-9).unwrap();
        assert!((v - 2.0).abs() < 1e-7, "got {v}");
    }

    #[test]
    fn quadrature_detects_divergence() {
        assert!(integrate(|x| 1.0 / x, 0.0, 1.0, 1e-9).is_err());
    }

    #[test]
    fn simplex_projection_basic() {
        let p = project_to_simplex(&[0.5, 0.5]);
        assert!((p[0] - 0.5).abs() < 1e-15);
        let p = project_to_simplex(&[2.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
        let p = project_to_simplex(&[0.4, 0.3, -0.1]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn linear_solve_roundtrip() {
        let mut a = vec![4.0, 1.0, 2.0, 1.0, 5.0, 1.0, 2.0, 1.0, 6.0];
        let mut b = vec![1.0, 2.0, 3.0];
        let x = solve_linear(&mut a.clone(), &mut b, 3).unwrap();
        let a0 = &a;
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a0[i * 3 + j] * x[j]).sum();
            let want = [1.0, 2.0, 3.0][i];
            assert!((r - want).abs() < 1e-12);
        }
        let _ = &mut a;
    }
}
