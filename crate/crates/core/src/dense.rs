//! Safe row-major wrappers over `matrixmultiply::dgemm`.
//!
//! Every matrix here is a contiguous row-major slice; shapes are passed
//! explicitly and checked against slice lengths before the unsafe call.

fn check(len: usize, rows: usize, cols: usize, what: &str) {
    assert!(len >= rows * cols, "{what}: buffer of {len} too small for {rows}x{cols}");
}

/// `c = a · bᵀ + beta·c` with `a: m×k`, `b: n×k`, `c: m×n`.
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    check(a.len(), m, k, "a");
    check(b.len(), n, k, "b");
    check(c.len(), m, n, "c");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds checked above; strides describe row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = aᵀ · b + beta·c` with `a: k×m`, `b: k×n`, `c: m×n`.
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    check(a.len(), k, m, "a");
    check(b.len(), k, n, "b");
    check(c.len(), m, n, "c");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = a · b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n`.
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    check(a.len(), m, k, "a");
    check(b.len(), k, n, "b");
    check(c.len(), m, n, "c");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_naive() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        gemm_nn(2, 3, 2, &a, &b, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);

        // a · aᵀ
        let mut c = [0.0; 4];
        gemm_nt(2, 3, 2, &a, &a, 0.0, &mut c);
        assert_eq!(c, [14.0, 32.0, 32.0, 77.0]);

        // aᵀ · a accumulated twice
        let mut c = [0.0; 9];
        gemm_tn(3, 2, 3, &a, &a, 0.0, &mut c);
        gemm_tn(3, 2, 3, &a, &a, 1.0, &mut c);
        assert_eq!(c, [34.0, 44.0, 54.0, 44.0, 58.0, 72.0, 54.0, 72.0, 90.0]);
    }
}
