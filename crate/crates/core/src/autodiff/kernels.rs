//! Dense row-major kernels shared by the tape and by the tape-free inference path.

/// Row-major view description for one GEMM operand.
#[derive(Clone, Copy)]
struct Operand<'a> {
    data: &'a [f64],
    row_stride: isize,
    col_stride: isize,
}

/// `out (m×n) += lhs (m×k) · rhs (k×n)`, with either operand optionally read transposed
/// from its row-major storage.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    lhs: Operand<'_>,
    rhs: Operand<'_>,
    out: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    // SAFETY: every operand slice covers the strided extent described to dgemm:
    // callers pass lengths m*k, k*n and m*n which bound all addressed elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            lhs.data.as_ptr(),
            lhs.row_stride,
            lhs.col_stride,
            rhs.data.as_ptr(),
            rhs.row_stride,
            rhs.col_stride,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `a (m×k) · b (k×n)`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    gemm_acc(
        m,
        k,
        n,
        Operand { data: a, row_stride: k as isize, col_stride: 1 },
        Operand { data: b, row_stride: n as isize, col_stride: 1 },
        &mut out,
        0.0,
    );
    out
}

/// `out (m×k) += g (m×n) · bᵀ` where `b` is stored as k×n.
pub fn matmul_nt_acc(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    assert_eq!(g.len(), m * n);
    assert_eq!(b.len(), k * n);
    gemm_acc(
        m,
        n,
        k,
        Operand { data: g, row_stride: n as isize, col_stride: 1 },
        Operand { data: b, row_stride: 1, col_stride: n as isize },
        out,
        1.0,
    );
}

/// `out (k×n) += aᵀ · g (m×n)` where `a` is stored as m×k.
pub fn matmul_tn_acc(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(g.len(), m * n);
    gemm_acc(
        k,
        m,
        n,
        Operand { data: a, row_stride: 1, col_stride: k as isize },
        Operand { data: g, row_stride: n as isize, col_stride: 1 },
        out,
        1.0,
    );
}

/// `x (m×n) + bias (1×n)` broadcast over rows.
pub fn add_bias(x: &[f64], bias: &[f64], cols: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    add_bias_in_place(&mut out, bias, cols);
    out
}

pub fn add_bias_in_place(x: &mut [f64], bias: &[f64], cols: usize) {
    debug_assert_eq!(bias.len(), cols);
    for row in x.chunks_exact_mut(cols) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Horizontal concatenation of `a (m×p)` and `b (m×q)`.
pub fn concat_cols(a: &[f64], p: usize, b: &[f64], q: usize) -> Vec<f64> {
    let rows = if p > 0 { a.len() / p } else { b.len() / q.max(1) };
    let mut out = Vec::with_capacity(rows * (p + q));
    for r in 0..rows {
        out.extend_from_slice(&a[r * p..(r + 1) * p]);
        out.extend_from_slice(&b[r * q..(r + 1) * q]);
    }
    out
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eˣ)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
