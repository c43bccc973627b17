//! Row-major dense kernels on top of `matrixmultiply`.

/// `c[m×n] = beta·c + a[m×k] · b[k×n]`
pub fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slices cover the strided extents asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[k×n] += aᵀ · b` where `a` is `m×k` and `b` is `m×n`.
pub fn matmul_at_b_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= m * n && c.len() >= k * n);
    if k == 0 || n == 0 {
        return;
    }
    // SAFETY: `a` is read through its transpose strides (1, k) over an m×k buffer.
    unsafe {
        matrixmultiply::dgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m×k] += a · bᵀ` where `a` is `m×n` and `b` is `k×n`.
pub fn matmul_a_bt_acc(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * n && b.len() >= k * n && c.len() >= m * k);
    if m == 0 || k == 0 {
        return;
    }
    // SAFETY: `b` is read through its transpose strides (1, n) over a k×n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            n,
            k,
            1.0,
            a.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            1.0,
            c.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

pub fn add_row_bias(rows: usize, cols: usize, x: &mut [f64], bias: &[f64]) {
    for r in 0..rows {
        for (v, b) in x[r * cols..(r + 1) * cols].iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub fn col_sum_acc(rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&x[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
}

pub const LN_EPS: f64 = 1e-5;

pub fn layer_norm(
    rows: usize,
    d: usize,
    x: &[f64],
    g: &[f64],
    b: &[f64],
    out: &mut [f64],
    mean: &mut [f64],
    rstd: &mut [f64],
) {
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mu = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        mean[r] = mu;
        rstd[r] = rs;
        for (i, o) in out[r * d..(r + 1) * d].iter_mut().enumerate() {
            *o = (xr[i] - mu) * rs * g[i] + b[i];
        }
    }
}

/// Accumulates input, gain and bias gradients of a layer norm.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward(
    rows: usize,
    d: usize,
    dout: &[f64],
    x: &[f64],
    g: &[f64],
    mean: &[f64],
    rstd: &[f64],
    dx: &mut [f64],
    dg: &mut [f64],
    db: &mut [f64],
) {
    let n = d as f64;
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let dor = &dout[r * d..(r + 1) * d];
        let (mu, rs) = (mean[r], rstd[r]);
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for i in 0..d {
            let xhat = (xr[i] - mu) * rs;
            let dxhat = dor[i] * g[i];
            dg[i] += dor[i] * xhat;
            db[i] += dor[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        for i in 0..d {
            let xhat = (xr[i] - mu) * rs;
            let dxhat = dor[i] * g[i];
            dx[r * d + i] += rs * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

pub fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

/// In-place log-softmax of one row; returns the log partition.
pub fn log_softmax(row: &mut [f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
    lse
}
