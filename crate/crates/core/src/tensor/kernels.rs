//! Slice-level arithmetic shared by the tape and the cached inference path,
//! so both produce bit-identical values.

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
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

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

// out[r×c] += a[r×k] · b[k×c]
pub fn matmul_acc(out: &mut [f64], a: &[f64], b: &[f64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for (p, &aval) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aval == 0.0 {
                continue;
            }
            for (o, &bval) in orow.iter_mut().zip(&b[p * c..(p + 1) * c]) {
                *o += aval * bval;
            }
        }
    }
}

/// `x · W + b` for row-major `x` (`r×k`), `W` (`k×c`), and bias (`c`).
pub fn affine(x: &[f64], w: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    matmul_acc(&mut out, x, w, r, k, c);
    add_row_bias(&mut out, b);
    out
}

pub fn add_row_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_mut(bias.len().max(1)) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

/// Softmax within groups of entries sharing a segment id.
pub fn segment_softmax(x: &[f64], segment: &[usize]) -> Vec<f64> {
    let nseg = segment.iter().max().map_or(0, |m| m + 1);
    let mut peak = vec![f64::NEG_INFINITY; nseg];
    for (e, &s) in segment.iter().enumerate() {
        peak[s] = peak[s].max(x[e]);
    }
    let mut out: Vec<f64> = segment.iter().enumerate().map(|(e, &s)| (x[e] - peak[s]).exp()).collect();
    let mut total = vec![0.0; nseg];
    for (e, &s) in segment.iter().enumerate() {
        total[s] += out[e];
    }
    for (e, &s) in segment.iter().enumerate() {
        out[e] /= total[s];
    }
    out
}

pub struct LayerNormOut {
    pub out: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm_rows(x: &[f64], r: usize, c: usize, gamma: &[f64], beta: &[f64], eps: f64) -> LayerNormOut {
    let mut xhat = Vec::with_capacity(r * c);
    let mut inv_std = Vec::with_capacity(r);
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = &x[i * c..(i + 1) * c];
        let mut sum = 0.0;
        for v in row {
            sum += v;
        }
        let mean = sum / c as f64;
        let mut var = 0.0;
        for v in row {
            var += (v - mean) * (v - mean);
        }
        let inv = 1.0 / (var / c as f64 + eps).sqrt();
        inv_std.push(inv);
        for (j, &v) in row.iter().enumerate() {
            let h = (v - mean) * inv;
            xhat.push(h);
            out.push(gamma[j] * h + beta[j]);
        }
    }
    LayerNormOut { out, xhat, inv_std }
}

/// `out[i, f] = u[i]ᵀ · W[f] · v[i]` for `W` stored as `f×d×d`.
pub fn bilinear_rows(u: &[f64], w: &[f64], v: &[f64], r: usize, d: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * f];
    let mut tmp = vec![0.0; d];
    for i in 0..r {
        let (ui, vi) = (&u[i * d..(i + 1) * d], &v[i * d..(i + 1) * d]);
        for k in 0..f {
            tmp.fill(0.0);
            matmul_acc(&mut tmp, ui, &w[k * d * d..(k + 1) * d * d], 1, d, d);
            out[i * f + k] = dot(&tmp, vi);
        }
    }
    out
}

/// Column-wise maximum over rows with the first row winning ties.
pub fn max_rows(x: &[f64], r: usize, c: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out = x[..c].to_vec();
    let mut arg = vec![0usize; c];
    for i in 1..r {
        for (j, &v) in x[i * c..(i + 1) * c].iter().enumerate() {
            if v > out[j] {
                out[j] = v;
                arg[j] = i;
            }
        }
    }
    (out, arg)
}

pub fn mean_rows(x: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for row in x.chunks(c.max(1)).take(r) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= r as f64;
    }
    out
}
