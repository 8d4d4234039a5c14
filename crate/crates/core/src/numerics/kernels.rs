//! Forward kernels shared by the tape and by the plain-tensor code paths.
//!
//! All matrices are row-major slices with explicit dimensions.

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `a[n×k] · b[k×m]`
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[n×k] · b[m×k]ᵀ`
pub fn matmul_nt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            out[i * m + j] = dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
    out
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn log_softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + src.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s - lse;
        }
    }
    out
}

pub fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            sum += *d;
        }
        dst.iter_mut().for_each(|d| *d /= sum);
    }
    out
}

/// Returns `(output, per-row mean, per-row reciprocal std)`.
pub fn layer_norm_rows(
    x: &[f64],
    cols: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / cols;
    let mut out = vec![0.0; x.len()];
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    for (src, dst) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let mean = src.iter().sum::<f64>() / cols as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let rstd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for j in 0..cols {
            dst[j] = (src[j] - mean) * rstd * gamma[j] + beta[j];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (out, means, rstds)
}

/// Depthwise 1-D convolution over time with zero "same" padding.
/// `x` is `T×C`, `kernel` is `K×C`, `bias` is `C`.
pub fn depthwise_conv(x: &[f64], kernel: &[f64], bias: &[f64], t: usize, c: usize) -> Vec<f64> {
    let k = kernel.len() / c;
    let pad = (k - 1) / 2;
    let mut out = vec![0.0; t * c];
    for ti in 0..t {
        let orow = &mut out[ti * c..(ti + 1) * c];
        orow.copy_from_slice(bias);
        for ki in 0..k {
            let src = ti as isize + ki as isize - pad as isize;
            if src < 0 || src >= t as isize {
                continue;
            }
            let xrow = &x[src as usize * c..(src as usize + 1) * c];
            let krow = &kernel[ki * c..(ki + 1) * c];
            for j in 0..c {
                orow[j] += krow[j] * xrow[j];
            }
        }
    }
    out
}

/// A fixed linear map over rows: each output row is a weighted sum of
/// input rows. Interpolation, pooling, upsampling, time warping and
/// time masking are all expressed this way.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMix {
    pub n_in: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl RowMix {
    pub fn identity(n: usize) -> Self {
        Self {
            n_in: n,
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    pub fn n_out(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, x: &[f64], cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len() * cols];
        for (dst, terms) in out.chunks_mut(cols).zip(&self.rows) {
            if let [(src, w)] = terms.as_slice() {
                if *w == 1.0 {
                    dst.copy_from_slice(&x[src * cols..(src + 1) * cols]);
                    continue;
                }
            }
            for &(src, w) in terms {
                let xrow = &x[src * cols..(src + 1) * cols];
                for (d, v) in dst.iter_mut().zip(xrow) {
                    *d += w * v;
                }
            }
        }
        out
    }

    /// Linear interpolation onto `n_out` points, where output row `j`
    /// samples input position `pos(j)`; positions are clamped to the
    /// valid range.
    pub fn linear(n_in: usize, n_out: usize, pos: impl Fn(usize) -> f64) -> Self {
        let last = n_in.saturating_sub(1);
        let rows = (0..n_out)
            .map(|j| {
                let p = pos(j).clamp(0.0, last as f64);
                let i0 = p.floor() as usize;
                let frac = p - i0 as f64;
                let i1 = (i0 + 1).min(last);
                if frac == 0.0 || i1 == i0 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - frac), (i1, frac)]
                }
            })
            .collect();
        Self { n_in, rows }
    }

    /// Mean-pools consecutive groups of `factor` rows; the last group may be short.
    pub fn mean_pool(n_in: usize, factor: usize) -> Self {
        let n_out = n_in.div_ceil(factor);
        let rows = (0..n_out)
            .map(|j| {
                let lo = j * factor;
                let hi = ((j + 1) * factor).min(n_in);
                let w = 1.0 / (hi - lo) as f64;
                (lo..hi).map(|i| (i, w)).collect()
            })
            .collect();
        Self { n_in, rows }
    }

    /// Nearest-neighbour upsampling that inverts [`RowMix::mean_pool`].
    pub fn repeat(n_in: usize, factor: usize, n_out: usize) -> Self {
        let rows = (0..n_out)
            .map(|j| vec![((j / factor).min(n_in - 1), 1.0)])
            .collect();
        Self { n_in, rows }
    }
}

/// `ln(eᵃ + eᵇ)` without overflow; `-inf` is the identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ eˣ` over a slice; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
