//! Dense row-major float64 tensors and the forward ops the model graph records.
//!
//! Tensors are immutable values: every op allocates its output. Rank 1 and
//! rank 2 cover everything this crate computes; scalars are shape `[1]`.

use crate::error::{AmuseError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(AmuseError::invalid("tensor", "zero extent"));
        }
        if expected != data.len() {
            return Err(AmuseError::invalid(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; len],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Identity matrix of extent `n`.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Scalar payload of a shape-`[1]` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn require_rank2(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() != 2 {
        return Err(AmuseError::invalid(op, format!("expected rank 2, got shape {:?}", t.shape())));
    }
    Ok(())
}

fn require_rank1(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() != 1 {
        return Err(AmuseError::invalid(op, format!("expected rank 1, got shape {:?}", t.shape())));
    }
    Ok(())
}

/// Standard matrix product of `[m,k]` by `[k,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_rank2("matmul", a)?;
    require_rank2("matmul", b)?;
    if a.cols() != b.rows() {
        return Err(AmuseError::shapes("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    require_rank2("transpose", a)?;
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Row-wise softmax with per-row max subtraction. A rank-1 input is treated
/// as a single row.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (rows, cols) = match x.rank() {
        1 => (1, x.shape()[0]),
        2 => (x.rows(), x.cols()),
        _ => {
            return Err(AmuseError::invalid(
                "softmax_rows",
                format!("expected rank 1 or 2, got shape {:?}", x.shape()),
            ))
        }
    };
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &x.data[r * cols..(r + 1) * cols];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let orow = &mut out[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for (o, &v) in orow.iter_mut().zip(row.iter()) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// `x W + b` with the bias broadcast over rows.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let xw = matmul(x, w)?;
    add_row_broadcast(&xw, b)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(AmuseError::shapes("add", a.shape(), b.shape()));
    }
    let data = a.data.iter().zip(b.data.iter()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|v| v * c).collect(),
    }
}

/// `[m,n] + [n]` broadcast over rows.
pub fn add_row_broadcast(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_rank2("add_row_broadcast", x)?;
    require_rank1("add_row_broadcast", b)?;
    if x.cols() != b.len() {
        return Err(AmuseError::shapes("add_row_broadcast", x.shape(), b.shape()));
    }
    let n = x.cols();
    let data = x
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| v + b.data[i % n])
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

/// Mean of squared differences over all elements.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(AmuseError::shapes("mse_loss", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let sum: f64 = pred
        .data
        .iter()
        .zip(target.data.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n)
}

/// Column-wise mean of `[T,d]`, yielding `[d]`.
pub fn avg_pool_rows(x: &Tensor) -> Result<Tensor> {
    require_rank2("avg_pool_rows", x)?;
    let (t, d) = (x.rows(), x.cols());
    let mut out = vec![0.0; d];
    for r in 0..t {
        for c in 0..d {
            out[c] += x.data[r * d + c];
        }
    }
    for o in out.iter_mut() {
        *o /= t as f64;
    }
    Ok(Tensor::vector(out))
}

/// Concatenation of rank-1 tensors.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(AmuseError::invalid("concat", "no inputs"));
    }
    let mut data = Vec::new();
    for p in parts {
        require_rank1("concat", p)?;
        data.extend_from_slice(&p.data);
    }
    Ok(Tensor::vector(data))
}

/// Stacks rank-1 tensors of equal length into a `[k,d]` matrix.
pub fn stack_rows(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(AmuseError::invalid("stack_rows", "no inputs"));
    }
    let d = parts[0].len();
    let mut data = Vec::with_capacity(parts.len() * d);
    for p in parts {
        require_rank1("stack_rows", p)?;
        if p.len() != d {
            return Err(AmuseError::shapes("stack_rows", &[d], p.shape()));
        }
        data.extend_from_slice(&p.data);
    }
    Tensor::new(vec![parts.len(), d], data)
}

/// `[k] × [k,n] -> [n]`.
pub fn vecmat(v: &Tensor, m: &Tensor) -> Result<Tensor> {
    require_rank1("vecmat", v)?;
    require_rank2("vecmat", m)?;
    if v.len() != m.rows() {
        return Err(AmuseError::shapes("vecmat", v.shape(), m.shape()));
    }
    let n = m.cols();
    let mut out = vec![0.0; n];
    for (k, &vv) in v.data.iter().enumerate() {
        if vv == 0.0 {
            continue;
        }
        let row = &m.data[k * n..(k + 1) * n];
        for (o, &mv) in out.iter_mut().zip(row.iter()) {
            *o += vv * mv;
        }
    }
    Ok(Tensor::vector(out))
}

/// `[m,n] × [n] -> [m]`.
pub fn matvec(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    require_rank2("matvec", m)?;
    require_rank1("matvec", v)?;
    if m.cols() != v.len() {
        return Err(AmuseError::shapes("matvec", m.shape(), v.shape()));
    }
    let n = m.cols();
    let out = (0..m.rows())
        .map(|r| {
            m.data[r * n..(r + 1) * n]
                .iter()
                .zip(v.data.iter())
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    Ok(Tensor::vector(out))
}

/// Per-row layer normalization with learned gain and bias.
pub fn layer_norm_rows(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    require_rank2("layer_norm_rows", x)?;
    require_rank1("layer_norm_rows", gamma)?;
    require_rank1("layer_norm_rows", beta)?;
    let d = x.cols();
    if gamma.len() != d || beta.len() != d {
        return Err(AmuseError::shapes("layer_norm_rows", x.shape(), gamma.shape()));
    }
    let mut out = vec![0.0; x.len()];
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        let orow = &mut out[r * d..(r + 1) * d];
        for c in 0..d {
            orow[c] = (row[c] - mean) * inv * gamma.data[c] + beta.data[c];
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Row lookup: `table[[indices]]` as a new `[len,d]` matrix.
pub fn gather_rows(table: &Tensor, indices: &[usize]) -> Result<Tensor> {
    require_rank2("gather_rows", table)?;
    if indices.is_empty() {
        return Err(AmuseError::invalid("gather_rows", "empty index list"));
    }
    let d = table.cols();
    let mut data = Vec::with_capacity(indices.len() * d);
    for &i in indices {
        if i >= table.rows() {
            return Err(AmuseError::invalid(
                "gather_rows",
                format!("index {} out of range for {} rows", i, table.rows()),
            ));
        }
        data.extend_from_slice(table.row(i));
    }
    Tensor::new(vec![indices.len(), d], data)
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of `logits`.
pub fn cross_entropy_mean(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    require_rank2("cross_entropy_mean", logits)?;
    if targets.len() != logits.rows() {
        return Err(AmuseError::invalid(
            "cross_entropy_mean",
            format!("{} targets for {} rows", targets.len(), logits.rows()),
        ));
    }
    let probs = softmax_rows(logits)?;
    let mut sum = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= logits.cols() {
            return Err(AmuseError::invalid(
                "cross_entropy_mean",
                format!("target {} out of range for {} classes", t, logits.cols()),
            ));
        }
        sum -= probs.at(r, t).max(1e-300).ln();
    }
    Ok(sum / targets.len() as f64)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent triple-loop product used as the matmul oracle.
    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.at(i, p) * b.at(p, j);
                }
                out.data_mut()[i * n + j] = s;
            }
        }
        out
    }

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matmul_identity_leaves_input() {
        let a = seeded(&[2, 2], 1);
        let out = matmul(&Tensor::eye(2), &a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_hand_checked_2x2() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
        let out = matmul(&a, &b).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let a = seeded(&[5, 7], 2);
        let b = seeded(&[7, 3], 3);
        let got = matmul(&a, &b).unwrap();
        let want = matmul_oracle(&a, &b);
        for (g, w) in got.data().iter().zip(want.data().iter()) {
            assert!((g - w).abs() < 1e-12, "{} vs {}", g, w);
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = seeded(&[2, 3], 4);
        let b = seeded(&[4, 2], 5);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{}", err);
    }

    #[test]
    fn softmax_uniform_row() {
        let out = softmax_rows(&Tensor::vector(vec![0.0, 0.0, 0.0])).unwrap();
        for v in out.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_values_stay_finite() {
        let out = softmax_rows(&Tensor::vector(vec![1000.0, 0.0])).unwrap();
        assert!(out.all_finite());
        assert!(out.data()[0] > 1.0 - 1e-12);
        assert!(out.data()[1] < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let out = softmax_rows(&x).unwrap();
        let z: f64 = x.data().iter().map(|v| v.exp()).sum();
        for (o, v) in out.data().iter().zip(x.data().iter()) {
            assert!((o - v.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_identity_and_zero_cases() {
        let x = seeded(&[3, 4], 6);
        let out = linear_forward(&x, &Tensor::eye(4), &Tensor::zeros(&[4])).unwrap();
        for (a, b) in out.data().iter().zip(x.data().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let b = seeded(&[4], 7);
        let out = linear_forward(&Tensor::zeros(&[3, 4]), &Tensor::eye(4), &b).unwrap();
        for r in 0..3 {
            assert_eq!(out.row(r), b.data());
        }
    }

    #[test]
    fn linear_matches_composed_oracle() {
        let x = seeded(&[3, 4], 8);
        let w = seeded(&[4, 2], 9);
        let b = seeded(&[2], 10);
        let got = linear_forward(&x, &w, &b).unwrap();
        let xw = matmul_oracle(&x, &w);
        for r in 0..3 {
            for c in 0..2 {
                assert!((got.at(r, c) - (xw.at(r, c) + b.data()[c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mse_trivial_values() {
        let p = seeded(&[2, 3], 11);
        assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
        let t = Tensor::zeros(&[4]);
        let ones = Tensor::filled(&[4], 1.0);
        assert!((mse_loss(&ones, &t).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let p = seeded(&[3, 3], 12);
        let t = seeded(&[3, 3], 13);
        let mut sum = 0.0;
        for i in 0..p.len() {
            let d = p.data()[i] - t.data()[i];
            sum += d * d;
        }
        assert!((mse_loss(&p, &t).unwrap() - sum / 9.0).abs() < 1e-12);
    }

    #[test]
    fn avg_pool_trivial_cases() {
        let v = vec![1.0, -2.0, 0.5];
        let rows = Tensor::matrix(3, 3, [v.clone(), v.clone(), v.clone()].concat()).unwrap();
        assert_eq!(avg_pool_rows(&rows).unwrap().data(), &v[..]);
        let anti = Tensor::matrix(2, 3, [v.clone(), v.iter().map(|x| -x).collect()].concat()).unwrap();
        for x in avg_pool_rows(&anti).unwrap().data() {
            assert!(x.abs() < 1e-15);
        }
    }

    #[test]
    fn avg_pool_matches_columnwise_mean() {
        let x = seeded(&[4, 3], 14);
        let got = avg_pool_rows(&x).unwrap();
        for c in 0..3 {
            let want = (0..4).map(|r| x.at(r, c)).sum::<f64>() / 4.0;
            assert!((got.data()[c] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn vecmat_matvec_agree_with_matmul() {
        let v = seeded(&[4], 15);
        let m = seeded(&[4, 3], 16);
        let got = vecmat(&v, &m).unwrap();
        let asrow = Tensor::matrix(1, 4, v.data().to_vec()).unwrap();
        let want = matmul_oracle(&asrow, &m);
        for (g, w) in got.data().iter().zip(want.data().iter()) {
            assert!((g - w).abs() < 1e-12);
        }
        let mv = matvec(&m, &seeded(&[3], 17)).unwrap();
        assert_eq!(mv.len(), 4);
    }

    #[test]
    fn layer_norm_rows_zero_mean_unit_var() {
        let x = seeded(&[3, 8], 18);
        let out = layer_norm_rows(&x, &Tensor::filled(&[8], 1.0), &Tensor::zeros(&[8]), 1e-5).unwrap();
        for r in 0..3 {
            let row = out.row(r);
            let mean = row.iter().sum::<f64>() / 8.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn cross_entropy_of_one_hot_logits_is_small() {
        let logits = Tensor::matrix(1, 3, vec![20.0, 0.0, 0.0]).unwrap();
        assert!(cross_entropy_mean(&logits, &[0]).unwrap() < 1e-8);
        let uniform = Tensor::matrix(1, 4, vec![0.0; 4]).unwrap();
        assert!((cross_entropy_mean(&uniform, &[2]).unwrap() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gather_rows_picks_rows() {
        let t = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let g = gather_rows(&t, &[2, 0, 2]).unwrap();
        assert_eq!(g.data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        assert!(gather_rows(&t, &[3]).is_err());
    }
}
