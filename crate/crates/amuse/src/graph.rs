//! Reverse-mode tape over the forward ops in [`crate::tensor`].
//!
//! A [`Graph`] records one forward pass as an append-only node list; ids are
//! topologically ordered by construction, so backward is a single reverse
//! sweep. The op vocabulary is exactly what the model needs — this is not a
//! general autodiff system.

use crate::error::{AmuseError, Result};
use crate::tensor::{self, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Value, Value),
    Transpose(Value),
    Add(Value, Value),
    AddRow(Value, Value),
    Scale(Value, f64),
    Relu(Value),
    SoftmaxRows(Value),
    LayerNorm { x: Value, gamma: Value, beta: Value, eps: f64 },
    AvgPool(Value),
    Concat(Vec<Value>),
    StackRows(Vec<Value>),
    VecMat(Value, Value),
    MatVec(Value, Value),
    GatherRows { table: Value, indices: Vec<usize> },
    Mse(Value, Value),
    CrossEntropyMean { logits: Value, targets: Vec<usize> },
    /// Externally computed value embedded in the graph. Forward-only: there
    /// is no gradient rule, so backward through it is an error.
    Opaque { name: String },
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Value {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
            needs_grad,
        });
        Value(self.nodes.len() - 1)
    }

    fn needs(&self, v: Value) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn any_needs(&self, vs: &[Value]) -> bool {
        vs.iter().any(|v| self.needs(*v))
    }

    /// Constant input: gradients are not tracked through it.
    pub fn input(&mut self, t: Tensor) -> Value {
        self.push(Op::Leaf, t, false)
    }

    /// Trainable leaf: receives a gradient on backward.
    pub fn param(&mut self, t: Tensor) -> Value {
        self.push(Op::Leaf, t, true)
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass, zero-filled for untouched leaves.
    pub fn grad(&self, v: Value) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"),
            None => Tensor::zeros(node.value.shape()),
        }
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        let ng = self.any_needs(&[a, b]);
        Ok(self.push(Op::Matmul(a, b), out, ng))
    }

    pub fn transpose(&mut self, a: Value) -> Result<Value> {
        let out = tensor::transpose(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Op::Transpose(a), out, ng))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        let out = tensor::add(self.value(a), self.value(b))?;
        let ng = self.any_needs(&[a, b]);
        Ok(self.push(Op::Add(a, b), out, ng))
    }

    /// Matrix plus row-broadcast bias.
    pub fn add_row(&mut self, x: Value, bias: Value) -> Result<Value> {
        let out = tensor::add_row_broadcast(self.value(x), self.value(bias))?;
        let ng = self.any_needs(&[x, bias]);
        Ok(self.push(Op::AddRow(x, bias), out, ng))
    }

    pub fn scale(&mut self, a: Value, c: f64) -> Value {
        let out = tensor::scale(self.value(a), c);
        let ng = self.needs(a);
        self.push(Op::Scale(a, c), out, ng)
    }

    pub fn relu(&mut self, a: Value) -> Value {
        let out = tensor::relu(self.value(a));
        let ng = self.needs(a);
        self.push(Op::Relu(a), out, ng)
    }

    pub fn softmax_rows(&mut self, a: Value) -> Result<Value> {
        let out = tensor::softmax_rows(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Op::SoftmaxRows(a), out, ng))
    }

    pub fn layer_norm(&mut self, x: Value, gamma: Value, beta: Value, eps: f64) -> Result<Value> {
        let out = tensor::layer_norm_rows(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let ng = self.any_needs(&[x, gamma, beta]);
        Ok(self.push(Op::LayerNorm { x, gamma, beta, eps }, out, ng))
    }

    pub fn avg_pool(&mut self, a: Value) -> Result<Value> {
        let out = tensor::avg_pool_rows(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Op::AvgPool(a), out, ng))
    }

    pub fn concat(&mut self, parts: &[Value]) -> Result<Value> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let out = tensor::concat(&tensors)?;
        let ng = self.any_needs(parts);
        Ok(self.push(Op::Concat(parts.to_vec()), out, ng))
    }

    pub fn stack_rows(&mut self, parts: &[Value]) -> Result<Value> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let out = tensor::stack_rows(&tensors)?;
        let ng = self.any_needs(parts);
        Ok(self.push(Op::StackRows(parts.to_vec()), out, ng))
    }

    pub fn vecmat(&mut self, v: Value, m: Value) -> Result<Value> {
        let out = tensor::vecmat(self.value(v), self.value(m))?;
        let ng = self.any_needs(&[v, m]);
        Ok(self.push(Op::VecMat(v, m), out, ng))
    }

    pub fn matvec(&mut self, m: Value, v: Value) -> Result<Value> {
        let out = tensor::matvec(self.value(m), self.value(v))?;
        let ng = self.any_needs(&[m, v]);
        Ok(self.push(Op::MatVec(m, v), out, ng))
    }

    pub fn gather_rows(&mut self, table: Value, indices: &[usize]) -> Result<Value> {
        let out = tensor::gather_rows(self.value(table), indices)?;
        let ng = self.needs(table);
        Ok(self.push(
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
            },
            out,
            ng,
        ))
    }

    pub fn mse(&mut self, pred: Value, target: Value) -> Result<Value> {
        let loss = tensor::mse_loss(self.value(pred), self.value(target))?;
        let ng = self.any_needs(&[pred, target]);
        Ok(self.push(Op::Mse(pred, target), Tensor::scalar(loss), ng))
    }

    pub fn cross_entropy_mean(&mut self, logits: Value, targets: &[usize]) -> Result<Value> {
        let loss = tensor::cross_entropy_mean(self.value(logits), targets)?;
        let ng = self.needs(logits);
        Ok(self.push(
            Op::CrossEntropyMean {
                logits,
                targets: targets.to_vec(),
            },
            Tensor::scalar(loss),
            ng,
        ))
    }

    /// Embeds an externally computed tensor that depends on `inputs`.
    /// Forward-only; backward through it fails with an unsupported-op error.
    pub fn opaque(&mut self, name: &str, inputs: &[Value], value: Tensor) -> Value {
        let ng = self.any_needs(inputs);
        self.push(Op::Opaque { name: name.to_string() }, value, ng)
    }

    fn add_grad(&mut self, v: Value, delta: &[f64]) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let node = &mut self.nodes[v.0];
        let g = node.grad.get_or_insert_with(|| vec![0.0; node.value.len()]);
        for (a, b) in g.iter_mut().zip(delta.iter()) {
            *a += b;
        }
    }

    /// Reverse sweep from `loss` (must be a `[1]` scalar). Fills gradients on
    /// every reachable node that needs them; leaves never touched by the
    /// sweep read back as zero via [`Graph::grad`].
    pub fn backward(&mut self, loss: Value) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(AmuseError::invalid("backward", "loss must be a scalar"));
        }
        for n in self.nodes.iter_mut() {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let grad = match self.nodes[i].grad.clone() {
                Some(g) => g,
                None => continue,
            };
            // Clone op descriptor so we can mutate node grads below.
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let g = Tensor::new(self.nodes[i].value.shape().to_vec(), grad)?;
                    if self.needs(a) {
                        let bt = tensor::transpose(self.value(b))?;
                        let da = tensor::matmul(&g, &bt)?;
                        self.add_grad(a, da.data());
                    }
                    if self.needs(b) {
                        let at = tensor::transpose(self.value(a))?;
                        let db = tensor::matmul(&at, &g)?;
                        self.add_grad(b, db.data());
                    }
                }
                Op::Transpose(a) => {
                    let g = Tensor::new(self.nodes[i].value.shape().to_vec(), grad)?;
                    let da = tensor::transpose(&g)?;
                    self.add_grad(a, da.data());
                }
                Op::Add(a, b) => {
                    self.add_grad(a, &grad);
                    self.add_grad(b, &grad);
                }
                Op::AddRow(x, bias) => {
                    self.add_grad(x, &grad);
                    if self.needs(bias) {
                        let n = self.value(bias).len();
                        let mut db = vec![0.0; n];
                        for (k, gv) in grad.iter().enumerate() {
                            db[k % n] += gv;
                        }
                        self.add_grad(bias, &db);
                    }
                }
                Op::Scale(a, c) => {
                    let da: Vec<f64> = grad.iter().map(|g| g * c).collect();
                    self.add_grad(a, &da);
                }
                Op::Relu(a) => {
                    let da: Vec<f64> = self
                        .value(a)
                        .data()
                        .iter()
                        .zip(grad.iter())
                        .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.add_grad(a, &da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let cols = *y.shape().last().expect("softmax rank");
                    let rows = y.len() / cols;
                    let mut da = vec![0.0; y.len()];
                    for r in 0..rows {
                        let ys = &y.data()[r * cols..(r + 1) * cols];
                        let gs = &grad[r * cols..(r + 1) * cols];
                        let dot: f64 = ys.iter().zip(gs.iter()).map(|(y, g)| y * g).sum();
                        for c in 0..cols {
                            da[r * cols + c] = ys[c] * (gs[c] - dot);
                        }
                    }
                    self.add_grad(a, &da);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let xv = self.value(x).clone();
                    let gv = self.value(gamma).clone();
                    let d = xv.cols();
                    let mut dx = vec![0.0; xv.len()];
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    for r in 0..xv.rows() {
                        let row = xv.row(r);
                        let mean = row.iter().sum::<f64>() / d as f64;
                        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let go = &grad[r * d..(r + 1) * d];
                        // dy = grad wrt normalized value, before gain
                        let norm: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let dy: Vec<f64> = go.iter().zip(gv.data().iter()).map(|(g, gm)| g * gm).collect();
                        let mean_dy = dy.iter().sum::<f64>() / d as f64;
                        let mean_dy_norm =
                            dy.iter().zip(norm.iter()).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for c in 0..d {
                            dx[r * d + c] = inv * (dy[c] - mean_dy - norm[c] * mean_dy_norm);
                            dgamma[c] += go[c] * norm[c];
                            dbeta[c] += go[c];
                        }
                    }
                    self.add_grad(x, &dx);
                    self.add_grad(gamma, &dgamma);
                    self.add_grad(beta, &dbeta);
                }
                Op::AvgPool(a) => {
                    let t = self.value(a).rows();
                    let d = self.value(a).cols();
                    let mut da = vec![0.0; t * d];
                    for r in 0..t {
                        for c in 0..d {
                            da[r * d + c] = grad[c] / t as f64;
                        }
                    }
                    self.add_grad(a, &da);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.value(p).len();
                        let slice = grad[off..off + len].to_vec();
                        self.add_grad(p, &slice);
                        off += len;
                    }
                }
                Op::StackRows(parts) => {
                    let d = self.value(parts[0]).len();
                    for (k, p) in parts.iter().enumerate() {
                        let slice = grad[k * d..(k + 1) * d].to_vec();
                        self.add_grad(*p, &slice);
                    }
                }
                Op::VecMat(v, m) => {
                    // out[n] = sum_k v[k] m[k,n]
                    let vv = self.value(v).clone();
                    let mv = self.value(m).clone();
                    let (k, n) = (mv.rows(), mv.cols());
                    if self.needs(v) {
                        let mut dv = vec![0.0; k];
                        for ki in 0..k {
                            dv[ki] = mv.row(ki).iter().zip(grad.iter()).map(|(a, g)| a * g).sum();
                        }
                        self.add_grad(v, &dv);
                    }
                    if self.needs(m) {
                        let mut dm = vec![0.0; k * n];
                        for ki in 0..k {
                            for ni in 0..n {
                                dm[ki * n + ni] = vv.data()[ki] * grad[ni];
                            }
                        }
                        self.add_grad(m, &dm);
                    }
                }
                Op::MatVec(m, v) => {
                    // out[r] = sum_n m[r,n] v[n]
                    let mv = self.value(m).clone();
                    let vv = self.value(v).clone();
                    let (rws, n) = (mv.rows(), mv.cols());
                    if self.needs(m) {
                        let mut dm = vec![0.0; rws * n];
                        for r in 0..rws {
                            for c in 0..n {
                                dm[r * n + c] = grad[r] * vv.data()[c];
                            }
                        }
                        self.add_grad(m, &dm);
                    }
                    if self.needs(v) {
                        let mut dv = vec![0.0; n];
                        for r in 0..rws {
                            for c in 0..n {
                                dv[c] += mv.at(r, c) * grad[r];
                            }
                        }
                        self.add_grad(v, &dv);
                    }
                }
                Op::GatherRows { table, indices } => {
                    if self.needs(table) {
                        let d = self.value(table).cols();
                        let mut dt = vec![0.0; self.value(table).len()];
                        for (k, &idx) in indices.iter().enumerate() {
                            for c in 0..d {
                                dt[idx * d + c] += grad[k * d + c];
                            }
                        }
                        self.add_grad(table, &dt);
                    }
                }
                Op::Mse(pred, target) => {
                    let g = grad[0];
                    let p = self.value(pred).clone();
                    let t = self.value(target).clone();
                    let n = p.len() as f64;
                    if self.needs(pred) {
                        let dp: Vec<f64> = p
                            .data()
                            .iter()
                            .zip(t.data().iter())
                            .map(|(pv, tv)| 2.0 * (pv - tv) / n * g)
                            .collect();
                        self.add_grad(pred, &dp);
                    }
                    if self.needs(target) {
                        let dt: Vec<f64> = p
                            .data()
                            .iter()
                            .zip(t.data().iter())
                            .map(|(pv, tv)| -2.0 * (pv - tv) / n * g)
                            .collect();
                        self.add_grad(target, &dt);
                    }
                }
                Op::CrossEntropyMean { logits, targets } => {
                    let g = grad[0];
                    let probs = tensor::softmax_rows(self.value(logits))?;
                    let rows = probs.rows();
                    let cols = probs.cols();
                    let mut dl = probs.into_data();
                    for (r, &t) in targets.iter().enumerate() {
                        dl[r * cols + t] -= 1.0;
                    }
                    for v in dl.iter_mut() {
                        *v *= g / rows as f64;
                    }
                    self.add_grad(logits, &dl);
                }
                Op::Opaque { name, .. } => {
                    return Err(AmuseError::UnsupportedOp { op: name });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn scalar_mse_derivative_is_analytic() {
        // loss = mse(x, 0) with x = [3] -> dloss/dx = 2*3/1 = 6
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let zero = g.input(Tensor::scalar(0.0));
        let loss = g.mse(x, zero).unwrap();
        g.backward(loss).unwrap();
        assert!((g.grad(x).data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_leaves_zero_grads() {
        let mut g = Graph::new();
        let x = g.param(seeded(&[2, 2], 1));
        let c = g.input(Tensor::scalar(5.0));
        let c2 = g.scale(c, 2.0);
        let loss = g.mse(c2, c).unwrap();
        g.backward(loss).unwrap();
        // x untouched by the loss: zero gradient
        assert_eq!(g.grad(x).data(), &[0.0; 4]);
    }

    #[test]
    fn opaque_node_on_grad_path_is_unsupported() {
        let mut g = Graph::new();
        let x = g.param(seeded(&[2], 2));
        let ext = tensor::relu(g.value(x));
        let o = g.opaque("external-feature", &[x], ext);
        let zero = g.input(Tensor::zeros(&[2]));
        let loss = g.mse(o, zero).unwrap();
        let err = g.backward(loss).unwrap_err();
        assert!(matches!(err, AmuseError::UnsupportedOp { .. }));
    }

    /// Central finite differences on a scalar-valued rebuild of the graph.
    fn fd_check<F>(build: F, leaves: &[Tensor], tol: f64)
    where
        F: Fn(&mut Graph, &[Value]) -> Value,
    {
        let h = 1e-5;
        // analytic grads
        let mut g = Graph::new();
        let ids: Vec<Value> = leaves.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &ids);
        assert_eq!(g.value(loss).len(), 1, "fd_check needs scalar loss");
        g.backward(loss).unwrap();
        let analytic: Vec<Tensor> = ids.iter().map(|v| g.grad(*v)).collect();

        for (li, leaf) in leaves.iter().enumerate() {
            for e in 0..leaf.len() {
                let mut plus = leaves.to_vec();
                plus[li].data_mut()[e] += h;
                let mut minus = leaves.to_vec();
                minus[li].data_mut()[e] -= h;
                let eval = |ts: &[Tensor]| {
                    let mut g = Graph::new();
                    let ids: Vec<Value> = ts.iter().map(|t| g.param(t.clone())).collect();
                    let loss = build(&mut g, &ids);
                    g.value(loss).data()[0]
                };
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = analytic[li].data()[e];
                let denom = fd.abs().max(an.abs()).max(1e-3);
                assert!(
                    (fd - an).abs() / denom < tol,
                    "leaf {} elem {}: fd {} vs analytic {}",
                    li,
                    e,
                    fd,
                    an
                );
            }
        }
    }

    #[test]
    fn linear_relu_mse_matches_finite_differences() {
        let x = seeded(&[3, 4], 3);
        let w = seeded(&[4, 2], 4);
        let b = seeded(&[2], 5);
        let target = seeded(&[3, 2], 6);
        fd_check(
            |g, ids| {
                let t = g.input(target.clone());
                let xw = g.matmul(ids[0], ids[1]).unwrap();
                let lin = g.add_row(xw, ids[2]).unwrap();
                let act = g.relu(lin);
                g.mse(act, t).unwrap()
            },
            &[x, w, b],
            1e-4,
        );
    }

    /// Every registered op, finite-difference checked over many seeds.
    #[test]
    fn all_ops_match_finite_differences_over_seeds() {
        for seed in 0..110u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 7 + 1);
            let mut t = |shape: &[usize]| {
                let len: usize = shape.iter().product();
                Tensor::new(
                    shape.to_vec(),
                    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(),
                )
                .unwrap()
            };
            match seed % 11 {
                0 => fd_check(
                    |g, ids| {
                        let m = g.matmul(ids[0], ids[1]).unwrap();
                        let z = g.input(Tensor::zeros(&[2, 2]));
                        g.mse(m, z).unwrap()
                    },
                    &[t(&[2, 3]), t(&[3, 2])],
                    1e-4,
                ),
                1 => fd_check(
                    |g, ids| {
                        let tr = g.transpose(ids[0]).unwrap();
                        let z = g.input(Tensor::zeros(&[3, 2]));
                        g.mse(tr, z).unwrap()
                    },
                    &[t(&[2, 3])],
                    1e-4,
                ),
                2 => fd_check(
                    |g, ids| {
                        let s = g.softmax_rows(ids[0]).unwrap();
                        let z = g.input(Tensor::zeros(&[2, 4]));
                        g.mse(s, z).unwrap()
                    },
                    &[t(&[2, 4])],
                    1e-4,
                ),
                3 => fd_check(
                    |g, ids| {
                        let n = g.layer_norm(ids[0], ids[1], ids[2], 1e-5).unwrap();
                        let z = g.input(Tensor::zeros(&[2, 4]));
                        g.mse(n, z).unwrap()
                    },
                    &[t(&[2, 4]), t(&[4]), t(&[4])],
                    1e-3,
                ),
                4 => fd_check(
                    |g, ids| {
                        let p = g.avg_pool(ids[0]).unwrap();
                        let z = g.input(Tensor::zeros(&[3]));
                        g.mse(p, z).unwrap()
                    },
                    &[t(&[4, 3])],
                    1e-4,
                ),
                5 => fd_check(
                    |g, ids| {
                        let c = g.concat(&[ids[0], ids[1]]).unwrap();
                        let z = g.input(Tensor::zeros(&[5]));
                        g.mse(c, z).unwrap()
                    },
                    &[t(&[2]), t(&[3])],
                    1e-4,
                ),
                6 => fd_check(
                    |g, ids| {
                        let s = g.stack_rows(&[ids[0], ids[1]]).unwrap();
                        let z = g.input(Tensor::zeros(&[2, 3]));
                        g.mse(s, z).unwrap()
                    },
                    &[t(&[3]), t(&[3])],
                    1e-4,
                ),
                7 => fd_check(
                    |g, ids| {
                        let v = g.vecmat(ids[0], ids[1]).unwrap();
                        let z = g.input(Tensor::zeros(&[2]));
                        g.mse(v, z).unwrap()
                    },
                    &[t(&[3]), t(&[3, 2])],
                    1e-4,
                ),
                8 => fd_check(
                    |g, ids| {
                        let v = g.matvec(ids[0], ids[1]).unwrap();
                        let z = g.input(Tensor::zeros(&[3]));
                        g.mse(v, z).unwrap()
                    },
                    &[t(&[3, 2]), t(&[2])],
                    1e-4,
                ),
                9 => fd_check(
                    |g, ids| {
                        let gat = g.gather_rows(ids[0], &[0, 2, 0]).unwrap();
                        let z = g.input(Tensor::zeros(&[3, 2]));
                        g.mse(gat, z).unwrap()
                    },
                    &[t(&[3, 2])],
                    1e-4,
                ),
                _ => fd_check(
                    |g, ids| {
                        let sc = g.scale(ids[0], 1.7);
                        let r = g.add(sc, ids[1]).unwrap();
                        let stacked = g.cross_entropy_mean(r, &[1, 0]).unwrap();
                        stacked
                    },
                    &[t(&[2, 3]), t(&[2, 3])],
                    1e-4,
                ),
            }
        }
    }
}
