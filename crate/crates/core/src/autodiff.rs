//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation eagerly: building an op computes its
//! value immediately and appends a node, so the node list is already in
//! topological order. [`Tape::backward`] then walks the list once in
//! reverse, accumulating gradients for every node that (transitively)
//! depends on a parameter. Constants — notably the frozen embedding table —
//! never receive gradient buffers.
//!
//! The op set is exactly what the network needs: dense linear algebra,
//! elementwise nonlinearities, row gather/scatter for batching, block
//! concatenation/slicing for fused recurrent gates, sparse-to-dense
//! adjacency assembly, and a fused binary-cross-entropy mean.

use ndarray::{s, Array2, Axis};

/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    /// Parameter or constant; distinguished by the node's `requires_grad`.
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Elementwise product.
    Mul(Var, Var),
    /// `(n×m) + (1×m)` row broadcast.
    AddRow(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Abs(Var),
    /// Elementwise `x^{−1/2}`.
    Rsqrt(Var),
    /// `(n×m) → (n×1)` sum over columns.
    RowSum(Var),
    /// `(n×m) → (1×1)` sum of all entries.
    SumAll(Var),
    /// Pick rows by index; backward scatter-adds.
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    /// Columns `start..end`.
    SliceCols(Var, usize, usize),
    /// Dense `n×n` matrix with `values[value_idx]` added at each `(row, col)`.
    ScatterEntries {
        values: Var,
        coords: Vec<(usize, usize, usize)>,
    },
    Scale(Var, f64),
    /// `y = mul·x + add`; only the slope matters in reverse.
    AffineConst(Var, f64),
    Transpose(Var),
    /// `max(x, floor)` elementwise.
    ClampMin(Var, f64),
    /// Mean binary cross-entropy of clamped probabilities against fixed
    /// 0/1 targets; produces a `1×1` scalar.
    BceMean { probs: Var, targets: Array2<f64> },
}

struct Node {
    op: Op,
    value: Array2<f64>,
    requires_grad: bool,
}

/// Gradients of one scalar with respect to every tape node.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient w.r.t. `v`, or `None` when the scalar does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        assert_eq!(value.dim(), (1, 1), "scalar() needs a 1×1 node");
        value[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Array2<f64>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf: gradients flow into it.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A frozen leaf: no gradient buffer is ever allocated for it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Matmul(a, b), value, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Add(a, b), value, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Sub(a, b), value, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Mul(a, b), value, rg)
    }

    /// Add a `1×m` row vector to every row of an `n×m` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (n, m) = self.value(a).dim();
        assert_eq!(self.value(row).dim(), (1, m), "add_row needs a 1×m bias");
        let value = self.value(a) + &self.value(row).broadcast((n, m)).unwrap();
        let rg = self.needs(a) || self.needs(row);
        self.push(Op::AddRow(a, row), value, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let rg = self.needs(a);
        self.push(Op::Sigmoid(a), value, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let rg = self.needs(a);
        self.push(Op::Tanh(a), value, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        let rg = self.needs(a);
        self.push(Op::Relu(a), value, rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::abs);
        let rg = self.needs(a);
        self.push(Op::Abs(a), value, rg)
    }

    pub fn rsqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| 1.0 / x.sqrt());
        let rg = self.needs(a);
        self.push(Op::Rsqrt(a), value, rg)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.needs(a);
        self.push(Op::RowSum(a), value, rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.needs(a);
        self.push(Op::SumAll(a), value, rg)
    }

    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Var {
        let src = self.value(a);
        let m = src.ncols();
        let mut value = Array2::zeros((indices.len(), m));
        for (i, &r) in indices.iter().enumerate() {
            value.row_mut(i).assign(&src.row(r));
        }
        let rg = self.needs(a);
        self.push(Op::GatherRows(a, indices), value, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows needs at least one part");
        let m = self.value(parts[0]).ncols();
        let n: usize = parts.iter().map(|&p| self.value(p).nrows()).sum();
        let mut value = Array2::zeros((n, m));
        let mut row = 0usize;
        for &p in parts {
            let block = self.value(p);
            assert_eq!(block.ncols(), m, "concat_rows column mismatch");
            value.slice_mut(s![row..row + block.nrows(), ..]).assign(block);
            row += block.nrows();
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        self.push(Op::ConcatRows(parts.to_vec()), value, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let n = self.value(parts[0]).nrows();
        let m: usize = parts.iter().map(|&p| self.value(p).ncols()).sum();
        let mut value = Array2::zeros((n, m));
        let mut col = 0usize;
        for &p in parts {
            let block = self.value(p);
            assert_eq!(block.nrows(), n, "concat_cols row mismatch");
            value.slice_mut(s![.., col..col + block.ncols()]).assign(block);
            col += block.ncols();
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        self.push(Op::ConcatCols(parts.to_vec()), value, rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let rg = self.needs(a);
        self.push(Op::SliceCols(a, start, end), value, rg)
    }

    /// Assemble a dense `n×n` matrix from sparse entries: each coordinate
    /// `(row, col, value_idx)` adds `values[value_idx, 0]` at `(row, col)`.
    /// Duplicate coordinates accumulate.
    pub fn scatter_entries(
        &mut self,
        values: Var,
        coords: Vec<(usize, usize, usize)>,
        n: usize,
    ) -> Var {
        assert_eq!(self.value(values).ncols(), 1, "scatter values must be a column");
        let mut dense = Array2::zeros((n, n));
        for &(r, c, vi) in &coords {
            dense[[r, c]] += self.value(values)[[vi, 0]];
        }
        let rg = self.needs(values);
        self.push(Op::ScatterEntries { values, coords }, dense, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        let rg = self.needs(a);
        self.push(Op::Scale(a, factor), value, rg)
    }

    /// `y = mul·x + add`, elementwise with scalar constants.
    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let value = self.value(a).mapv(|x| mul * x + add);
        let rg = self.needs(a);
        self.push(Op::AffineConst(a, mul), value, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let rg = self.needs(a);
        self.push(Op::Transpose(a), value, rg)
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).mapv(|x| x.max(floor));
        let rg = self.needs(a);
        self.push(Op::ClampMin(a, floor), value, rg)
    }

    /// Mean binary cross-entropy over all entries of `probs` against fixed
    /// binary `targets`, with probabilities clamped away from {0, 1}.
    pub fn bce_mean(&mut self, probs: Var, targets: Array2<f64>) -> Var {
        assert_eq!(self.value(probs).dim(), targets.dim(), "bce shape mismatch");
        let p = self.value(probs);
        let count = p.len() as f64;
        let mut total = 0.0;
        for (&pi, &ti) in p.iter().zip(targets.iter()) {
            let q = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total -= ti * q.ln() + (1.0 - ti) * (1.0 - q).ln();
        }
        let value = Array2::from_elem((1, 1), total / count);
        let rg = self.needs(probs);
        self.push(Op::BceMean { probs, targets }, value, rg)
    }

    /// Reverse pass from a `1×1` root. Gradient buffers exist only for
    /// nodes on a parameter-dependent path.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).dim(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.push_back(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    /// Propagate one node's output gradient to its inputs.
    fn push_back(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let node = &self.nodes[idx];
        if !node.requires_grad {
            return;
        }
        let mut accum = |v: Var, delta: Array2<f64>| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                accum(*a, g.dot(&self.value(*b).t()));
                accum(*b, self.value(*a).t().dot(g));
            }
            Op::Add(a, b) => {
                accum(*a, g.clone());
                accum(*b, g.clone());
            }
            Op::Sub(a, b) => {
                accum(*a, g.clone());
                accum(*b, -g);
            }
            Op::Mul(a, b) => {
                accum(*a, g * self.value(*b));
                accum(*b, g * self.value(*a));
            }
            Op::AddRow(a, row) => {
                accum(*a, g.clone());
                accum(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                accum(*a, g * &(y * &y.mapv(|v| 1.0 - v)));
            }
            Op::Tanh(a) => {
                accum(*a, g * &node.value.mapv(|y| 1.0 - y * y));
            }
            Op::Relu(a) => {
                let mask = self.value(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                accum(*a, g * &mask);
            }
            Op::Abs(a) => {
                let sign = self.value(*a).mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                accum(*a, g * &sign);
            }
            Op::Rsqrt(a) => {
                // d(x^{−1/2})/dx = −y³/2 with y = x^{−1/2}.
                accum(*a, g * &node.value.mapv(|y| -0.5 * y * y * y));
            }
            Op::RowSum(a) => {
                let dim = self.value(*a).dim();
                accum(*a, g.broadcast(dim).unwrap().to_owned());
            }
            Op::SumAll(a) => {
                accum(*a, Array2::from_elem(self.value(*a).dim(), g[[0, 0]]));
            }
            Op::GatherRows(a, indices) => {
                let mut da = Array2::zeros(self.value(*a).dim());
                for (i, &r) in indices.iter().enumerate() {
                    let mut row = da.row_mut(r);
                    row += &g.row(i);
                }
                accum(*a, da);
            }
            Op::ConcatRows(parts) => {
                let mut row = 0usize;
                for &p in parts {
                    let n = self.value(p).nrows();
                    accum(p, g.slice(s![row..row + n, ..]).to_owned());
                    row += n;
                }
            }
            Op::ConcatCols(parts) => {
                let mut col = 0usize;
                for &p in parts {
                    let m = self.value(p).ncols();
                    accum(p, g.slice(s![.., col..col + m]).to_owned());
                    col += m;
                }
            }
            Op::SliceCols(a, start, end) => {
                let mut da = Array2::zeros(self.value(*a).dim());
                da.slice_mut(s![.., *start..*end]).assign(g);
                accum(*a, da);
            }
            Op::ScatterEntries { values, coords } => {
                let mut dv = Array2::zeros(self.value(*values).dim());
                for &(r, c, vi) in coords {
                    dv[[vi, 0]] += g[[r, c]];
                }
                accum(*values, dv);
            }
            Op::Scale(a, factor) => {
                accum(*a, g * *factor);
            }
            Op::AffineConst(a, mul) => {
                accum(*a, g * *mul);
            }
            Op::Transpose(a) => {
                accum(*a, g.t().to_owned());
            }
            Op::ClampMin(a, floor) => {
                let mask = self.value(*a).mapv(|x| if x >= *floor { 1.0 } else { 0.0 });
                accum(*a, g * &mask);
            }
            Op::BceMean { probs, targets } => {
                // Zero gradient in the clamped region, matching the
                // derivative of the clamped forward computation.
                let p = self.value(*probs);
                let count = p.len() as f64;
                let mut dp = Array2::zeros(p.dim());
                for ((i, &pi), &ti) in p.indexed_iter().zip(targets.iter()) {
                    if (BCE_EPS..=1.0 - BCE_EPS).contains(&pi) {
                        dp[i] = (pi - ti) / (pi * (1.0 - pi)) / count;
                    }
                }
                accum(*probs, &dp * g[[0, 0]]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, m), |_| rng.gen_range(-1.5..1.5))
    }

    /// Central-difference check of `backward` for a scalar built from one
    /// parameter. `build` must construct the same computation every call.
    fn fd_check(x0: &Array2<f64>, build: impl Fn(&mut Tape, Var) -> Var) {
        let mut tape = Tape::new();
        let x = tape.param(x0.clone());
        let y = build(&mut tape, x);
        let grads = tape.backward(y);
        let analytic = grads.wrt(x).expect("parameter must receive a gradient");

        let h = 1e-6;
        for idx in 0..x0.len() {
            let eval = |delta: f64| {
                let mut shifted = x0.clone();
                shifted.as_slice_mut().unwrap()[idx] += delta;
                let mut t = Tape::new();
                let v = t.param(shifted);
                let out = build(&mut t, v);
                t.scalar(out)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.as_slice().unwrap()[idx];
            assert_abs_diff_eq!(a, numeric, epsilon = 1e-6 * (1.0 + numeric.abs()));
        }
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = random_matrix(&mut rng, 2, 3);
        let w = random_matrix(&mut rng, 3, 2);
        fd_check(&x0, move |t, x| {
            let wv = t.constant(w.clone());
            let y = t.matmul(x, wv);
            t.sum_all(y)
        });
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Bounded away from the relu/abs kinks at zero.
        let x0 = Array2::from_shape_fn((3, 4), |_| {
            let v: f64 = rng.gen_range(0.2..1.5);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        });
        fd_check(&x0, |t, x| {
            let s = t.sigmoid(x);
            let h = t.tanh(s);
            let r = t.relu(x);
            let a = t.abs(x);
            let sum1 = t.add(h, r);
            let sum2 = t.add(sum1, a);
            t.sum_all(sum2)
        });
    }

    #[test]
    fn rsqrt_and_clamp_gradients_match_finite_differences() {
        let x0 = array![[0.5, 2.0], [4.0, 9.0]];
        fd_check(&x0, |t, x| {
            let c = t.clamp_min(x, 1.0);
            let r = t.rsqrt(c);
            t.sum_all(r)
        });
    }

    #[test]
    fn add_row_backward_sums_columns() {
        let mut tape = Tape::new();
        let a = tape.constant(Array2::zeros((3, 2)));
        let row = tape.param(array![[0.3, -0.7]]);
        let y = tape.add_row(a, row);
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss);
        // Each bias column feeds 3 rows, so its gradient is 3.
        assert_eq!(grads.wrt(row).unwrap(), &array![[3.0, 3.0]]);
    }

    #[test]
    fn gather_rows_backward_scatter_adds() {
        let mut tape = Tape::new();
        let a = tape.param(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        // Row 0 gathered twice must accumulate twice the gradient.
        let picked = tape.gather_rows(a, vec![0, 2, 0]);
        let loss = tape.sum_all(picked);
        let grads = tape.backward(loss);
        assert_eq!(
            grads.wrt(a).unwrap(),
            &array![[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]]
        );
    }

    #[test]
    fn concat_and_slice_route_gradients_to_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = random_matrix(&mut rng, 2, 6);
        fd_check(&x0, |t, x| {
            let left = t.slice_cols(x, 0, 2);
            let mid = t.slice_cols(x, 2, 4);
            let right = t.slice_cols(x, 4, 6);
            let lr = t.mul(left, right);
            let back = t.concat_cols(&[lr, mid]);
            let stacked = t.concat_rows(&[back, back]);
            t.sum_all(stacked)
        });
    }

    #[test]
    fn scatter_entries_builds_dense_and_gathers_back() {
        let mut tape = Tape::new();
        let values = tape.param(array![[0.25], [0.75]]);
        // Symmetric star adjacency for one headline and two paragraphs.
        let coords = vec![(0, 1, 0), (1, 0, 0), (0, 2, 1), (2, 0, 1)];
        let dense = tape.scatter_entries(values, coords, 3);
        assert_eq!(
            tape.value(dense),
            &array![[0.0, 0.25, 0.75], [0.25, 0.0, 0.0], [0.75, 0.0, 0.0]]
        );
        let loss = tape.sum_all(dense);
        let grads = tape.backward(loss);
        // Each value appears at two mirrored coordinates.
        assert_eq!(grads.wrt(values).unwrap(), &array![[2.0], [2.0]]);
    }

    #[test]
    fn degree_normalization_gradients_match_finite_differences() {
        // The exact composite used by graph propagation: scatter the edge
        // weights, add self-loops, normalize by inverse square-root degree.
        let w0 = array![[0.6], [0.4]];
        fd_check(&w0, |t, w| {
            let coords = vec![(0, 1, 0), (1, 0, 0), (0, 2, 1), (2, 0, 1)];
            let scattered = t.scatter_entries(w, coords, 3);
            let eye = t.constant(Array2::eye(3));
            let a = t.add(scattered, eye);
            let deg = t.row_sum(a);
            let d = t.rsqrt(deg);
            let dt = t.transpose(d);
            let outer = t.matmul(d, dt);
            let normalized = t.mul(outer, a);
            t.sum_all(normalized)
        });
    }

    #[test]
    fn bce_mean_at_half_is_ln_two_with_known_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(array![[0.5], [0.5]]);
        let loss = tape.bce_mean(p, array![[1.0], [0.0]]);
        assert_abs_diff_eq!(tape.scalar(loss), std::f64::consts::LN_2, epsilon = 1e-12);
        let grads = tape.backward(loss);
        // d/dp of mean BCE at p=0.5: (p−t)/(p(1−p))/n = ±2/n = ±1 for n=2.
        assert_abs_diff_eq!(grads.wrt(p).unwrap()[[0, 0]], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grads.wrt(p).unwrap()[[1, 0]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bce_mean_gradients_match_finite_differences() {
        let p0 = array![[0.3], [0.8], [0.51]];
        let targets = array![[1.0], [0.0], [1.0]];
        fd_check(&p0, move |t, p| t.bce_mean(p, targets.clone()));
    }

    #[test]
    fn constants_receive_no_gradient_buffer() {
        let mut tape = Tape::new();
        let c = tape.constant(array![[1.0, 2.0]]);
        let p = tape.param(array![[3.0, 4.0]]);
        let y = tape.mul(c, p);
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss);
        assert!(grads.wrt(c).is_none());
        assert_eq!(grads.wrt(p).unwrap(), &array![[1.0, 2.0]]);
    }

    #[test]
    fn unreached_parameters_report_none() {
        let mut tape = Tape::new();
        let used = tape.param(array![[2.0]]);
        let unused = tape.param(array![[5.0]]);
        let loss = tape.sum_all(used);
        let grads = tape.backward(loss);
        assert!(grads.wrt(unused).is_none());
        assert_eq!(grads.wrt(used).unwrap(), &array![[1.0]]);
    }

    #[test]
    fn gradient_accumulates_over_reused_nodes() {
        let mut tape = Tape::new();
        let x = tape.param(array![[3.0]]);
        // y = x·x → dy/dx = 2x = 6.
        let y = tape.mul(x, x);
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss);
        assert_abs_diff_eq!(grads.wrt(x).unwrap()[[0, 0]], 6.0, epsilon = 1e-12);
    }
}
