//! A small reverse-mode differentiation tape over row-major matrices.
//!
//! Parameters live in one flat `&[f64]`; a [`Tape`] borrows it, so parameter
//! leaves cost nothing to create. Gradients are accumulated into a flat
//! buffer of the same length.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("loss must be a scalar, got shape {0}x{1}")]
    NotScalar(usize, usize),
    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("every entry of the distribution is masked")]
    AllMasked,
}

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Param { offset: usize },
    Const,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Gather { table: Var, rows: Vec<u32> },
    ConcatCols(Var, Var),
    /// `x_i + Σ_{j∈N(i)} relu(x_j + e)`
    GineAggregate { x: Var, edge: f64 },
    SumRows(Var),
    MaskedLogSoftmax(Var),
    Pick(Var, usize),
    Scale(Var, f64),
    AddConst(Var),
    Square(Var),
    Sum(Vec<Var>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param { .. } => "param",
            Op::Const => "const",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Relu(_) => "relu",
            Op::Gather { .. } => "gather",
            Op::ConcatCols(..) => "concat_cols",
            Op::GineAggregate { .. } => "gine_aggregate",
            Op::SumRows(_) => "sum_rows",
            Op::MaskedLogSoftmax(_) => "masked_log_softmax",
            Op::Pick(..) => "pick",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    /// Empty for parameter leaves, which read from the borrowed slice.
    value: Vec<f64>,
}

#[derive(Debug)]
pub struct Tape<'a> {
    params: &'a [f64],
    adjacency: &'a [Vec<u32>],
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a [f64]) -> Self {
        Tape { params, adjacency: &[], nodes: Vec::new() }
    }

    /// A tape whose [`Tape::gine_aggregate`] uses `adjacency` (symmetric neighbor lists).
    pub fn with_graph(params: &'a [f64], adjacency: &'a [Vec<u32>]) -> Self {
        Tape { params, adjacency, nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node created after `mark` (a value of [`Tape::len`]).
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param { offset } => &self.params[offset..offset + n.rows * n.cols],
            _ => &n.value,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        debug_assert!(matches!(op, Op::Param { .. }) || value.len() == rows * cols);
        self.nodes.push(Node { op, rows, cols, value });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> Var {
        assert!(offset + rows * cols <= self.params.len(), "parameter slot out of range");
        self.push(Op::Param { offset }, rows, cols, Vec::new())
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols);
        self.push(Op::Const, rows, cols, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(AutodiffError::Shape { op: "matmul", lhs: (m, k), rhs: (k2, n) });
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), (k as isize, 1), self.value(b), (n as isize, 1), &mut out);
        Ok(self.push(Op::MatMul(a, b), m, n, out))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(AutodiffError::Shape { op: "add_row", lhs: (r, c), rhs: self.shape(row) });
        }
        let b = self.value(row);
        let out: Vec<f64> =
            self.value(a).chunks_exact(c).flat_map(|x| x.iter().zip(b).map(|(x, b)| x + b)).collect();
        Ok(self.push(Op::AddRow(a, row), r, c, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::Shape { op: "add", lhs: self.shape(a), rhs: self.shape(b) });
        }
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a, b), r, c, out))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        self.push(Op::Relu(a), r, c, out)
    }

    /// Rows of `table` selected by `rows`.
    pub fn gather(&mut self, table: Var, rows: &[u32]) -> Var {
        let (tr, c) = self.shape(table);
        let t = self.value(table);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            assert!((i as usize) < tr, "gather index {i} out of {tr} rows");
            out.extend_from_slice(&t[i as usize * c..(i as usize + 1) * c]);
        }
        self.push(Op::Gather { table, rows: rows.to_vec() }, rows.len(), c, out)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(AutodiffError::Shape { op: "concat_cols", lhs: (ra, ca), rhs: (rb, cb) });
        }
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&va[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&vb[i * cb..(i + 1) * cb]);
        }
        Ok(self.push(Op::ConcatCols(a, b), ra, ca + cb, out))
    }

    /// GINE neighborhood sum with a constant scalar edge feature broadcast
    /// across channels: `x_i + Σ_{j∈N(i)} relu(x_j + edge)`.
    pub fn gine_aggregate(&mut self, x: Var, edge: f64) -> Result<Var, AutodiffError> {
        let (r, c) = self.shape(x);
        if self.adjacency.len() != r {
            return Err(AutodiffError::Shape {
                op: "gine_aggregate",
                lhs: (r, c),
                rhs: (self.adjacency.len(), c),
            });
        }
        let xv = self.value(x);
        let msg: Vec<f64> = xv.iter().map(|&v| (v + edge).max(0.0)).collect();
        let mut out = xv.to_vec();
        for (i, nb) in self.adjacency.iter().enumerate() {
            let dst = &mut out[i * c..(i + 1) * c];
            for &j in nb {
                let src = &msg[j as usize * c..(j as usize + 1) * c];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
        }
        Ok(self.push(Op::GineAggregate { x, edge }, r, c, out))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (_, c) = self.shape(a);
        let mut out = vec![0.0; c];
        for row in self.value(a).chunks_exact(c) {
            out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
        }
        self.push(Op::SumRows(a), 1, c, out)
    }

    /// Log-softmax over a `1 × k` row where entries with `mask[i] == false`
    /// become `-inf` and receive no gradient.
    pub fn masked_log_softmax(&mut self, logits: Var, mask: &[bool]) -> Result<Var, AutodiffError> {
        let (r, k) = self.shape(logits);
        if r != 1 || mask.len() != k {
            return Err(AutodiffError::Shape { op: "masked_log_softmax", lhs: (r, k), rhs: (1, mask.len()) });
        }
        let z = self.value(logits);
        let max = z
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(AutodiffError::AllMasked);
        }
        let lse = max + z.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| (v - max).exp()).sum::<f64>().ln();
        let out = z.iter().zip(mask).map(|(&v, &m)| if m { v - lse } else { f64::NEG_INFINITY }).collect();
        Ok(self.push(Op::MaskedLogSoftmax(logits), 1, k, out))
    }

    /// Entry `index` of `a` (row-major) as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Var {
        let v = self.value(a)[index];
        self.push(Op::Pick(a, index), 1, 1, vec![v])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * s).collect();
        self.push(Op::Scale(a, s), r, c, out)
    }

    pub fn add_const(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x + s).collect();
        self.push(Op::AddConst(a), r, c, out)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * x).collect();
        self.push(Op::Square(a), r, c, out)
    }

    /// Sum of scalars.
    pub fn sum(&mut self, vars: &[Var]) -> Var {
        let total = vars.iter().map(|&v| self.scalar(v)).sum();
        self.push(Op::Sum(vars.to_vec()), 1, 1, vec![total])
    }

    /// Back-propagates from the scalar `loss`, adding `seed · ∂loss/∂θ`
    /// into `grad` (same layout as the parameter slice).
    pub fn backward(&self, loss: Var, seed: f64, grad: &mut [f64]) -> Result<(), AutodiffError> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(AutodiffError::NotScalar(r, c));
        }
        assert_eq!(grad.len(), self.params.len(), "gradient buffer does not match parameters");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![seed]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if g.iter().any(|v| !v.is_finite()) {
                return Err(AutodiffError::NonFinite { op: node.op.name(), node: idx });
            }
            match &node.op {
                Op::Param { offset } => {
                    grad[*offset..*offset + g.len()].iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Const => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = node.cols;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, m * k);
                    // dA += dC · Bᵀ
                    gemm(m, n, k, &g, (n as isize, 1), bv, (1, n as isize), ga);
                    let gb = slot(&mut grads, *b, k * n);
                    // dB += Aᵀ · dC
                    gemm(k, m, n, av, (1, k as isize), &g, (n as isize, 1), gb);
                }
                Op::AddRow(a, row) => {
                    let cols = node.cols;
                    add_into(slot(&mut grads, *a, g.len()), &g);
                    let gr = slot(&mut grads, *row, cols);
                    for chunk in g.chunks_exact(cols) {
                        add_into(gr, chunk);
                    }
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, *a, g.len()), &g);
                    add_into(slot(&mut grads, *b, g.len()), &g);
                }
                Op::Relu(a) => {
                    let out = &node.value;
                    let ga = slot(&mut grads, *a, g.len());
                    for ((d, &gi), &o) in ga.iter_mut().zip(&g).zip(out) {
                        if o > 0.0 {
                            *d += gi;
                        }
                    }
                }
                Op::Gather { table, rows } => {
                    let (tr, c) = self.shape(*table);
                    let gt = slot(&mut grads, *table, tr * c);
                    for (k, &i) in rows.iter().enumerate() {
                        add_into(&mut gt[i as usize * c..(i as usize + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (ra, ca) = self.shape(*a);
                    let (_, cb) = self.shape(*b);
                    let w = ca + cb;
                    let ga = slot(&mut grads, *a, ra * ca);
                    for i in 0..ra {
                        add_into(&mut ga[i * ca..(i + 1) * ca], &g[i * w..i * w + ca]);
                    }
                    let gb = slot(&mut grads, *b, ra * cb);
                    for i in 0..ra {
                        add_into(&mut gb[i * cb..(i + 1) * cb], &g[i * w + ca..(i + 1) * w]);
                    }
                }
                Op::GineAggregate { x, edge } => {
                    let c = node.cols;
                    let xv = self.value(*x);
                    let mut gx = g.clone();
                    for (i, nb) in self.adjacency.iter().enumerate() {
                        let gi = &g[i * c..(i + 1) * c];
                        for &j in nb {
                            let j = j as usize;
                            for ch in 0..c {
                                if xv[j * c + ch] + edge > 0.0 {
                                    gx[j * c + ch] += gi[ch];
                                }
                            }
                        }
                    }
                    add_into(slot(&mut grads, *x, gx.len()), &gx);
                }
                Op::SumRows(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = slot(&mut grads, *a, r * c);
                    for chunk in ga.chunks_exact_mut(c) {
                        add_into(chunk, &g);
                    }
                }
                Op::MaskedLogSoftmax(a) => {
                    // d/dz_i = g_i − p_i Σ_j g_j over unmasked entries.
                    let out = &node.value;
                    let total: f64 = g.iter().zip(out).filter(|(_, o)| o.is_finite()).map(|(g, _)| g).sum();
                    let ga = slot(&mut grads, *a, g.len());
                    for ((d, &gi), &o) in ga.iter_mut().zip(&g).zip(out) {
                        if o.is_finite() {
                            *d += gi - o.exp() * total;
                        }
                    }
                }
                Op::Pick(a, i) => {
                    let len = self.value(*a).len();
                    slot(&mut grads, *a, len)[*i] += g[0];
                }
                Op::Scale(a, s) => {
                    let ga = slot(&mut grads, *a, g.len());
                    ga.iter_mut().zip(&g).for_each(|(d, gi)| *d += gi * s);
                }
                Op::AddConst(a) => add_into(slot(&mut grads, *a, g.len()), &g),
                Op::Square(a) => {
                    let av = self.value(*a);
                    let ga = slot(&mut grads, *a, g.len());
                    for ((d, gi), x) in ga.iter_mut().zip(&g).zip(av) {
                        *d += 2.0 * x * gi;
                    }
                }
                Op::Sum(vars) => {
                    for v in vars {
                        slot(&mut grads, *v, 1)[0] += g[0];
                    }
                }
            }
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op: "gradient", node: loss.0 });
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// `c += a · b` for `m×k` by `k×n`, with explicit (row, col) strides for `a` and `b`.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserts above guarantee every strided index stays inside
    // the slices for the row-major or transposed row-major layouts used here.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 1.0, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(params: &[f64], f: impl Fn(&[f64]) -> f64, h: f64) -> Vec<f64> {
        let mut p = params.to_vec();
        (0..p.len())
            .map(|i| {
                let orig = p[i];
                p[i] = orig + h;
                let up = f(&p);
                p[i] = orig - h;
                let down = f(&p);
                p[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_params() {
        let params = vec![0.5, -1.5, 2.0, 3.0];
        let mut tape = Tape::new(&params);
        let p = tape.param(0, 2, 2);
        let sq = tape.square(p);
        let s = tape.sum_rows(sq);
        let ones = tape.constant(2, 1, vec![1.0, 1.0]);
        let l = tape.matmul(s, ones).unwrap();
        let mut grad = vec![0.0; 4];
        tape.backward(l, 1.0, &mut grad).unwrap();
        assert_eq!(grad, vec![1.0, -3.0, 4.0, 6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let params = vec![1.0, 2.0];
        let mut tape = Tape::new(&params);
        let p = tape.param(0, 1, 2);
        let mut grad = vec![0.0; 2];
        assert_eq!(tape.backward(p, 1.0, &mut grad), Err(AutodiffError::NotScalar(1, 2)));
    }

    #[test]
    fn nan_is_caught() {
        let params = vec![f64::NAN];
        let mut tape = Tape::new(&params);
        let p = tape.param(0, 1, 1);
        let l = tape.square(p);
        let mut grad = vec![0.0];
        assert!(matches!(tape.backward(l, 1.0, &mut grad), Err(AutodiffError::NonFinite { .. })));
    }

    #[test]
    fn unreachable_parameters_get_zero_gradient() {
        let params = vec![1.0, 2.0, 3.0];
        let mut tape = Tape::new(&params);
        let a = tape.param(0, 1, 1);
        let _unused = tape.param(1, 1, 2);
        let l = tape.square(a);
        let mut grad = vec![0.0; 3];
        tape.backward(l, 1.0, &mut grad).unwrap();
        assert_eq!(grad, vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn masked_softmax_normalizes_and_blocks_masked_gradient() {
        let params = vec![0.3, -1.0, 2.0, 0.7];
        let mask = [true, false, true, true];
        let mut tape = Tape::new(&params);
        let z = tape.param(0, 1, 4);
        let lp = tape.masked_log_softmax(z, &mask).unwrap();
        let total: f64 = tape.value(lp).iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(tape.value(lp)[1], f64::NEG_INFINITY);
        let l = tape.pick(lp, 2);
        let mut grad = vec![0.0; 4];
        tape.backward(l, 1.0, &mut grad).unwrap();
        assert_eq!(grad[1], 0.0);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(tape.masked_log_softmax(z, &[false; 4]).unwrap_err(), AutodiffError::AllMasked);
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        // 3 nodes on a path, 2 channels, one linear layer and a pooled softmax.
        let adjacency = vec![vec![1], vec![0, 2], vec![1]];
        let n_params = 3 * 2 + 2 * 3 + 3;
        let params: Vec<f64> = (0..n_params).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0 + 0.013).collect();
        let build = |p: &[f64]| -> f64 {
            let mut t = Tape::with_graph(p, &adjacency);
            let emb = t.param(0, 3, 2);
            let x = t.gather(emb, &[2, 0, 1]);
            let a = t.gine_aggregate(x, -1.0).unwrap();
            let w = t.param(6, 2, 3);
            let b = t.param(12, 1, 3);
            let h = t.matmul(a, w).unwrap();
            let h = t.add_row(h, b).unwrap();
            let h = t.relu(h);
            let pooled = t.sum_rows(h);
            let lp = t.masked_log_softmax(pooled, &[true, true, false]).unwrap();
            let pick = t.pick(lp, 0);
            let sq = t.square(pick);
            let sq = t.add_const(sq, 0.5);
            t.scalar(sq)
        };
        let mut t = Tape::with_graph(&params, &adjacency);
        let emb = t.param(0, 3, 2);
        let x = t.gather(emb, &[2, 0, 1]);
        let a = t.gine_aggregate(x, -1.0).unwrap();
        let w = t.param(6, 2, 3);
        let b = t.param(12, 1, 3);
        let h = t.matmul(a, w).unwrap();
        let h = t.add_row(h, b).unwrap();
        let h = t.relu(h);
        let pooled = t.sum_rows(h);
        let lp = t.masked_log_softmax(pooled, &[true, true, false]).unwrap();
        let pick = t.pick(lp, 0);
        let sq = t.square(pick);
        let loss = t.add_const(sq, 0.5);
        assert_eq!(t.scalar(loss), build(&params));
        let mut grad = vec![0.0; n_params];
        t.backward(loss, 1.0, &mut grad).unwrap();
        let fd = finite_diff(&params, build, 1e-6);
        for (a, b) in grad.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn truncate_keeps_earlier_nodes() {
        let params = vec![2.0];
        let mut tape = Tape::new(&params);
        let p = tape.param(0, 1, 1);
        let mark = tape.len();
        let _ = tape.square(p);
        tape.truncate(mark);
        assert_eq!(tape.len(), 1);
        let s = tape.scale(p, 3.0);
        let c = tape.sum(&[s, p]);
        let mut grad = vec![0.0];
        tape.backward(c, 2.0, &mut grad).unwrap();
        assert_eq!(grad, vec![8.0]);
    }
}
