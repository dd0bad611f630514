use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::mem;

use super::ParamStore;
use crate::math;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(String),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    Reshape(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Log { x: Var, floor: f64 },
    Softmax(Var),
    MaxPool1d { x: Var, argmax: Vec<usize> },
    Conv1d { x: Var, w: Var, b: Var },
    Mean(Var),
    Sum(Var),
    Pick(Var, usize),
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
}

/// Records one forward pass for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the tape is always acyclic
/// and a reverse sweep visits every node after all of its consumers.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    params: BTreeMap<String, Var>,
    log_clamps: usize,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn add_into(dst: &mut Vec<f64>, src: &[f64]) {
    if dst.is_empty() {
        dst.extend_from_slice(src);
    } else {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `log` evaluations that hit their floor.
    pub fn log_clamps(&self) -> usize {
        self.log_clamps
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op) -> Var {
        debug_assert_eq!(value.len(), numel(&shape));
        self.nodes.push(Node { value, shape, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Gradient of the last [`backward`](Self::backward) target with respect
    /// to `v`; `None` if `v` was not reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads
            .get(v.0)
            .filter(|g| !g.is_empty())
            .map(Vec::as_slice)
    }

    /// A constant input (no gradient flows out of the tape through it).
    pub fn input(&mut self, value: Vec<f64>, shape: &[usize]) -> Result<Var> {
        if value.len() != numel(shape) || shape.is_empty() {
            return Err(Error::shape("input", shape, &[value.len()]));
        }
        Ok(self.push(value, shape.to_vec(), Op::Input))
    }

    pub fn vector(&mut self, value: &[f64]) -> Var {
        self.push(value.to_vec(), vec![value.len()], Op::Input)
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.push(vec![c], vec![1], Op::Input)
    }

    /// Leaf holding a copy of a stored parameter. Repeated requests for the
    /// same name return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let p = store.get(name)?;
        let v = self.push(
            p.values().to_vec(),
            p.shape().to_vec(),
            Op::Param(name.to_string()),
        );
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = &self.nodes[v.0];
        let (value, shape) = (n.value.clone(), n.shape.clone());
        self.push(value, shape, Op::Input)
    }

    /// `[m,k]·[k,n] -> [m,n]` or `[m,k]·[k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k) = (sa[0], sa[1]);
        let n = if sb.len() == 2 { sb[1] } else { 1 };
        let out_shape = if sb.len() == 2 { vec![m, n] } else { vec![m] };
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                let row = &av[i * k..(i + 1) * k];
                *o = row.iter().zip(bv.iter()).map(|(x, y)| x * y).sum();
            }
        } else {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = av[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for (o, bpj) in orow.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                        *o += aip * bpj;
                    }
                }
            }
        }
        Ok(self.push(out, out_shape, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(out, shape, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(out, shape, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    /// Concatenation of rank-1 values.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(Error::shape("concat", self.shape(p), &[]));
            }
            out.extend_from_slice(self.value(p));
        }
        let len = out.len();
        if len == 0 {
            return Err(Error::Empty("concat"));
        }
        Ok(self.push(out, vec![len], Op::Concat(parts.to_vec())))
    }

    /// `x[start..start + len]` of a rank-1 value.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 1 || start + len > s[0] || len == 0 {
            return Err(Error::shape("slice", s, &[start, len]));
        }
        let out = self.value(x)[start..start + len].to_vec();
        Ok(self.push(out, vec![len], Op::Slice(x, start)))
    }

    /// Row `i` of a rank-2 value, as a vector.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || i >= s[0] {
            return Err(Error::shape("row", s, &[i]));
        }
        let cols = s[1];
        let out = self.value(x)[i * cols..(i + 1) * cols].to_vec();
        Ok(self.push(out, vec![cols], Op::Row(x, i)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != numel(self.shape(x)) || shape.is_empty() {
            return Err(Error::shape("reshape", self.shape(x), shape));
        }
        let out = self.value(x).to_vec();
        Ok(self.push(out, shape.to_vec(), Op::Reshape(x)))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, math::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, math::sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    /// Natural log. Inputs at or below `floor` are clamped to it (and pass
    /// no gradient); clamps are counted in [`log_clamps`](Self::log_clamps).
    /// A zero floor gives the plain logarithm.
    pub fn log(&mut self, x: Var, floor: f64) -> Var {
        let clamps = self.value(x).iter().filter(|&&v| v <= floor && floor > 0.0).count();
        self.log_clamps += clamps;
        self.map(
            x,
            |v| {
                if floor > 0.0 && v <= floor {
                    math::ln(floor)
                } else {
                    math::ln(v)
                }
            },
            Op::Log { x, floor },
        )
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let width = *shape.last().unwrap();
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(width) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = math::exp(*v - m);
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        self.push(out, shape, Op::Softmax(x))
    }

    /// Non-overlapping max pooling along the time axis of `[C, L]`; the
    /// output has `floor(L / width)` steps. The first maximum wins ties.
    pub fn max_pool1d(&mut self, x: Var, width: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || width == 0 || s[1] < width {
            return Err(Error::shape("max_pool1d", s, &[width]));
        }
        let (c, l) = (s[0], s[1]);
        let lo = l / width;
        let xv = self.value(x);
        let mut out = Vec::with_capacity(c * lo);
        let mut argmax = Vec::with_capacity(c * lo);
        for ch in 0..c {
            for j in 0..lo {
                let base = ch * l + j * width;
                let mut best = base;
                for idx in base + 1..base + width {
                    if xv[idx] > xv[best] {
                        best = idx;
                    }
                }
                out.push(xv[best]);
                argmax.push(best);
            }
        }
        Ok(self.push(out, vec![c, lo], Op::MaxPool1d { x, argmax }))
    }

    /// Valid 1-D convolution: `x [Cin, L]`, `w [Cout, Cin, K]`, `b [Cout]`
    /// gives `[Cout, L - K + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[0] || sw[2] > sx[1] {
            return Err(Error::shape("conv1d", sx, sw));
        }
        if sb != [sw[0]] {
            return Err(Error::shape("conv1d bias", sb, &sw[..1]));
        }
        let (cin, l) = (sx[0], sx[1]);
        let (cout, k) = (sw[0], sw[2]);
        let lo = l - k + 1;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = vec![0.0; cout * lo];
        for o in 0..cout {
            let orow = &mut out[o * lo..(o + 1) * lo];
            orow.iter_mut().for_each(|v| *v = bv[o]);
            for c in 0..cin {
                let xrow = &xv[c * l..(c + 1) * l];
                for kk in 0..k {
                    let wk = wv[(o * cin + c) * k + kk];
                    for (y, xs) in orow.iter_mut().zip(&xrow[kk..kk + lo]) {
                        *y += wk * xs;
                    }
                }
            }
        }
        Ok(self.push(out, vec![cout, lo], Op::Conv1d { x, w, b }))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(vec![m], vec![1], Op::Mean(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![s], vec![1], Op::Sum(x))
    }

    /// Element `i` of a flattened value, as a scalar.
    pub fn pick(&mut self, x: Var, i: usize) -> Result<Var> {
        if i >= self.value(x).len() {
            return Err(Error::shape("pick", self.shape(x), &[i]));
        }
        let v = self.value(x)[i];
        Ok(self.push(vec![v], vec![1], Op::Pick(x, i)))
    }

    /// `Σ c_i · x_i` over equally shaped terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let first = terms.first().ok_or(Error::Empty("weighted_sum"))?.0;
        let shape = self.shape(first).to_vec();
        let mut out = vec![0.0; numel(&shape)];
        for &(v, c) in terms {
            if self.shape(v) != shape.as_slice() {
                return Err(Error::shape("weighted_sum", &shape, self.shape(v)));
            }
            for (o, x) in out.iter_mut().zip(self.value(v)) {
                *o += c * x;
            }
        }
        Ok(self.push(out, shape, Op::WeightedSum(terms.to_vec())))
    }

    /// Reverse sweep from a scalar `loss`. Node gradients are recomputed on
    /// every call; parameter gradients are *added* to `store`, so repeated
    /// calls accumulate until the store's grads are zeroed.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if numel(self.shape(loss)) != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[loss.0] = vec![1.0];
        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = mem::take(&mut grads[i]);
            self.backprop_node(i, &g, &mut grads);
            if let Op::Param(name) = &self.nodes[i].op {
                store.accumulate(name, &g)?;
            }
            grads[i] = g;
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
                let (m, k) = (sa[0], sa[1]);
                let n = if sb.len() == 2 { sb[1] } else { 1 };
                let (av, bv) = (val(*a), val(*b));
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                if n == 1 {
                    for r in 0..m {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let arow = &av[r * k..(r + 1) * k];
                        for ((ga_rp, gb_p), (a_rp, b_p)) in ga[r * k..(r + 1) * k]
                            .iter_mut()
                            .zip(gb.iter_mut())
                            .zip(arow.iter().zip(bv))
                        {
                            *ga_rp += gr * b_p;
                            *gb_p += gr * a_rp;
                        }
                    }
                } else {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            let arp = av[r * k + p];
                            for (gbj, gj) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *gbj += arp * gj;
                            }
                        }
                    }
                }
                add_into(&mut grads[a.0], &ga);
                add_into(&mut grads[b.0], &gb);
            }
            Op::Add(a, b) => {
                add_into(&mut grads[a.0], g);
                add_into(&mut grads[b.0], g);
            }
            Op::Sub(a, b) => {
                add_into(&mut grads[a.0], g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                add_into(&mut grads[b.0], &neg);
            }
            Op::Mul(a, b) => {
                let ga: Vec<f64> = g.iter().zip(val(*b)).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.iter().zip(val(*a)).map(|(x, y)| x * y).collect();
                add_into(&mut grads[a.0], &ga);
                add_into(&mut grads[b.0], &gb);
            }
            Op::Scale(a, c) => {
                let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    add_into(&mut grads[p.0], &g[off..off + n]);
                    off += n;
                }
            }
            Op::Slice(x, start) => {
                let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                gx[*start..*start + g.len()].copy_from_slice(g);
                add_into(&mut grads[x.0], &gx);
            }
            Op::Row(x, r) => {
                let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                let cols = g.len();
                gx[r * cols..(r + 1) * cols].copy_from_slice(g);
                add_into(&mut grads[x.0], &gx);
            }
            Op::Reshape(x) => add_into(&mut grads[x.0], g),
            Op::Tanh(x) => {
                let gx: Vec<f64> = g.iter().zip(&node.value).map(|(d, y)| d * (1.0 - y * y)).collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::Sigmoid(x) => {
                let gx: Vec<f64> = g.iter().zip(&node.value).map(|(d, y)| d * y * (1.0 - y)).collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::Relu(x) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(val(*x))
                    .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                    .collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::Log { x, floor } => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(val(*x))
                    .map(|(d, &v)| if *floor > 0.0 && v <= *floor { 0.0 } else { d / v })
                    .collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::Softmax(x) => {
                let width = *node.shape.last().unwrap();
                let mut gx = vec![0.0; g.len()];
                for ((gr, yr), out) in g
                    .chunks(width)
                    .zip(node.value.chunks(width))
                    .zip(gx.chunks_mut(width))
                {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, d), y) in out.iter_mut().zip(gr).zip(yr) {
                        *o = y * (d - dot);
                    }
                }
                add_into(&mut grads[x.0], &gx);
            }
            Op::MaxPool1d { x, argmax } => {
                let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                for (d, &src) in g.iter().zip(argmax) {
                    gx[src] += d;
                }
                add_into(&mut grads[x.0], &gx);
            }
            Op::Conv1d { x, w, b } => {
                let (sx, sw) = (&self.nodes[x.0].shape, &self.nodes[w.0].shape);
                let (cin, l) = (sx[0], sx[1]);
                let (cout, k) = (sw[0], sw[2]);
                let lo = l - k + 1;
                let (xv, wv) = (val(*x), val(*w));
                let mut gx = vec![0.0; cin * l];
                let mut gw = vec![0.0; cout * cin * k];
                let mut gb = vec![0.0; cout];
                for o in 0..cout {
                    let grow = &g[o * lo..(o + 1) * lo];
                    gb[o] = grow.iter().sum();
                    for c in 0..cin {
                        let xrow = &xv[c * l..(c + 1) * l];
                        let gxrow = &mut gx[c * l..(c + 1) * l];
                        for kk in 0..k {
                            let widx = (o * cin + c) * k + kk;
                            gw[widx] += grow.iter().zip(&xrow[kk..kk + lo]).map(|(a, b)| a * b).sum::<f64>();
                            let wk = wv[widx];
                            for (gxs, d) in gxrow[kk..kk + lo].iter_mut().zip(grow) {
                                *gxs += wk * d;
                            }
                        }
                    }
                }
                add_into(&mut grads[x.0], &gx);
                add_into(&mut grads[w.0], &gw);
                add_into(&mut grads[b.0], &gb);
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len();
                let gx = vec![g[0] / n as f64; n];
                add_into(&mut grads[x.0], &gx);
            }
            Op::Sum(x) => {
                let gx = vec![g[0]; self.nodes[x.0].value.len()];
                add_into(&mut grads[x.0], &gx);
            }
            Op::Pick(x, idx) => {
                let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                gx[*idx] = g[0];
                add_into(&mut grads[x.0], &gx);
            }
            Op::WeightedSum(terms) => {
                for &(v, c) in terms {
                    let gv: Vec<f64> = g.iter().map(|d| d * c).collect();
                    add_into(&mut grads[v.0], &gv);
                }
            }
        }
    }
}
