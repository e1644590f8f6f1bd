//! Differentiable building blocks over a flat parameter buffer.
//!
//! Sequences are `(batch, time, channels)` arrays in standard layout. Every
//! layer's weights live in one `&[f64]` owned by the network, addressed through
//! [`Slot`]s, and backward passes accumulate into a gradient buffer of the same
//! length.

use ndarray::{s, Array2, Array3, ArrayView1, CowArray, Ix2, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

/// A `rows × cols` block of the parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn mat<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.range()]).expect("slot fits buffer")
    }

    pub fn mat_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut p[self.range()]).expect("slot fits buffer")
    }

    pub fn vec<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.range()])
    }

    pub fn vec_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut p[self.range()])
    }
}

#[derive(Debug, Default)]
pub struct Layout {
    pub len: usize,
}

impl Layout {
    pub fn alloc(&mut self, rows: usize, cols: usize) -> Slot {
        let slot = Slot {
            offset: self.len,
            rows,
            cols,
        };
        self.len += rows * cols;
        slot
    }
}

/// Glorot-uniform fill of a slot.
pub fn glorot(p: &mut [f64], slot: Slot, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in &mut p[slot.range()] {
        *v = rng.random_range(-limit..limit);
    }
}

fn as_rows(x: &Array3<f64>) -> CowArray<'_, f64, Ix2> {
    let (n, t, c) = x.dim();
    x.as_standard_layout()
        .into_shape_with_order((n * t, c))
        .expect("standard layout")
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub kernel: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    /// `(kernel · in_ch) × out_ch`, row `j·in_ch + c` holds tap `j` of input channel `c`.
    pub w: Slot,
    pub b: Slot,
}

impl Conv1d {
    pub fn new(layout: &mut Layout, kernel: usize, in_ch: usize, out_ch: usize) -> Self {
        Conv1d {
            kernel,
            in_ch,
            out_ch,
            w: layout.alloc(kernel * in_ch, out_ch),
            b: layout.alloc(1, out_ch),
        }
    }

    pub fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        glorot(p, self.w, self.kernel * self.in_ch, self.kernel * self.out_ch, rng);
    }

    /// Receptive field of output step `t`: the first tap used and the input
    /// range it covers, after clipping at the sequence ends.
    fn field(&self, t: usize, len: usize) -> (usize, std::ops::Range<usize>) {
        let pad = self.kernel / 2;
        let lo = t.saturating_sub(pad);
        let hi = (t + self.kernel - pad).min(len);
        (lo + pad - t, lo..hi)
    }

    /// Zero-padded "same" convolution; returns the output and the cached input.
    pub fn forward(&self, p: &[f64], x: &Array3<f64>) -> (Array3<f64>, Array3<f64>) {
        let x = x.as_standard_layout().into_owned();
        let (n, len, cin) = x.dim();
        let cout = self.out_ch;
        let w = &p[self.w.range()];
        let b = &p[self.b.range()];
        let src = x.as_slice().expect("standard layout");
        let mut y = Array3::zeros((n, len, cout));
        let dst = y.as_slice_mut().expect("fresh array");
        for i in 0..n {
            let seq = &src[i * len * cin..(i + 1) * len * cin];
            for (t, out) in dst[i * len * cout..(i + 1) * len * cout].chunks_exact_mut(cout).enumerate() {
                out.copy_from_slice(b);
                let (j0, r) = self.field(t, len);
                let patch = &seq[r.start * cin..r.end * cin];
                let wblk = &w[j0 * cin * cout..][..patch.len() * cout];
                for (&xv, wrow) in patch.iter().zip(wblk.chunks_exact(cout)) {
                    for (o, &wv) in out.iter_mut().zip(wrow) {
                        *o += xv * wv;
                    }
                }
            }
        }
        (y, x)
    }

    pub fn backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        x: &Array3<f64>,
        dy: &Array3<f64>,
        need_dx: bool,
    ) -> Option<Array3<f64>> {
        let dy = dy.as_standard_layout();
        let (n, len, cin) = x.dim();
        let cout = self.out_ch;
        let src = x.as_slice().expect("standard layout");
        let d = dy.as_slice().expect("standard layout");
        let (gw, gb) = g[self.w.offset..self.b.offset + self.b.len()].split_at_mut(self.w.len());
        // `(cout × k·cin)` so the input gradient is a sum of contiguous axpys.
        let wt = need_dx.then(|| self.w.mat(p).t().as_standard_layout().into_owned());
        let mut dx = need_dx.then(|| Array3::<f64>::zeros((n, len, cin)));
        for i in 0..n {
            let seq = &src[i * len * cin..(i + 1) * len * cin];
            let dseq = &d[i * len * cout..(i + 1) * len * cout];
            for (t, drow) in dseq.chunks_exact(cout).enumerate() {
                for (acc, &dv) in gb.iter_mut().zip(drow) {
                    *acc += dv;
                }
                let (j0, r) = self.field(t, len);
                let patch = &seq[r.start * cin..r.end * cin];
                let gblk = &mut gw[j0 * cin * cout..][..patch.len() * cout];
                for (&xv, grow) in patch.iter().zip(gblk.chunks_exact_mut(cout)) {
                    for (acc, &dv) in grow.iter_mut().zip(drow) {
                        *acc += xv * dv;
                    }
                }
                if let (Some(dx), Some(wt)) = (dx.as_mut(), wt.as_ref()) {
                    let dpatch = &mut dx.as_slice_mut().expect("fresh array")
                        [(i * len + r.start) * cin..(i * len + r.end) * cin];
                    let kc = self.kernel * cin;
                    let wt = wt.as_slice().expect("standard layout");
                    for (&dv, wrow) in drow.iter().zip(wt.chunks_exact(kc)) {
                        for (acc, &wv) in dpatch.iter_mut().zip(&wrow[j0 * cin..]) {
                            *acc += dv * wv;
                        }
                    }
                }
            }
        }
        dx
    }
}

pub fn relu_forward(x: Array3<f64>) -> Array3<f64> {
    x.mapv_into(|v| v.max(0.0))
}

/// Gradient through a rectifier given its output.
pub fn relu_backward(y: &Array3<f64>, mut dy: Array3<f64>) -> Array3<f64> {
    dy.zip_mut_with(y, |d, &out| {
        if out <= 0.0 {
            *d = 0.0;
        }
    });
    dy
}

/// Non-overlapping max pooling over time; trailing samples are dropped.
pub fn maxpool_forward(x: &Array3<f64>, size: usize) -> (Array3<f64>, Vec<u32>) {
    let (n, len, c) = x.dim();
    let out_len = len / size;
    let mut y = Array3::zeros((n, out_len, c));
    let mut arg = vec![0u32; n * out_len * c];
    let src = x.as_slice().expect("standard layout");
    let dst = y.as_slice_mut().expect("fresh array");
    for i in 0..n {
        for t in 0..out_len {
            for ch in 0..c {
                let mut best = (i * len + t * size) * c + ch;
                for j in 1..size {
                    let idx = (i * len + t * size + j) * c + ch;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = (i * out_len + t) * c + ch;
                dst[o] = src[best];
                arg[o] = best as u32;
            }
        }
    }
    (y, arg)
}

pub fn maxpool_backward(dy: &Array3<f64>, arg: &[u32], in_dim: (usize, usize, usize)) -> Array3<f64> {
    let mut dx = Array3::zeros(in_dim);
    let dst = dx.as_slice_mut().expect("fresh array");
    for (d, &a) in dy.iter().zip(arg) {
        dst[a as usize] += d;
    }
    dx
}

/// Non-overlapping average pooling over time; trailing samples are dropped.
pub fn meanpool_forward(x: &Array3<f64>, size: usize) -> Array3<f64> {
    let x = x.as_standard_layout();
    let (n, len, c) = x.dim();
    let out_len = len / size;
    let mut y = Array3::zeros((n, out_len, c));
    let scale = 1.0 / size as f64;
    let src = x.as_slice().expect("standard layout");
    let dst = y.as_slice_mut().expect("fresh array");
    for i in 0..n {
        for t in 0..out_len {
            let out = &mut dst[(i * out_len + t) * c..][..c];
            let window = &src[(i * len + t * size) * c..][..size * c];
            for row in window.chunks_exact(c) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o *= scale;
            }
        }
    }
    y
}

pub fn meanpool_backward(dy: &Array3<f64>, size: usize, in_dim: (usize, usize, usize)) -> Array3<f64> {
    let dy = dy.as_standard_layout();
    let (n, out_len, c) = dy.dim();
    let mut dx = Array3::zeros(in_dim);
    let scale = 1.0 / size as f64;
    let src = dy.as_slice().expect("standard layout");
    let dst = dx.as_slice_mut().expect("fresh array");
    let len = in_dim.1;
    for i in 0..n {
        for t in 0..out_len {
            let d = &src[(i * out_len + t) * c..][..c];
            for row in dst[(i * len + t * size) * c..][..size * c].chunks_exact_mut(c) {
                for (o, &v) in row.iter_mut().zip(d) {
                    *o = v * scale;
                }
            }
        }
    }
    dx
}

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: Slot,
    pub b: Slot,
}

impl Dense {
    pub fn new(layout: &mut Layout, input: usize, output: usize) -> Self {
        Dense {
            input,
            output,
            w: layout.alloc(input, output),
            b: layout.alloc(1, output),
        }
    }

    pub fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        glorot(p, self.w, self.input, self.output, rng);
    }

    pub fn forward(&self, p: &[f64], x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.mat(p));
        y += &self.b.vec(p);
        y
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, &mut self.w.mat_mut(g));
        self.b.vec_mut(g).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        dy.dot(&self.w.mat(p).t())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One direction of an LSTM layer, gates ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
    pub w: Slot,
    pub u: Slot,
    pub b: Slot,
}

pub struct LstmCache {
    x: Array2<f64>,
    steps: Vec<StepCache>,
}

struct StepCache {
    t: usize,
    /// Activated gates `[i, f, g, o]`, `batch × 4H`.
    gates: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    tanh_c: Array2<f64>,
}

impl Lstm {
    pub fn new(layout: &mut Layout, input: usize, hidden: usize, reverse: bool) -> Self {
        Lstm {
            input,
            hidden,
            reverse,
            w: layout.alloc(input, 4 * hidden),
            u: layout.alloc(hidden, 4 * hidden),
            b: layout.alloc(1, 4 * hidden),
        }
    }

    pub fn init(&self, p: &mut [f64], rng: &mut impl Rng) {
        glorot(p, self.w, self.input, 4 * self.hidden, rng);
        glorot(p, self.u, self.hidden, 4 * self.hidden, rng);
        let h = self.hidden;
        let mut b = self.b.vec_mut(p);
        b.fill(0.0);
        b.slice_mut(s![h..2 * h]).fill(1.0);
    }

    fn time_order(&self, steps: usize) -> Vec<usize> {
        if self.reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        }
    }

    /// Hidden states for every time step, in input time order.
    pub fn forward(&self, p: &[f64], x: &Array3<f64>) -> (Array3<f64>, LstmCache) {
        let (batch, steps, _) = x.dim();
        let h = self.hidden;
        let x2 = as_rows(x).into_owned();
        let xw = x2
            .dot(&self.w.mat(p))
            .into_shape_with_order((batch, steps, 4 * h))
            .expect("standard layout");
        let u = self.u.mat(p);
        let b = self.b.vec(p);
        let mut out = Array3::zeros((batch, steps, h));
        let mut h_prev = Array2::zeros((batch, h));
        let mut c_prev = Array2::zeros((batch, h));
        let mut cache = Vec::with_capacity(steps);
        for t in self.time_order(steps) {
            let mut z = xw.slice(s![.., t, ..]).to_owned();
            ndarray::linalg::general_mat_mul(1.0, &h_prev, &u, 1.0, &mut z);
            z += &b;
            let mut c = Array2::<f64>::zeros((batch, h));
            let mut tanh_c = Array2::<f64>::zeros((batch, h));
            let mut h_new = Array2::<f64>::zeros((batch, h));
            let rows = z
                .as_slice_mut()
                .expect("fresh array")
                .chunks_exact_mut(4 * h)
                .zip(c_prev.as_slice().expect("fresh array").chunks_exact(h))
                .zip(c.as_slice_mut().expect("fresh array").chunks_exact_mut(h))
                .zip(tanh_c.as_slice_mut().expect("fresh array").chunks_exact_mut(h))
                .zip(h_new.as_slice_mut().expect("fresh array").chunks_exact_mut(h));
            for ((((zr, cp), cr), tr), hr) in rows {
                let (ifg, o) = zr.split_at_mut(3 * h);
                let (i_f, g) = ifg.split_at_mut(2 * h);
                i_f.iter_mut().chain(o.iter_mut()).for_each(|v| *v = sigmoid(*v));
                g.iter_mut().for_each(|v| *v = v.tanh());
                let (gi, gf) = i_f.split_at(h);
                for k in 0..h {
                    cr[k] = gf[k] * cp[k] + gi[k] * g[k];
                    tr[k] = cr[k].tanh();
                    hr[k] = o[k] * tr[k];
                }
            }
            out.slice_mut(s![.., t, ..]).assign(&h_new);
            cache.push(StepCache {
                t,
                gates: z,
                h_prev: std::mem::replace(&mut h_prev, h_new),
                c_prev: std::mem::replace(&mut c_prev, c),
                tanh_c,
            });
        }
        (out, LstmCache { x: x2, steps: cache })
    }

    /// Backpropagation through time; `dh` is the gradient w.r.t. every output state.
    pub fn backward(&self, p: &[f64], g: &mut [f64], cache: &LstmCache, dh: &Array3<f64>, need_dx: bool) -> Option<Array3<f64>> {
        let (batch, steps, _) = dh.dim();
        let h = self.hidden;
        let u = self.u.mat(p);
        let mut dz_all = Array3::<f64>::zeros((batch, steps, 4 * h));
        let mut dh_next = Array2::<f64>::zeros((batch, h));
        let mut dc_next = Array2::<f64>::zeros((batch, h));
        let mut du = self.u.mat_mut(g);
        for step in cache.steps.iter().rev() {
            let dh_t = (&dh.slice(s![.., step.t, ..]) + &dh_next).as_standard_layout().into_owned();
            let mut dz = Array2::<f64>::zeros((batch, 4 * h));
            let rows = dz
                .as_slice_mut()
                .expect("fresh array")
                .chunks_exact_mut(4 * h)
                .zip(step.gates.as_slice().expect("fresh array").chunks_exact(4 * h))
                .zip(step.tanh_c.as_slice().expect("fresh array").chunks_exact(h))
                .zip(step.c_prev.as_slice().expect("fresh array").chunks_exact(h))
                .zip(dh_t.as_slice().expect("standard layout").chunks_exact(h))
                .zip(dc_next.as_slice_mut().expect("fresh array").chunks_exact_mut(h));
            for (((((dzr, gr), tcr), cpr), dhr), dcr) in rows {
                for k in 0..h {
                    let (i, f, gg, o) = (gr[k], gr[h + k], gr[2 * h + k], gr[3 * h + k]);
                    let tc = tcr[k];
                    let dhv = dhr[k];
                    let dc = dhv * o * (1.0 - tc * tc) + dcr[k];
                    dzr[k] = dc * gg * i * (1.0 - i);
                    dzr[h + k] = dc * cpr[k] * f * (1.0 - f);
                    dzr[2 * h + k] = dc * i * (1.0 - gg * gg);
                    dzr[3 * h + k] = dhv * tc * o * (1.0 - o);
                    dcr[k] = dc * f;
                }
            }
            ndarray::linalg::general_mat_mul(1.0, &step.h_prev.t(), &dz, 1.0, &mut du);
            dh_next = dz.dot(&u.t());
            dz_all.slice_mut(s![.., step.t, ..]).assign(&dz);
        }
        drop(du);
        let dz2 = as_rows(&dz_all);
        ndarray::linalg::general_mat_mul(1.0, &cache.x.t(), &dz2, 1.0, &mut self.w.mat_mut(g));
        self.b.vec_mut(g).scaled_add(1.0, &dz2.sum_axis(Axis(0)));
        need_dx.then(|| {
            dz2.dot(&self.w.mat(p).t())
                .into_shape_with_order((batch, steps, self.input))
                .expect("standard layout")
        })
    }
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

/// Mean categorical cross-entropy and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let mut p = softmax(logits);
    let n = labels.len() as f64;
    let mut loss = 0.0;
    for (mut row, &y) in p.rows_mut().into_iter().zip(labels) {
        loss -= row[y].max(1e-300).ln();
        row[y] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    (loss / n, p)
}
