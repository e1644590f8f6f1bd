//! Network topologies and their forward/backward passes.

use ndarray::{concatenate, s, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ops::{self, Conv1d, Dense, Layout, Lstm, LstmCache};
use crate::domain::N_STYLES;
use crate::error::{Error, Result};
use crate::rng::{stream_id, stream_rng};
use crate::windowing::{N_SUBSEGMENTS, SEGMENT_LEN, SUBSEGMENT_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// One max-pool after the last convolution block.
    Literal,
    /// A max-pool after every convolution block.
    PerBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnLstmSpec {
    pub subsegments: usize,
    pub subsegment_len: usize,
    pub channels: usize,
    /// Mean-pool factor applied to the raw input before the first convolution.
    #[serde(default = "one")]
    pub input_downsample: usize,
    /// Filters of each convolution, grouped by block.
    pub conv_blocks: Vec<Vec<usize>>,
    pub kernel_size: usize,
    pub pooling_mode: PoolingMode,
    pub pool_size: usize,
    /// Extra mean-pool over time before flattening.
    pub reduce_factor: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    /// Fully connected sizes; the last must be 8.
    pub head: Vec<usize>,
}

fn one() -> usize {
    1
}

impl Default for CnnLstmSpec {
    fn default() -> Self {
        CnnLstmSpec {
            subsegments: N_SUBSEGMENTS,
            subsegment_len: SUBSEGMENT_LEN,
            channels: 3,
            input_downsample: 1,
            conv_blocks: vec![vec![64, 64], vec![128, 128], vec![256, 256]],
            kernel_size: 3,
            pooling_mode: PoolingMode::PerBlock,
            pool_size: 2,
            reduce_factor: 8,
            lstm_hidden: 256,
            lstm_layers: 2,
            head: vec![200, N_STYLES],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub input_len: usize,
    pub channels: usize,
    #[serde(default = "one")]
    pub input_downsample: usize,
    /// One convolution followed by a max-pool per entry.
    pub filters: Vec<usize>,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub head: Vec<usize>,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec {
            input_len: SEGMENT_LEN,
            channels: 3,
            input_downsample: 1,
            filters: vec![128, 256, 384, 512],
            kernel_size: 3,
            pool_size: 4,
            head: vec![384, 200, 120, N_STYLES],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    CnnLstm(CnnLstmSpec),
    Cnn(CnnSpec),
}

impl ModelSpec {
    /// Samples per input segment.
    pub fn input_len(&self) -> usize {
        match self {
            ModelSpec::CnnLstm(s) => s.subsegments * s.subsegment_len,
            ModelSpec::Cnn(s) => s.input_len,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            ModelSpec::CnnLstm(s) => s.channels,
            ModelSpec::Cnn(s) => s.channels,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum SeqOp {
    Conv(Conv1d),
    Relu,
    MaxPool(usize),
    MeanPool(usize),
}

enum SeqCache {
    Conv(Array3<f64>),
    Relu(Array3<f64>),
    MaxPool(Vec<u32>, (usize, usize, usize)),
    MeanPool((usize, usize, usize)),
}

/// A built topology. Parameters are held separately in a flat vector.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    trunk: Vec<SeqOp>,
    /// Forward and backward direction per recurrent layer.
    lstm: Vec<(Lstm, Lstm)>,
    head: Vec<Dense>,
    n_params: usize,
    /// Recurrent time steps per segment (1 for the CNN).
    steps: usize,
    downsample: usize,
    /// Samples and channels of one prepared trunk input.
    trunk_in: (usize, usize),
    embed_dim: usize,
}

pub(crate) struct Tape {
    batch: usize,
    trunk: Vec<SeqCache>,
    trunk_out: (usize, usize, usize),
    lstm: Vec<(LstmCache, LstmCache)>,
    head_inputs: Vec<Array2<f64>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Parameter(format!("inconsistent network spec: {}", msg.into()))
}

struct TrunkBuilder<'a> {
    layout: &'a mut Layout,
    ops: Vec<SeqOp>,
    len: usize,
    ch: usize,
}

impl TrunkBuilder<'_> {
    fn conv(&mut self, kernel: usize, filters: usize) -> Result<()> {
        if kernel == 0 || kernel % 2 == 0 {
            return Err(invalid(format!("kernel size {kernel} must be odd")));
        }
        if filters == 0 {
            return Err(invalid("zero filters"));
        }
        self.ops.push(SeqOp::Conv(Conv1d::new(self.layout, kernel, self.ch, filters)));
        self.ops.push(SeqOp::Relu);
        self.ch = filters;
        Ok(())
    }

    fn pool(&mut self, size: usize, max: bool) -> Result<()> {
        if size == 0 {
            return Err(invalid("zero pool size"));
        }
        if size == 1 {
            return Ok(());
        }
        if self.len / size == 0 {
            return Err(invalid(format!("pooling {} samples by {size} leaves nothing", self.len)));
        }
        self.len /= size;
        self.ops.push(if max { SeqOp::MaxPool(size) } else { SeqOp::MeanPool(size) });
        Ok(())
    }
}

fn downsampled(len: usize, factor: usize) -> Result<usize> {
    if factor == 0 || len / factor == 0 {
        return Err(invalid(format!("cannot downsample {len} samples by {factor}")));
    }
    Ok(len / factor)
}

fn build_head(layout: &mut Layout, input: usize, sizes: &[usize]) -> Result<Vec<Dense>> {
    if sizes.last() != Some(&N_STYLES) {
        return Err(invalid(format!("head must end with {N_STYLES} outputs, got {sizes:?}")));
    }
    if sizes.contains(&0) {
        return Err(invalid("zero-width dense layer"));
    }
    let mut prev = input;
    Ok(sizes
        .iter()
        .map(|&n| {
            let d = Dense::new(layout, prev, n);
            prev = n;
            d
        })
        .collect())
}

impl Network {
    pub fn build(spec: &ModelSpec) -> Result<Network> {
        let mut layout = Layout::default();
        match spec {
            ModelSpec::CnnLstm(s) => {
                if s.subsegments == 0 || s.subsegment_len == 0 || s.channels == 0 {
                    return Err(invalid("empty input shape"));
                }
                if s.conv_blocks.is_empty() || s.conv_blocks.iter().any(|b| b.is_empty()) {
                    return Err(invalid("every convolution block needs at least one layer"));
                }
                if s.lstm_layers == 0 || s.lstm_hidden == 0 {
                    return Err(invalid("recurrent part needs at least one layer and one unit"));
                }
                let trunk_len = downsampled(s.subsegment_len, s.input_downsample)?;
                let mut tb = TrunkBuilder {
                    layout: &mut layout,
                    ops: Vec::new(),
                    len: trunk_len,
                    ch: s.channels,
                };
                for block in &s.conv_blocks {
                    for &f in block {
                        tb.conv(s.kernel_size, f)?;
                    }
                    if s.pooling_mode == PoolingMode::PerBlock {
                        tb.pool(s.pool_size, true)?;
                    }
                }
                if s.pooling_mode == PoolingMode::Literal {
                    tb.pool(s.pool_size, true)?;
                }
                tb.pool(s.reduce_factor, false)?;
                let (trunk, len, ch) = (tb.ops, tb.len, tb.ch);
                let embed_dim = len * ch;
                let mut lstm = Vec::new();
                let mut width = embed_dim;
                for _ in 0..s.lstm_layers {
                    let f = Lstm::new(&mut layout, width, s.lstm_hidden, false);
                    let b = Lstm::new(&mut layout, width, s.lstm_hidden, true);
                    lstm.push((f, b));
                    width = 2 * s.lstm_hidden;
                }
                let head = build_head(&mut layout, width, &s.head)?;
                Ok(Network {
                    spec: spec.clone(),
                    trunk,
                    lstm,
                    head,
                    n_params: layout.len,
                    steps: s.subsegments,
                    downsample: s.input_downsample,
                    trunk_in: (trunk_len, s.channels),
                    embed_dim,
                })
            }
            ModelSpec::Cnn(s) => {
                if s.input_len == 0 || s.channels == 0 || s.filters.is_empty() {
                    return Err(invalid("empty input shape or no convolution blocks"));
                }
                let trunk_len = downsampled(s.input_len, s.input_downsample)?;
                let mut tb = TrunkBuilder {
                    layout: &mut layout,
                    ops: Vec::new(),
                    len: trunk_len,
                    ch: s.channels,
                };
                for &f in &s.filters {
                    tb.conv(s.kernel_size, f)?;
                    tb.pool(s.pool_size, true)?;
                }
                let (trunk, len, ch) = (tb.ops, tb.len, tb.ch);
                let embed_dim = len * ch;
                let head = build_head(&mut layout, embed_dim, &s.head)?;
                Ok(Network {
                    spec: spec.clone(),
                    trunk,
                    lstm: Vec::new(),
                    head,
                    n_params: layout.len,
                    steps: 1,
                    downsample: s.input_downsample,
                    trunk_in: (trunk_len, s.channels),
                    embed_dim,
                })
            }
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Shape of a prepared input: `(steps · samples per step, channels)`.
    pub fn input_shape(&self) -> (usize, usize) {
        (self.steps * self.trunk_in.0, self.trunk_in.1)
    }

    /// Mean-pools each raw step down to the trunk input rate and applies
    /// `(x − mean) / std` per channel. Samples that do not fill a whole pooling
    /// window at the end of a step are dropped.
    pub fn prepare(&self, raw: ArrayView2<'_, f64>, mean: &[f64], std: &[f64]) -> Result<Array2<f64>> {
        let ch = self.trunk_in.1;
        let raw_len = self.spec.input_len();
        if raw.dim() != (raw_len, ch) {
            return Err(Error::Contract(format!(
                "input shape {:?} does not match model input ({raw_len}, {ch})",
                raw.dim()
            )));
        }
        let raw_step = raw_len / self.steps;
        let (len, _) = self.trunk_in;
        let ds = self.downsample;
        let scale = 1.0 / ds as f64;
        let mut out = Array2::zeros((self.steps * len, ch));
        for step in 0..self.steps {
            for t in 0..len {
                let start = step * raw_step + t * ds;
                let mut row = out.row_mut(step * len + t);
                for r in raw.slice(s![start..start + ds, ..]).rows() {
                    row += &r;
                }
                for c in 0..ch {
                    row[c] = (row[c] * scale - mean[c]) / std[c];
                }
            }
        }
        Ok(out)
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn output_len(&self) -> usize {
        self.head.last().map_or(0, |d| d.output)
    }

    /// `(kernel, in_channels, out_channels)` of the first convolution.
    pub fn first_conv_shape(&self) -> Option<(usize, usize, usize)> {
        self.trunk.iter().find_map(|op| match op {
            SeqOp::Conv(c) => Some((c.kernel, c.in_ch, c.out_ch)),
            _ => None,
        })
    }

    pub fn head_sizes(&self) -> Vec<usize> {
        self.head.iter().map(|d| d.output).collect()
    }

    /// Width of the per-sub-segment embedding fed to the recurrent layers
    /// (or of the flattened feature map for the CNN).
    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Seeded Glorot initialization; zero biases and unit forget-gate bias.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        let mut rng = stream_rng(seed, stream_id(7, &[]));
        for op in &self.trunk {
            if let SeqOp::Conv(c) = op {
                c.init(&mut p, &mut rng);
            }
        }
        for (f, b) in &self.lstm {
            f.init(&mut p, &mut rng);
            b.init(&mut p, &mut rng);
        }
        for d in &self.head {
            d.init(&mut p, &mut rng);
        }
        p
    }

    fn trunk_forward(&self, p: &[f64], mut x: Array3<f64>, caches: Option<&mut Vec<SeqCache>>) -> Array3<f64> {
        let mut store = caches;
        for op in &self.trunk {
            x = match *op {
                SeqOp::Conv(c) => {
                    let (y, input) = c.forward(p, &x);
                    if let Some(cs) = store.as_deref_mut() {
                        cs.push(SeqCache::Conv(input));
                    }
                    y
                }
                SeqOp::Relu => {
                    let y = ops::relu_forward(x);
                    if let Some(cs) = store.as_deref_mut() {
                        cs.push(SeqCache::Relu(y.clone()));
                    }
                    y
                }
                SeqOp::MaxPool(k) => {
                    let dim = x.dim();
                    let (y, arg) = ops::maxpool_forward(&x, k);
                    if let Some(cs) = store.as_deref_mut() {
                        cs.push(SeqCache::MaxPool(arg, dim));
                    }
                    y
                }
                SeqOp::MeanPool(k) => {
                    let dim = x.dim();
                    if let Some(cs) = store.as_deref_mut() {
                        cs.push(SeqCache::MeanPool(dim));
                    }
                    ops::meanpool_forward(&x, k)
                }
            };
        }
        x
    }

    fn trunk_backward(&self, p: &[f64], g: &mut [f64], caches: &[SeqCache], mut dy: Array3<f64>) {
        let first_conv = self
            .trunk
            .iter()
            .position(|op| matches!(op, SeqOp::Conv(_)))
            .expect("trunk has a convolution");
        for (i, (op, cache)) in self.trunk.iter().zip(caches).enumerate().rev() {
            if i < first_conv {
                break;
            }
            dy = match (op, cache) {
                (SeqOp::Conv(c), SeqCache::Conv(input)) => match c.backward(p, g, input, &dy, i > first_conv) {
                    Some(dx) => dx,
                    None => return,
                },
                (SeqOp::Relu, SeqCache::Relu(y)) => ops::relu_backward(y, dy),
                (SeqOp::MaxPool(_), SeqCache::MaxPool(arg, dim)) => ops::maxpool_backward(&dy, arg, *dim),
                (SeqOp::MeanPool(k), SeqCache::MeanPool(dim)) => ops::meanpool_backward(&dy, *k, *dim),
                _ => unreachable!("cache matches op"),
            };
        }
    }

    /// Per-sub-segment trunk embeddings, `batch × subsegments × embed_dim`.
    /// For the CNN the whole segment is one step.
    pub fn embed(&self, p: &[f64], x: &Array3<f64>) -> Array3<f64> {
        let batch = x.dim().0;
        let (len, ch) = self.trunk_in;
        let steps = self.steps;
        let xs = x
            .to_owned()
            .into_shape_with_order((batch * steps, len, ch))
            .expect("segment tiles into trunk inputs");
        self.trunk_forward(p, xs, None)
            .into_shape_with_order((batch, steps, self.embed_dim))
            .expect("standard layout")
    }

    fn check_input(&self, p: &[f64], x: &Array3<f64>) -> Result<()> {
        if p.len() != self.n_params {
            return Err(Error::Contract(format!(
                "parameter vector has {} entries, network needs {}",
                p.len(),
                self.n_params
            )));
        }
        let (_, len, ch) = x.dim();
        if (len, ch) != self.input_shape() {
            return Err(Error::Contract(format!(
                "prepared input shape {len} × {ch} does not match {:?}",
                self.input_shape()
            )));
        }
        Ok(())
    }

    fn forward_impl(&self, p: &[f64], x: &Array3<f64>, record: bool) -> (Array2<f64>, Option<Tape>) {
        let batch = x.dim().0;
        let (len, ch) = self.trunk_in;
        let steps = self.steps;
        let xs = x
            .to_owned()
            .into_shape_with_order((batch * steps, len, ch))
            .expect("segment tiles into trunk inputs");
        let mut trunk_caches = Vec::new();
        let feat = self.trunk_forward(p, xs, record.then_some(&mut trunk_caches));
        let trunk_out = feat.dim();
        let mut lstm_caches = Vec::new();
        let mut summary = if self.lstm.is_empty() {
            feat.into_shape_with_order((batch, self.embed_dim)).expect("standard layout")
        } else {
            let mut seq = feat
                .into_shape_with_order((batch, steps, self.embed_dim))
                .expect("standard layout");
            let mut last = Array2::zeros((0, 0));
            for (f, b) in &self.lstm {
                let (hf, cf) = f.forward(p, &seq);
                let (hb, cb) = b.forward(p, &seq);
                last = concatenate![Axis(1), hf.slice(s![.., steps - 1, ..]), hb.slice(s![.., 0, ..])];
                seq = concatenate![Axis(2), hf, hb];
                if record {
                    lstm_caches.push((cf, cb));
                }
            }
            last
        };
        let mut head_inputs = Vec::new();
        let n_head = self.head.len();
        for (i, d) in self.head.iter().enumerate() {
            let y = d.forward(p, &summary);
            let input = std::mem::replace(&mut summary, y);
            if record {
                head_inputs.push(input);
            }
            if i + 1 < n_head {
                summary.mapv_inplace(|v| v.max(0.0));
            }
        }
        let tape = record.then(|| Tape {
            batch,
            trunk: trunk_caches,
            trunk_out,
            lstm: lstm_caches,
            head_inputs,
        });
        (summary, tape)
    }

    /// Class logits, `batch × 8`.
    pub fn logits(&self, p: &[f64], x: &Array3<f64>) -> Result<Array2<f64>> {
        self.check_input(p, x)?;
        Ok(self.forward_impl(p, x, false).0)
    }

    pub fn predict_proba(&self, p: &[f64], x: &Array3<f64>) -> Result<Array2<f64>> {
        Ok(ops::softmax(&self.logits(p, x)?))
    }

    fn backward(&self, p: &[f64], g: &mut [f64], tape: &Tape, dlogits: Array2<f64>) {
        let mut d = dlogits;
        for (i, dense) in self.head.iter().enumerate().rev() {
            let input = &tape.head_inputs[i];
            d = dense.backward(p, g, input, &d);
            if i > 0 {
                d.zip_mut_with(input, |dv, &v| {
                    if v <= 0.0 {
                        *dv = 0.0;
                    }
                });
            }
        }
        let dfeat = if self.lstm.is_empty() {
            d.into_shape_with_order(tape.trunk_out).expect("standard layout")
        } else {
            let steps = tape.trunk_out.0 / tape.batch;
            let mut dsummary = Some(d);
            let mut dseq: Option<Array3<f64>> = None;
            for ((f, b), (cf, cb)) in self.lstm.iter().zip(&tape.lstm).rev() {
                let h = f.hidden;
                let (mut dhf, mut dhb) = match dseq.take() {
                    Some(ds) => (ds.slice(s![.., .., ..h]).to_owned(), ds.slice(s![.., .., h..]).to_owned()),
                    None => (
                        Array3::zeros((tape.batch, steps, h)),
                        Array3::zeros((tape.batch, steps, h)),
                    ),
                };
                if let Some(ds) = dsummary.take() {
                    dhf.slice_mut(s![.., steps - 1, ..]).scaled_add(1.0, &ds.slice(s![.., ..h]));
                    dhb.slice_mut(s![.., 0, ..]).scaled_add(1.0, &ds.slice(s![.., h..]));
                }
                let dxf = f.backward(p, g, cf, &dhf, true).expect("requested");
                let dxb = b.backward(p, g, cb, &dhb, true).expect("requested");
                dseq = Some(dxf + dxb);
            }
            dseq.expect("at least one recurrent layer")
                .into_shape_with_order(tape.trunk_out)
                .expect("standard layout")
        };
        self.trunk_backward(p, g, &tape.trunk, dfeat);
    }

    /// Mean cross-entropy over the batch and its gradient w.r.t. the parameters.
    pub fn loss_and_grad(&self, p: &[f64], x: &Array3<f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_input(p, x)?;
        if labels.len() != x.dim().0 {
            return Err(Error::Contract(format!(
                "{} labels for a batch of {}",
                labels.len(),
                x.dim().0
            )));
        }
        let (logits, tape) = self.forward_impl(p, x, true);
        let (loss, dlogits) = ops::cross_entropy(&logits, labels);
        let mut g = vec![0.0; self.n_params];
        self.backward(p, &mut g, &tape.expect("recorded"), dlogits);
        Ok((loss, g))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, p: &[f64], x: &Array3<f64>, labels: &[usize]) -> Result<f64> {
        Ok(ops::cross_entropy(&self.logits(p, x)?, labels).0)
    }
}
