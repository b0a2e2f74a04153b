use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Architecture, ModelSpec, BLOCK_KERNEL, NUM_CLASSES, STEM_KERNEL};
use crate::config::LayerKind;
use crate::error::{Error, Result};
use crate::nn::ops::{self, Mode, BN_EPS, BN_MOMENTUM};
use crate::nn::{Gradients, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerPlanKind {
    Conv,
    Norm,
    Act,
    Add,
    Pool,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Main,
    Skip,
}

/// Flat descriptor of one layer, for summaries and structural checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlan {
    pub kind: LayerPlanKind,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// 1-based group index; `None` for the stem and head.
    pub group: Option<usize>,
    pub block: Option<usize>,
    pub branch: Branch,
}

#[derive(Debug, Clone)]
enum Layer {
    Conv { weight: usize, kernel: usize, stride: usize, cin: usize, cout: usize },
    Norm { gamma: usize, beta: usize, mean: usize, var: usize, channels: usize },
    Act,
}

#[derive(Debug, Clone)]
struct Block {
    group: usize,
    index: usize,
    main: Vec<Layer>,
    /// Projection convolution; `None` means identity.
    skip: Option<Layer>,
    strided: bool,
}

/// Statistics to fold into running buffers after a train-mode pass.
#[derive(Debug)]
struct StatUpdate {
    mean_slot: usize,
    var_slot: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    arch: Architecture,
    stem: Vec<Layer>,
    blocks: Vec<Block>,
    head_weight: usize,
    head_bias: usize,
    params: ParamStore,
    buffers: ParamStore,
    mode: Mode,
    input_channels: usize,
    bn_eps: f64,
    bn_momentum: f64,
}

struct Builder<'r> {
    params: ParamStore,
    buffers: ParamStore,
    rng: &'r mut ChaCha8Rng,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, kernel: usize, stride: usize) -> Result<Layer> {
        let bound = (1.0 / (cin * kernel) as f64).sqrt();
        let data = (0..cout * cin * kernel).map(|_| self.rng.gen_range(-bound..bound)).collect();
        let weight = self.params.insert(format!("{name}.weight"), Tensor::from_vec(&[cout, cin, kernel], data)?)?;
        Ok(Layer::Conv { weight, kernel, stride, cin, cout })
    }

    fn norm(&mut self, name: &str, channels: usize) -> Result<Layer> {
        let gamma = self.params.insert(format!("{name}.gamma"), Tensor::filled(&[channels], 1.0))?;
        let beta = self.params.insert(format!("{name}.beta"), Tensor::zeros(&[channels]))?;
        let mean = self.buffers.insert(format!("{name}.running_mean"), Tensor::zeros(&[channels]))?;
        let var = self.buffers.insert(format!("{name}.running_var"), Tensor::filled(&[channels], 1.0))?;
        Ok(Layer::Norm { gamma, beta, mean, var, channels })
    }
}

impl Network {
    /// Build and initialise a network. Conv and dense weights are drawn
    /// uniformly from ±sqrt(1/fan_in); norms start at γ = 1, β = 0; the head
    /// bias starts at zero.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let arch = spec.architecture()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { params: ParamStore::default(), buffers: ParamStore::default(), rng: &mut rng };

        let c0 = arch.input_filters;
        let stem = vec![b.conv("stem.conv", 1, c0, STEM_KERNEL, 2)?, b.norm("stem.norm", c0)?, Layer::Act];

        let mut blocks = Vec::new();
        let mut c_in = c0;
        for (gi, g) in arch.groups.iter().enumerate() {
            for bi in 0..g.blocks {
                let prefix = format!("group{}.block{}", gi + 1, bi + 1);
                let first = bi == 0;
                let strided = first && g.downsample;
                let mut ch = if first { c_in } else { g.width };
                let mut seen_conv = false;
                let mut main = Vec::with_capacity(arch.layout.len());
                for (li, kind) in arch.layout.iter().enumerate() {
                    match kind {
                        LayerKind::Conv => {
                            let stride = if strided && !seen_conv { 2 } else { 1 };
                            main.push(b.conv(&format!("{prefix}.conv{li}"), ch, g.width, BLOCK_KERNEL, stride)?);
                            ch = g.width;
                            seen_conv = true;
                        }
                        LayerKind::Norm => main.push(b.norm(&format!("{prefix}.norm{li}"), ch)?),
                        LayerKind::Act => main.push(Layer::Act),
                    }
                }
                let block_in = if first { c_in } else { g.width };
                let skip = if first && (g.downsample || block_in != g.width) {
                    Some(b.conv(&format!("{prefix}.skip"), block_in, g.width, 1, if strided { 2 } else { 1 })?)
                } else {
                    None
                };
                blocks.push(Block { group: gi + 1, index: bi + 1, main, skip, strided });
            }
            c_in = g.width;
        }

        let bound = (1.0 / c_in as f64).sqrt();
        let w: Vec<f64> = (0..c_in * NUM_CLASSES).map(|_| b.rng.gen_range(-bound..bound)).collect();
        let head_weight = b.params.insert("head.weight", Tensor::from_vec(&[c_in, NUM_CLASSES], w)?)?;
        let head_bias = b.params.insert("head.bias", Tensor::zeros(&[NUM_CLASSES]))?;

        let Builder { params, buffers, .. } = b;
        Ok(Network {
            spec: spec.clone(),
            arch,
            stem,
            blocks,
            head_weight,
            head_bias,
            params,
            buffers,
            mode: Mode::Train,
            input_channels: 1,
            bn_eps: BN_EPS,
            bn_momentum: BN_MOMENTUM,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Running statistics of every norm layer.
    pub fn buffers(&self) -> &ParamStore {
        &self.buffers
    }

    pub(crate) fn buffers_mut(&mut self) -> &mut ParamStore {
        &mut self.buffers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn bn_eps(&self) -> f64 {
        self.bn_eps
    }

    pub fn bn_momentum(&self) -> f64 {
        self.bn_momentum
    }

    pub(crate) fn set_bn_hyper(&mut self, eps: f64, momentum: f64) {
        self.bn_eps = eps;
        self.bn_momentum = momentum;
    }

    /// Layer-by-layer description in execution order.
    pub fn layer_plans(&self) -> Vec<LayerPlan> {
        let mut out = Vec::new();
        let describe = |l: &Layer, ch: &mut usize, group, block, branch| -> LayerPlan {
            let (kind, kernel, stride, cin, cout) = match *l {
                Layer::Conv { kernel, stride, cin, cout, .. } => {
                    *ch = cout;
                    (LayerPlanKind::Conv, kernel, stride, cin, cout)
                }
                Layer::Norm { channels, .. } => (LayerPlanKind::Norm, 0, 1, channels, channels),
                Layer::Act => (LayerPlanKind::Act, 0, 1, *ch, *ch),
            };
            LayerPlan { kind, kernel, stride, in_channels: cin, out_channels: cout, group, block, branch }
        };
        let mut ch = 1;
        for l in &self.stem {
            out.push(describe(l, &mut ch, None, None, Branch::Main));
        }
        for blk in &self.blocks {
            let block_in = ch;
            let (g, b) = (Some(blk.group), Some(blk.index));
            for l in &blk.main {
                out.push(describe(l, &mut ch, g, b, Branch::Main));
            }
            if let Some(s) = &blk.skip {
                let mut sc = block_in;
                out.push(describe(s, &mut sc, g, b, Branch::Skip));
            }
            out.push(LayerPlan {
                kind: LayerPlanKind::Add,
                kernel: 0,
                stride: 1,
                in_channels: ch,
                out_channels: ch,
                group: g,
                block: b,
                branch: Branch::Main,
            });
        }
        let tail = |kind, cin, cout| LayerPlan {
            kind,
            kernel: 0,
            stride: 1,
            in_channels: cin,
            out_channels: cout,
            group: None,
            block: None,
            branch: Branch::Main,
        };
        out.push(tail(LayerPlanKind::Pool, ch, ch));
        out.push(tail(LayerPlanKind::Dense, ch, NUM_CLASSES));
        out
    }

    /// Temporal length entering the head for an input of length `len`.
    pub fn pre_pool_length(&self, len: usize) -> Result<usize> {
        self.check_length(len)
    }

    fn check_length(&self, len: usize) -> Result<usize> {
        let mut l = len;
        let halve = |l: &mut usize, stage: String| -> Result<()> {
            if *l < 2 {
                return Err(Error::Shape(format!(
                    "input of length {len} collapses at {stage}: length {} cannot be downsampled",
                    *l
                )));
            }
            *l = ops::conv1d_output_len(*l, 1, 2, 0).expect("l ≥ 2");
            Ok(())
        };
        halve(&mut l, "the stem".into())?;
        for blk in self.blocks.iter().filter(|b| b.strided) {
            halve(&mut l, format!("group {} block {}", blk.group, blk.index))?;
        }
        Ok(l)
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() != 3 || batch.dim(1) != self.input_channels || batch.dim(0) == 0 {
            return Err(Error::Shape(format!(
                "expected input [B, {}, L] with B ≥ 1, got {:?}",
                self.input_channels,
                batch.dims()
            )));
        }
        self.check_length(batch.dim(2)).map(|_| ())
    }

    fn apply_layer<'g>(
        &'g self,
        g: &mut Graph<'g>,
        x: Var,
        layer: &Layer,
        mode: Mode,
        updates: &mut Vec<StatUpdate>,
    ) -> Result<Var> {
        match *layer {
            Layer::Conv { weight, kernel, stride, .. } => {
                let w = g.param(weight, self.params.at(weight));
                g.conv1d(x, w, stride, kernel / 2)
            }
            Layer::Norm { gamma, beta, mean, var, .. } => {
                let gv = g.param(gamma, self.params.at(gamma));
                let bv = g.param(beta, self.params.at(beta));
                let running = (self.buffers.at(mean), self.buffers.at(var));
                let (y, stats) = g.batchnorm(x, gv, bv, running, mode, self.bn_eps)?;
                if let Some((m, v)) = stats {
                    updates.push(StatUpdate { mean_slot: mean, var_slot: var, mean: m, var: v });
                }
                Ok(y)
            }
            Layer::Act => Ok(g.relu(x)),
        }
    }

    fn record<'g>(&'g self, g: &mut Graph<'g>, batch: Tensor, mode: Mode) -> Result<(Var, Vec<StatUpdate>)> {
        self.check_input(&batch)?;
        let mut updates = Vec::new();
        let mut x = g.input(batch);
        for l in &self.stem {
            x = self.apply_layer(g, x, l, mode, &mut updates)?;
        }
        for blk in &self.blocks {
            let block_in = x;
            let mut y = x;
            for l in &blk.main {
                y = self.apply_layer(g, y, l, mode, &mut updates)?;
            }
            let s = match &blk.skip {
                Some(l) => self.apply_layer(g, block_in, l, mode, &mut updates)?,
                None => block_in,
            };
            x = g.add(y, s).map_err(|e| Error::Shape(format!("group {} block {}: {e}", blk.group, blk.index)))?;
        }
        let pooled = g.global_avg_pool(x)?;
        let w = g.param(self.head_weight, self.params.at(self.head_weight));
        let b = g.param(self.head_bias, self.params.at(self.head_bias));
        Ok((g.dense(pooled, w, b)?, updates))
    }

    fn apply_updates(&mut self, updates: Vec<StatUpdate>) {
        let m = self.bn_momentum;
        for u in updates {
            for (r, v) in self.buffers.at_mut(u.mean_slot).data_mut().iter_mut().zip(&u.mean) {
                *r = (1.0 - m) * *r + m * v;
            }
            for (r, v) in self.buffers.at_mut(u.var_slot).data_mut().iter_mut().zip(&u.var) {
                *r = (1.0 - m) * *r + m * v;
            }
        }
    }

    /// Logits for `batch` (`[B, 1, L]`) in the network's current mode.
    /// A train-mode pass updates running statistics and nothing else.
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor> {
        let mode = self.mode;
        let (logits, updates) = {
            let mut g = Graph::new();
            let (out, updates) = self.record(&mut g, batch.clone(), mode)?;
            (g.value(out).clone(), updates)
        };
        self.apply_updates(updates);
        Ok(logits)
    }

    /// Eval-mode logits; a pure function of the weights and the input.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let (out, _) = self.record(&mut g, batch.clone(), Mode::Eval)?;
        Ok(g.value(out).clone())
    }

    /// Eval-mode class probabilities.
    pub fn predict_proba(&self, batch: &Tensor) -> Result<Tensor> {
        ops::softmax(&self.predict(batch)?)
    }

    /// Cross-entropy loss and parameter gradients without touching any state.
    pub fn loss_and_gradients(&self, batch: &Tensor, labels: &[usize], mode: Mode) -> Result<(f64, Gradients)> {
        let mut g = Graph::new();
        let (logits, _) = self.record(&mut g, batch.clone(), mode)?;
        let loss = g.softmax_cross_entropy(logits, labels)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).item(), grads))
    }

    /// Train-mode forward and backward. Gradients are left on the parameter
    /// tensors for the optimizer; running statistics are updated.
    pub fn train_step(&mut self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        let (loss, grads, updates) = {
            let mut g = Graph::new();
            let (logits, updates) = self.record(&mut g, batch.clone(), Mode::Train)?;
            let loss = g.softmax_cross_entropy(logits, labels)?;
            let grads = g.backward(loss)?;
            (g.value(loss).item(), grads, updates)
        };
        self.apply_updates(updates);
        for (slot, grad) in grads.into_params().into_iter().enumerate() {
            if let Some(t) = grad {
                self.params.at_mut(slot).set_grad(t.into_data())?;
            }
        }
        Ok(loss)
    }
}
