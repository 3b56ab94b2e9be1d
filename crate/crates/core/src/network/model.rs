use ndarray::{Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NetworkConfig;
use crate::autograd::{Graph, Scalar, Tensor, Var};
use crate::baselines::linear_interpolate;
use crate::error::{Error, Result};
use crate::imaging::resize_bilinear;
use crate::sampling::{SynthesisSample, CONDITION_SIZE};

/// Heads clamp the interpolation base away from the saturated ends of their
/// squashing function before taking its inverse.
const HEAD_CLAMP: f64 = 1e-7;
/// Spatial size used when materialising a fresh parameter set.
const INIT_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: [usize; 4],
}

#[derive(Clone, Copy)]
enum Init {
    Kaiming(usize),
    Zeros,
    Ones,
}

struct Initializer {
    rng: ChaCha8Rng,
    specs: Vec<ParamSpec>,
    values: Vec<Tensor<f32>>,
}

impl Initializer {
    fn make(&mut self, name: &str, shape: [usize; 4], init: Init) -> Tensor<f32> {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Kaiming(fan_in) => {
                let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
                (0..n).map(|_| dist.sample(&mut self.rng) as f32).collect()
            }
        };
        let t = Tensor::from_vec(shape, data);
        self.specs.push(ParamSpec {
            name: name.to_string(),
            shape,
        });
        self.values.push(t.clone());
        t
    }
}

/// Walks the architecture once, either drawing new parameters or consuming
/// a prepared list in the same order.
struct Ctx<'a, T: Scalar> {
    g: Graph<T>,
    params: &'a [Tensor<T>],
    cursor: usize,
    init: Option<Initializer>,
}

impl<T: Scalar> Ctx<'_, T> {
    fn param(&mut self, name: &str, shape: [usize; 4], init: Init) -> Var {
        let id = self.cursor;
        self.cursor += 1;
        let t = match &mut self.init {
            Some(i) => i.make(name, shape, init).cast(),
            None => {
                let t = &self.params[id];
                debug_assert_eq!(t.shape(), shape, "{name}");
                t.clone()
            }
        };
        self.g.param(id, t)
    }

    fn conv(&mut self, x: Var, name: &str, cin: usize, cout: usize, k: usize, bias: bool) -> Var {
        let w = self.param(&format!("{name}.w"), [cout, cin, k, k], Init::Kaiming(cin * k * k));
        let b = bias.then(|| self.param(&format!("{name}.b"), [1, cout, 1, 1], Init::Zeros));
        self.g.conv2d(x, w, b)
    }

    fn norm_relu(&mut self, x: Var, name: &str, ch: usize) -> Var {
        let n = self.g.instance_norm(x);
        let gamma = self.param(&format!("{name}.gamma"), [1, ch, 1, 1], Init::Ones);
        let beta = self.param(&format!("{name}.beta"), [1, ch, 1, 1], Init::Zeros);
        let a = self.g.channel_affine(n, gamma, beta);
        self.g.relu(a)
    }

    /// conv3x3 -> instance norm -> affine -> ReLU, twice.
    fn conv_block(&mut self, x: Var, name: &str, cin: usize, cout: usize) -> Var {
        let h = self.conv(x, &format!("{name}.conv1"), cin, cout, 3, false);
        let h = self.norm_relu(h, &format!("{name}.norm1"), cout);
        let h = self.conv(h, &format!("{name}.conv2"), cout, cout, 3, false);
        self.norm_relu(h, &format!("{name}.norm2"), cout)
    }

    fn encoder(&mut self, x: Var, name: &str, cin: usize, chans: &[usize]) -> (Vec<Var>, Var) {
        let mut skips = Vec::with_capacity(chans.len());
        let (mut h, mut c) = (x, cin);
        for (level, &ch) in chans.iter().enumerate() {
            let f = self.conv_block(h, &format!("{name}.l{level}"), c, ch);
            skips.push(f);
            h = self.g.max_pool2(f);
            c = ch;
        }
        (skips, h)
    }

    /// Condition-fused bottleneck. There is no normalisation here so the
    /// spatially constant condition channels are not averaged away.
    fn bottleneck(&mut self, x: Var, name: &str, cin: usize, cout: usize) -> Var {
        let h = self.conv(x, &format!("{name}.fuse"), cin, cout, 1, true);
        let h = self.g.relu(h);
        let h = self.conv(h, &format!("{name}.conv"), cout, cout, 3, true);
        self.g.relu(h)
    }

    fn gate(&mut self, x: Var, g: Var, name: &str, ch: usize, use_attention: bool) -> Var {
        if !use_attention {
            return x;
        }
        let inter = (ch / 2).max(1);
        let p = GateParams {
            theta: self.param(&format!("{name}.theta.w"), [inter, ch, 1, 1], Init::Kaiming(ch)),
            phi: self.param(&format!("{name}.phi.w"), [inter, ch, 1, 1], Init::Kaiming(ch)),
            phi_bias: self.param(&format!("{name}.phi.b"), [1, inter, 1, 1], Init::Zeros),
            psi: self.param(&format!("{name}.psi.w"), [1, inter, 1, 1], Init::Kaiming(inter)),
            psi_bias: self.param(&format!("{name}.psi.b"), [1, 1, 1, 1], Init::Zeros),
        };
        attention_gate(&mut self.g, x, g, &p).0
    }

    fn decoder(&mut self, x: Var, skips: &[Var], name: &str, cin: usize, chans: &[usize], cout: usize, use_attention: bool) -> Var {
        let (mut h, mut c) = (x, cin);
        for level in (0..chans.len()).rev() {
            let ch = chans[level];
            let up = self.conv(h, &format!("{name}.l{level}.up"), c, ch, 1, true);
            let up = self.g.upsample2(up);
            let skip = self.gate(skips[level], up, &format!("{name}.l{level}.gate"), ch, use_attention);
            let cat = self.g.concat(&[up, skip]);
            h = self.conv_block(cat, &format!("{name}.l{level}.block"), 2 * ch, ch);
            c = ch;
        }
        self.conv(h, &format!("{name}.head"), c, cout, 1, true)
    }

    /// `base + sigmoid(d + logit(base)) - sigmoid(logit(base))`: equals `base`
    /// bit-for-bit when `d == 0` and matches `sigmoid(d + logit(base))` otherwise.
    fn sigmoid_residual(&mut self, d: Var, base: &Tensor<T>) -> Var {
        let (lo, hi) = (T::of_f64(HEAD_CLAMP), T::of_f64(1.0 - HEAD_CLAMP));
        let logit = map(base, |b| {
            let b = b.max(lo).min(hi);
            (b / (T::one() - b)).ln()
        });
        let start = map(&logit, |l| T::one() / (T::one() + (-l).exp()));
        let offset = zip(base, &start, |b, s| b - s);
        let l = self.g.input(logit);
        let z = self.g.add(d, l);
        let s = self.g.sigmoid(z);
        let o = self.g.input(offset);
        self.g.add(s, o)
    }

    /// Phase counterpart of [`Ctx::sigmoid_residual`] with `tanh`/`atanh`.
    fn tanh_residual(&mut self, d: Var, base: &Tensor<T>) -> Var {
        let lim = T::of_f64(1.0 - HEAD_CLAMP);
        let pre = map(base, |b| b.max(-lim).min(lim).atanh());
        let start = map(&pre, |p| p.tanh());
        let offset = zip(base, &start, |b, s| b - s);
        let p = self.g.input(pre);
        let z = self.g.add(d, p);
        let t = self.g.tanh(z);
        let o = self.g.input(offset);
        self.g.add(t, o)
    }
}

fn map<T: Scalar>(t: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::from_vec(t.shape(), t.data().iter().map(|&v| f(v)).collect())
}

fn zip<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_vec(a.shape(), a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
}

/// Parameter handles of one additive attention gate.
pub struct GateParams {
    pub theta: Var,
    pub phi: Var,
    pub phi_bias: Var,
    pub psi: Var,
    pub psi_bias: Var,
}

/// `alpha = sigmoid(psi(relu(theta x + phi g)))`; returns `(alpha * x, alpha)`.
/// `g` must already be on the grid of `x`.
pub fn attention_gate<T: Scalar>(g: &mut Graph<T>, x: Var, gating: Var, p: &GateParams) -> (Var, Var) {
    let tx = g.conv2d(x, p.theta, None);
    let pg = g.conv2d(gating, p.phi, Some(p.phi_bias));
    let s = g.add(tx, pg);
    let r = g.relu(s);
    let logits = g.conv2d(r, p.psi, Some(p.psi_bias));
    let alpha = g.sigmoid(logits);
    (g.mul_gate(x, alpha), alpha)
}

/// Network inputs for a batch of samples, stacked along N.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub mag_in: Tensor<T>,
    pub phase_in: Tensor<T>,
    pub mask_in: Tensor<T>,
    pub condition: Tensor<T>,
    /// Linear interpolation of the anchors at weight `k/4`.
    pub base_mag: Tensor<T>,
    pub base_phase: Tensor<T>,
}

fn stack<T: Scalar>(arrays: &[&Array3<f32>]) -> Tensor<T> {
    let (c, h, w) = arrays[0].dim();
    let mut data = Vec::with_capacity(arrays.len() * c * h * w);
    for a in arrays {
        data.extend(a.iter().map(|&v| T::of_f64(v as f64)));
    }
    Tensor::from_vec([arrays.len(), c, h, w], data)
}

impl<T: Scalar> Batch<T> {
    pub fn from_samples(samples: &[&SynthesisSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Argument("empty batch".into()))?;
        let (h, w) = (first.height(), first.width());
        let mut base_mag = Vec::with_capacity(samples.len());
        let mut base_phase = Vec::with_capacity(samples.len());
        for s in samples {
            if (s.height(), s.width()) != (h, w) {
                return Err(Error::Shape(format!(
                    "batch mixes {h}x{w} with {}x{}",
                    s.height(),
                    s.width()
                )));
            }
            let mut m = Array3::zeros((1, h, w));
            m.index_axis_mut(Axis(0), 0).assign(&linear_interpolate(
                s.mag_in.index_axis(Axis(0), 0),
                s.mag_in.index_axis(Axis(0), 1),
                s.k,
            )?);
            let mut p = Array3::zeros((3, h, w));
            for d in 0..3 {
                p.index_axis_mut(Axis(0), d).assign(&linear_interpolate(
                    s.phase_in.index_axis(Axis(0), 2 * d),
                    s.phase_in.index_axis(Axis(0), 2 * d + 1),
                    s.k,
                )?);
            }
            base_mag.push(m);
            base_phase.push(p);
        }
        let collect = |f: fn(&SynthesisSample) -> &Array3<f32>| stack(&samples.iter().map(|s| f(s)).collect::<Vec<_>>());
        Ok(Self {
            mag_in: collect(|s| &s.mag_in),
            phase_in: collect(|s| &s.phase_in),
            mask_in: collect(|s| &s.mask_in),
            condition: collect(|s| &s.condition.values),
            base_mag: stack(&base_mag.iter().collect::<Vec<_>>()),
            base_phase: stack(&base_phase.iter().collect::<Vec<_>>()),
        })
    }

    pub fn len(&self) -> usize {
        self.mag_in.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial(&self) -> (usize, usize) {
        let s = self.mag_in.shape();
        (s[2], s[3])
    }

    /// Condition map bilinearly resized to the bottleneck grid.
    fn condition_at(&self, h: usize, w: usize) -> Tensor<T> {
        let [n, c, ch, cw] = self.condition.shape();
        if (ch, cw) == (h, w) {
            return self.condition.clone();
        }
        let mut data = Vec::with_capacity(n * c * h * w);
        for plane in self.condition.data().chunks(ch * cw) {
            let src = ndarray::Array2::from_shape_fn((ch, cw), |(y, x)| plane[y * cw + x].as_f64() as f32);
            data.extend(resize_bilinear(src.view(), h, w).iter().map(|&v| T::of_f64(v as f64)));
        }
        Tensor::from_vec([n, c, h, w], data)
    }

    fn dummy(h: usize, w: usize) -> Self {
        Self {
            mag_in: Tensor::zeros([1, 2, h, w]),
            phase_in: Tensor::zeros([1, 6, h, w]),
            mask_in: Tensor::zeros([1, 2, h, w]),
            condition: Tensor::zeros([1, 2, CONDITION_SIZE, CONDITION_SIZE]),
            base_mag: Tensor::zeros([1, 1, h, w]),
            base_phase: Tensor::zeros([1, 3, h, w]),
        }
    }
}

/// Tape plus the three output nodes of one forward pass.
pub struct ForwardOutput<T> {
    pub graph: Graph<T>,
    pub mag: Var,
    pub phase: Var,
    pub mask: Var,
}

fn run<T: Scalar>(ctx: &mut Ctx<'_, T>, cfg: &NetworkConfig, batch: &Batch<T>) -> (Var, Var, Var) {
    let chans: Vec<usize> = (0..cfg.depth).map(|i| cfg.base_channels << i).collect();
    let deepest = chans[cfg.depth - 1];
    let bott = cfg.base_channels << cfg.depth;
    let (h, w) = batch.spatial();
    let m = cfg.size_multiple();
    let cond = ctx.g.input(batch.condition_at(h / m, w / m));
    let mag_in = ctx.g.input(batch.mag_in.clone());
    let phase_in = ctx.g.input(batch.phase_in.clone());
    let mask_in = ctx.g.input(batch.mask_in.clone());

    let (d_mag, d_phase, d_mask) = if cfg.independent_encoders {
        let threads = [("mag", mag_in, 2, 1), ("phase", phase_in, 6, 3), ("mask", mask_in, 2, 1)];
        let encoded: Vec<(Vec<Var>, Var)> = threads
            .iter()
            .map(|&(name, x, cin, _)| ctx.encoder(x, &format!("enc.{name}"), cin, &chans))
            .collect();
        let bottlenecks: Vec<Var> = if cfg.shared_bottleneck {
            let mut parts: Vec<Var> = encoded.iter().map(|e| e.1).collect();
            parts.push(cond);
            let cat = ctx.g.concat(&parts);
            let b = ctx.bottleneck(cat, "bottleneck", 3 * deepest + 2, bott);
            vec![b; 3]
        } else {
            threads
                .iter()
                .zip(&encoded)
                .map(|(&(name, ..), e)| {
                    let cat = ctx.g.concat(&[e.1, cond]);
                    ctx.bottleneck(cat, &format!("bottleneck.{name}"), deepest + 2, bott)
                })
                .collect()
        };
        let outs: Vec<Var> = threads
            .iter()
            .zip(encoded.iter().zip(&bottlenecks))
            .map(|(&(name, _, _, cout), (e, &b))| {
                ctx.decoder(b, &e.0, &format!("dec.{name}"), bott, &chans, cout, cfg.use_attention)
            })
            .collect();
        (outs[0], outs[1], outs[2])
    } else {
        let x = ctx.g.concat(&[mag_in, phase_in, mask_in]);
        let (skips, feat) = ctx.encoder(x, "enc.shared", 10, &chans);
        let cat = ctx.g.concat(&[feat, cond]);
        let b = ctx.bottleneck(cat, "bottleneck", deepest + 2, bott);
        let d = ctx.decoder(b, &skips, "dec.shared", bott, &chans, 5, cfg.use_attention);
        (
            ctx.g.slice_channels(d, 0, 1),
            ctx.g.slice_channels(d, 1, 3),
            ctx.g.slice_channels(d, 4, 1),
        )
    };
    let mag = ctx.sigmoid_residual(d_mag, &batch.base_mag);
    let phase = ctx.tanh_residual(d_phase, &batch.base_phase);
    let mask = ctx.g.sigmoid(d_mask);
    (mag, phase, mask)
}

/// Per-sample network outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mag: Array3<f32>,
    pub phase: Array3<f32>,
    pub mask_prob: Array3<f32>,
}

fn unstack<T: Scalar>(t: &Tensor<T>) -> Vec<Array3<f32>> {
    let [n, c, h, w] = t.shape();
    let per = c * h * w;
    (0..n)
        .map(|i| {
            let src = &t.data()[i * per..(i + 1) * per];
            Array3::from_shape_fn((c, h, w), |(ci, y, x)| src[(ci * h + y) * w + x].as_f64() as f32)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub specs: Vec<ParamSpec>,
    pub params: Vec<Tensor<f32>>,
}

impl Network {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut ctx: Ctx<'_, f32> = Ctx {
            g: Graph::new(),
            params: &[],
            cursor: 0,
            init: Some(Initializer {
                rng: ChaCha8Rng::seed_from_u64(seed),
                specs: Vec::new(),
                values: Vec::new(),
            }),
        };
        let n = INIT_SIZE.max(config.size_multiple());
        run(&mut ctx, &config, &Batch::dummy(n, n));
        let init = ctx.init.expect("initializer present");
        let mut net = Self {
            config,
            specs: init.specs,
            params: init.values,
        };
        net.zero_synthesis_heads();
        Ok(net)
    }

    /// Parameter names and shapes implied by `config`.
    pub fn specs_for(config: &NetworkConfig) -> Result<Vec<ParamSpec>> {
        Ok(Self::new(config.clone(), 0)?.specs)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    fn head_names(&self) -> Vec<(&'static str, usize, usize)> {
        if self.config.independent_decoders {
            vec![("dec.mag.head", 0, 1), ("dec.phase.head", 0, 3)]
        } else {
            vec![("dec.shared.head", 0, 4)]
        }
    }

    /// Zeroes the final magnitude and phase layers so both outputs reduce to
    /// the linear interpolation of the anchors.
    pub fn zero_synthesis_heads(&mut self) {
        for (name, start, len) in self.head_names() {
            for suffix in ["w", "b"] {
                let idx = self.param_index(&format!("{name}.{suffix}")).expect("head parameter");
                let t = &mut self.params[idx];
                let per = t.numel() / t.shape()[if suffix == "w" { 0 } else { 1 }];
                for v in &mut t.data_mut()[start * per..(start + len) * per] {
                    *v = 0.0;
                }
            }
        }
    }

    /// Records a forward pass with `params` (same order as [`Network::params`]).
    pub fn forward_with<T: Scalar>(&self, params: &[Tensor<T>], batch: &Batch<T>) -> Result<ForwardOutput<T>> {
        if params.len() != self.specs.len() {
            return Err(Error::Shape(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.specs.len()
            )));
        }
        for (p, s) in params.iter().zip(&self.specs) {
            if p.shape() != s.shape {
                return Err(Error::Shape(format!("parameter {} has shape {:?}, expected {:?}", s.name, p.shape(), s.shape)));
            }
            if !p.is_finite() {
                return Err(Error::Numeric(format!("parameter {} is not finite", s.name)));
            }
        }
        let (h, w) = batch.spatial();
        let m = self.config.size_multiple();
        if h % m != 0 || w % m != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("spatial size {h}x{w} is not divisible by {m}")));
        }
        let mut ctx = Ctx {
            g: Graph::new(),
            params,
            cursor: 0,
            init: None,
        };
        let (mag, phase, mask) = run(&mut ctx, &self.config, batch);
        Ok(ForwardOutput {
            graph: ctx.g,
            mag,
            phase,
            mask,
        })
    }

    pub fn forward(&self, batch: &Batch<f32>) -> Result<ForwardOutput<f32>> {
        self.forward_with(&self.params, batch)
    }

    /// Runs inference in chunks of `batch_size` samples.
    pub fn predict(&self, samples: &[&SynthesisSample], batch_size: usize) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(batch_size.max(1)) {
            let batch = Batch::<f32>::from_samples(chunk)?;
            let f = self.forward(&batch)?;
            let mags = unstack(f.graph.value(f.mag));
            let phases = unstack(f.graph.value(f.phase));
            let masks = unstack(f.graph.value(f.mask));
            for ((mag, phase), mask_prob) in mags.into_iter().zip(phases).zip(masks) {
                out.push(Prediction { mag, phase, mask_prob });
            }
        }
        Ok(out)
    }
}

pub(crate) fn unstack_f64<T: Scalar>(t: &Tensor<T>) -> Vec<Array3<f64>> {
    let [n, c, h, w] = t.shape();
    let per = c * h * w;
    (0..n)
        .map(|i| {
            let src = &t.data()[i * per..(i + 1) * per];
            Array3::from_shape_fn((c, h, w), |(ci, y, x)| src[(ci * h + y) * w + x].as_f64())
        })
        .collect()
}

pub(crate) fn stack_f64<T: Scalar>(arrays: &[Array3<f64>]) -> Tensor<T> {
    let (c, h, w) = arrays[0].dim();
    let mut data = Vec::with_capacity(arrays.len() * c * h * w);
    for a in arrays {
        data.extend(a.iter().map(|&v| T::of_f64(v)));
    }
    Tensor::from_vec([arrays.len(), c, h, w], data)
}
