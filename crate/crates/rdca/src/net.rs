//! The neighborhood-to-state-change network: four small dense subnets
//! (feature net, encoder, decoder, prediction head), exact reverse-mode
//! gradients, and checkpoint persistence.
//!
//! Dataflow for one cell:
//!
//! ```text
//!   z1    = mlp1(neighbors)            8 -> 8 -> 8 -> 8   (relu, relu, tanh)
//!   c     = concat(cell, z1)           10
//!   lat   = encoder(c)                 10 -> 8 -> 8 -> h  (relu)
//!   recon = decoder(lat)               h -> 8 -> 8 -> 2   (relu)
//!   delta = scale * mlp2(lat)          h -> 8 -> 8 -> 2   (relu, relu, tanh)
//! ```
//!
//! The tanh head bounds every delta component by `output_scale`, so a
//! rollout can never take an unbounded step.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::TransitionSample;
use crate::error::{Error, Result};
use crate::io::{decoder, read_container, write_container, Encoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation and the activated output.
    /// The relu subgradient at 0 is defined as 0.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// One dense layer; weights are row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub act: Activation,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize, act: Activation) -> Self {
        Dense { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out], act }
    }

    /// Uniform fan-in scaled init: `U(-1/sqrt(n_in), 1/sqrt(n_in))`, zero biases.
    fn init(n_in: usize, n_out: usize, act: Activation, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| rng.random_range(-bound..=bound)).collect();
        Dense { n_in, n_out, w, b: vec![0.0; n_out], act }
    }

    #[inline]
    fn forward(&self, input: &[f64], pre: &mut [f64], out: &mut [f64]) {
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            pre[o] = acc;
            out[o] = self.act.apply(acc);
        }
    }

    /// Backprop one layer: fills `d_input` and accumulates into `grad`.
    #[inline]
    fn backward(
        &self,
        input: &[f64],
        pre: &[f64],
        out: &[f64],
        d_out: &[f64],
        d_input: &mut [f64],
        grad: &mut Dense,
    ) {
        d_input[..self.n_in].fill(0.0);
        for o in 0..self.n_out {
            let d_pre = d_out[o] * self.act.derivative(pre[o], out[o]);
            if d_pre == 0.0 {
                continue;
            }
            grad.b[o] += d_pre;
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grad.w[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grow[i] += d_pre * input[i];
                d_input[i] += d_pre * row[i];
            }
        }
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.n_in, l.n_out, l.act))
                .collect(),
        }
    }

    fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }
}

/// Per-subnet forward caches (pre-activations and outputs per layer).
#[derive(Debug, Clone)]
struct MlpCache {
    pre: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

impl MlpCache {
    fn for_mlp(mlp: &Mlp) -> Self {
        MlpCache {
            pre: mlp.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
            out: mlp.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
        }
    }
}

fn mlp_forward(mlp: &Mlp, input: &[f64], cache: &mut MlpCache) {
    let mut cur = input;
    for (idx, layer) in mlp.layers.iter().enumerate() {
        let (pre_list, out_list) = (&mut cache.pre, &mut cache.out);
        layer.forward(cur, &mut pre_list[idx], &mut out_list[idx]);
        cur = &out_list[idx];
    }
}

/// Backprop through an MLP. `d_out` is seeded with the gradient at the MLP
/// output and holds the gradient at the MLP input on return; `scratch` is a
/// ping-pong buffer. Parameter gradients accumulate into `grad`.
fn mlp_backward(
    mlp: &Mlp,
    input: &[f64],
    cache: &MlpCache,
    d_out: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    grad: &mut Mlp,
) {
    for idx in (0..mlp.layers.len()).rev() {
        let layer = &mlp.layers[idx];
        let layer_input: &[f64] = if idx == 0 { input } else { &cache.out[idx - 1] };
        scratch.resize(layer.n_in, 0.0);
        layer.backward(
            layer_input,
            &cache.pre[idx],
            &cache.out[idx],
            d_out,
            scratch,
            &mut grad.layers[idx],
        );
        std::mem::swap(d_out, scratch);
    }
}

/// Weights and biases of the four subnets plus the latent width and the
/// output scale applied to the tanh prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub mlp1: Mlp,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub mlp2: Mlp,
    pub latent_dim: usize,
    pub output_scale: f64,
}

pub const CELL_DIM: usize = 2;
pub const NEIGHBOR_DIM: usize = 8;
pub const CONCAT_DIM: usize = CELL_DIM + NEIGHBOR_DIM;

impl NetworkParams {
    /// Seeded fan-in uniform initialization of all four subnets.
    pub fn init(latent_dim: usize, output_scale: f64, seed: u64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::domain("latent_dim must be >= 1"));
        }
        if output_scale <= 0.0 || !output_scale.is_finite() {
            return Err(Error::domain(format!("output_scale must be positive, got {output_scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use Activation::{Relu, Tanh};
        let mlp1 = Mlp {
            layers: vec![
                Dense::init(NEIGHBOR_DIM, 8, Relu, &mut rng),
                Dense::init(8, 8, Relu, &mut rng),
                Dense::init(8, 8, Tanh, &mut rng),
            ],
        };
        let encoder = Mlp {
            layers: vec![
                Dense::init(CONCAT_DIM, 8, Relu, &mut rng),
                Dense::init(8, 8, Relu, &mut rng),
                Dense::init(8, latent_dim, Relu, &mut rng),
            ],
        };
        let decoder = Mlp {
            layers: vec![
                Dense::init(latent_dim, 8, Relu, &mut rng),
                Dense::init(8, 8, Relu, &mut rng),
                Dense::init(8, CELL_DIM, Relu, &mut rng),
            ],
        };
        let mlp2 = Mlp {
            layers: vec![
                Dense::init(latent_dim, 8, Relu, &mut rng),
                Dense::init(8, 8, Relu, &mut rng),
                Dense::init(8, CELL_DIM, Tanh, &mut rng),
            ],
        };
        Ok(NetworkParams { mlp1, encoder, decoder, mlp2, latent_dim, output_scale })
    }

    /// Same shapes, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            mlp1: self.mlp1.zeros_like(),
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            mlp2: self.mlp2.zeros_like(),
            latent_dim: self.latent_dim,
            output_scale: self.output_scale,
        }
    }

    /// Visit every parameter; order is stable (subnet, layer, weights, biases).
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for mlp in [&mut self.mlp1, &mut self.encoder, &mut self.decoder, &mut self.mlp2] {
            for layer in &mut mlp.layers {
                for w in &mut layer.w {
                    f(w);
                }
                for b in &mut layer.b {
                    f(b);
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for mlp in [&self.mlp1, &self.encoder, &self.decoder, &self.mlp2] {
            for layer in &mlp.layers {
                n += layer.w.len() + layer.b.len();
            }
        }
        n
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        let mut probe = self.clone();
        probe.for_each_param_mut(|p| ok &= p.is_finite());
        ok
    }
}

/// Reusable forward/backward buffers for one evaluation thread.
pub(crate) struct Workspace {
    mlp1: MlpCache,
    encoder: MlpCache,
    decoder: MlpCache,
    mlp2: MlpCache,
    concat: Vec<f64>,
    d_a: Vec<f64>,
    d_b: Vec<f64>,
    d_lat: Vec<f64>,
}

impl Workspace {
    pub fn new(p: &NetworkParams) -> Self {
        let width = p.latent_dim.max(CONCAT_DIM).max(8);
        Workspace {
            mlp1: MlpCache::for_mlp(&p.mlp1),
            encoder: MlpCache::for_mlp(&p.encoder),
            decoder: MlpCache::for_mlp(&p.decoder),
            mlp2: MlpCache::for_mlp(&p.mlp2),
            concat: vec![0.0; CONCAT_DIM],
            d_a: Vec::with_capacity(width),
            d_b: Vec::with_capacity(width),
            d_lat: Vec::with_capacity(width),
        }
    }

    fn run_forward(&mut self, p: &NetworkParams, cell: &[f64; 2], neighbors: &[f64; 8]) {
        mlp_forward(&p.mlp1, neighbors, &mut self.mlp1);
        self.concat[..CELL_DIM].copy_from_slice(cell);
        self.concat[CELL_DIM..].copy_from_slice(&self.mlp1.out[2]);
        mlp_forward(&p.encoder, &self.concat, &mut self.encoder);
        let lat = self.encoder.out[2].clone();
        mlp_forward(&p.decoder, &lat, &mut self.decoder);
        mlp_forward(&p.mlp2, &lat, &mut self.mlp2);
    }

    fn recon(&self) -> [f64; 2] {
        [self.decoder.out[2][0], self.decoder.out[2][1]]
    }

    fn delta(&self, output_scale: f64) -> [f64; 2] {
        [output_scale * self.mlp2.out[2][0], output_scale * self.mlp2.out[2][1]]
    }
}

/// Forward pass for one cell: reconstruction of the cell state and the
/// predicted per-interval state change.
pub fn forward(
    p: &NetworkParams,
    cell: &[f64; 2],
    neighbors: &[f64; 8],
) -> Result<([f64; 2], [f64; 2])> {
    let mut ws = Workspace::new(p);
    ws.run_forward(p, cell, neighbors);
    for (name, out) in [
        ("mlp1", &ws.mlp1.out[2]),
        ("encoder", &ws.encoder.out[2]),
        ("decoder", &ws.decoder.out[2]),
        ("mlp2", &ws.mlp2.out[2]),
    ] {
        if !out.iter().all(|x| x.is_finite()) {
            return Err(Error::numerics(format!("non-finite output in {name}")));
        }
    }
    Ok((ws.recon(), ws.delta(p.output_scale)))
}

/// Loss weights for the two network components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub recon: f64,
    pub pred: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { recon: 1.0, pred: 1.0 }
    }
}

/// `w_recon * MSE(recon, cell) + w_pred * MSE(delta, target)`, means over
/// batch and components.
pub fn loss(p: &NetworkParams, batch: &[TransitionSample], weights: LossWeights) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::domain("loss: empty batch"));
    }
    let mut ws = Workspace::new(p);
    let mut recon_sq = 0.0;
    let mut pred_sq = 0.0;
    for s in batch {
        ws.run_forward(p, &s.cell, &s.neighbors);
        let recon = ws.recon();
        let delta = ws.delta(p.output_scale);
        for c in 0..2 {
            let dr = recon[c] - s.cell[c];
            let dp = delta[c] - s.delta[c];
            recon_sq += dr * dr;
            pred_sq += dp * dp;
        }
    }
    let denom = (batch.len() * 2) as f64;
    Ok(weights.recon * recon_sq / denom + weights.pred * pred_sq / denom)
}

/// Accumulate the exact gradient of [`loss`] over `batch` into `grad`.
/// Returns the batch loss. `grad` must be zeroed by the caller if a fresh
/// gradient is wanted; `denom` divides the per-sample contributions, letting
/// callers accumulate across chunks of a larger batch.
pub(crate) fn accumulate_gradient(
    p: &NetworkParams,
    batch: &[TransitionSample],
    weights: LossWeights,
    denom: f64,
    ws: &mut Workspace,
    grad: &mut NetworkParams,
) -> f64 {
    let mut loss_sum = 0.0;
    for s in batch {
        ws.run_forward(p, &s.cell, &s.neighbors);
        let recon = ws.recon();
        let delta = ws.delta(p.output_scale);

        // Head gradients. loss = w_r/denom * sum (recon-cell)^2
        //                       + w_p/denom * sum (delta-target)^2
        let mut d_recon = [0.0; 2];
        let mut d_mlp2_out = [0.0; 2];
        for c in 0..2 {
            let dr = recon[c] - s.cell[c];
            let dp = delta[c] - s.delta[c];
            loss_sum += weights.recon * dr * dr + weights.pred * dp * dp;
            d_recon[c] = 2.0 * weights.recon * dr / denom;
            d_mlp2_out[c] = 2.0 * weights.pred * dp * p.output_scale / denom;
        }

        let lat = &ws.encoder.out[2];

        // decoder backward -> d_lat (part 1)
        ws.d_a.clear();
        ws.d_a.extend_from_slice(&d_recon);
        mlp_backward(&p.decoder, lat, &ws.decoder, &mut ws.d_a, &mut ws.d_b, &mut grad.decoder);
        ws.d_lat.clear();
        ws.d_lat.extend_from_slice(&ws.d_a);

        // mlp2 backward -> d_lat (part 2)
        ws.d_a.clear();
        ws.d_a.extend_from_slice(&d_mlp2_out);
        mlp_backward(&p.mlp2, lat, &ws.mlp2, &mut ws.d_a, &mut ws.d_b, &mut grad.mlp2);
        for (acc, add) in ws.d_lat.iter_mut().zip(&ws.d_a) {
            *acc += add;
        }

        // encoder backward -> d_concat
        ws.d_a.clear();
        ws.d_a.extend_from_slice(&ws.d_lat);
        mlp_backward(
            &p.encoder,
            &ws.concat,
            &ws.encoder,
            &mut ws.d_a,
            &mut ws.d_b,
            &mut grad.encoder,
        );

        // split d_concat: cell part has no parameters upstream; z1 part
        // flows into mlp1
        let d_z1: Vec<f64> = ws.d_a[CELL_DIM..].to_vec();
        ws.d_a.clear();
        ws.d_a.extend_from_slice(&d_z1);
        mlp_backward(&p.mlp1, &s.neighbors, &ws.mlp1, &mut ws.d_a, &mut ws.d_b, &mut grad.mlp1);
    }
    loss_sum / denom
}

/// Exact gradient of [`loss`] with respect to every weight and bias.
pub fn gradient(
    p: &NetworkParams,
    batch: &[TransitionSample],
    weights: LossWeights,
) -> Result<(f64, NetworkParams)> {
    if batch.is_empty() {
        return Err(Error::domain("gradient: empty batch"));
    }
    let mut grad = p.zeros_like();
    let mut ws = Workspace::new(p);
    let denom = (batch.len() * 2) as f64;
    let loss = accumulate_gradient(p, batch, weights, denom, &mut ws, &mut grad);
    if !loss.is_finite() {
        return Err(Error::numerics("gradient: non-finite loss"));
    }
    Ok((loss, grad))
}

/// Per-species affine map applied to raw concentrations before the network
/// and inverted on its delta output. The identity normalizer passes raw
/// values through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub offset: [f64; 2],
    pub scale: [f64; 2],
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer { offset: [0.0; 2], scale: [1.0; 2] }
    }

    #[inline]
    pub fn normalize_pair(&self, uv: [f64; 2]) -> [f64; 2] {
        [(uv[0] - self.offset[0]) / self.scale[0], (uv[1] - self.offset[1]) / self.scale[1]]
    }

    #[inline]
    pub fn normalize_delta(&self, d: [f64; 2]) -> [f64; 2] {
        [d[0] / self.scale[0], d[1] / self.scale[1]]
    }

    #[inline]
    pub fn denormalize_delta(&self, d: [f64; 2]) -> [f64; 2] {
        [d[0] * self.scale[0], d[1] * self.scale[1]]
    }

    pub fn normalize_sample(&self, s: &TransitionSample) -> TransitionSample {
        let cell = self.normalize_pair(s.cell);
        let mut neighbors = [0.0; 8];
        for n in 0..4 {
            let pair = self.normalize_pair([s.neighbors[2 * n], s.neighbors[2 * n + 1]]);
            neighbors[2 * n] = pair[0];
            neighbors[2 * n + 1] = pair[1];
        }
        TransitionSample { cell, neighbors, delta: self.normalize_delta(s.delta) }
    }
}

/// A trained update rule: network parameters plus the input normalization
/// they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct CaModel {
    pub params: NetworkParams,
    pub norm: Normalizer,
}

impl CaModel {
    /// Predicted raw-unit state change for one cell given its raw-unit
    /// five-point neighborhood.
    pub fn predict_delta(&self, cell: [f64; 2], neighbors: [f64; 8]) -> [f64; 2] {
        let mut ws = Workspace::new(&self.params);
        self.predict_delta_with(&mut ws, cell, neighbors)
    }

    pub(crate) fn predict_delta_with(
        &self,
        ws: &mut Workspace,
        cell: [f64; 2],
        neighbors: [f64; 8],
    ) -> [f64; 2] {
        let cell_n = self.norm.normalize_pair(cell);
        let mut nb_n = [0.0; 8];
        for n in 0..4 {
            let pair = self.norm.normalize_pair([neighbors[2 * n], neighbors[2 * n + 1]]);
            nb_n[2 * n] = pair[0];
            nb_n[2 * n + 1] = pair[1];
        }
        ws.run_forward(&self.params, &cell_n, &nb_n);
        self.norm.denormalize_delta(ws.delta(self.params.output_scale))
    }
}

const MODEL_MAGIC: &[u8; 4] = b"DRSM";
const MODEL_VERSION: u16 = 1;

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    }
}

/// Persist a trained model: latent width, output scale, normalizer, layer
/// shapes, and all weights, checksummed. The round-trip is exact.
pub fn save_model(m: &CaModel, path: &Path) -> Result<()> {
    let mut enc = Encoder::new();
    enc.put_u32(m.params.latent_dim as u32);
    enc.put_f64(m.params.output_scale);
    for c in 0..2 {
        enc.put_f64(m.norm.offset[c]);
        enc.put_f64(m.norm.scale[c]);
    }
    for mlp in [&m.params.mlp1, &m.params.encoder, &m.params.decoder, &m.params.mlp2] {
        enc.put_u32(mlp.layers.len() as u32);
        for layer in &mlp.layers {
            enc.put_u32(layer.n_in as u32);
            enc.put_u32(layer.n_out as u32);
            enc.put_u8(act_code(layer.act));
            enc.put_f64_slice(&layer.w);
            enc.put_f64_slice(&layer.b);
        }
    }
    write_container(path, MODEL_MAGIC, MODEL_VERSION, &enc)
}

pub fn load_model(path: &Path) -> Result<CaModel> {
    let (body, _) = read_container(path, MODEL_MAGIC, MODEL_VERSION)?;
    let mut dec = decoder(&body, path);
    let latent_dim = dec.u32()? as usize;
    let output_scale = dec.f64()?;
    let mut norm = Normalizer::identity();
    for c in 0..2 {
        norm.offset[c] = dec.f64()?;
        norm.scale[c] = dec.f64()?;
    }
    let mut mlps = Vec::with_capacity(4);
    for _ in 0..4 {
        let n_layers = dec.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n_in = dec.u32()? as usize;
            let n_out = dec.u32()? as usize;
            let act = match dec.u8()? {
                0 => Activation::Relu,
                1 => Activation::Tanh,
                _ => return Err(dec.invalid()),
            };
            let w = dec.f64_vec()?;
            let b = dec.f64_vec()?;
            if w.len() != n_in * n_out || b.len() != n_out {
                return Err(dec.invalid());
            }
            layers.push(Dense { n_in, n_out, w, b, act });
        }
        mlps.push(Mlp { layers });
    }
    dec.done()?;
    let mlp2 = mlps.pop().unwrap();
    let decoder_net = mlps.pop().unwrap();
    let encoder = mlps.pop().unwrap();
    let mlp1 = mlps.pop().unwrap();
    if encoder.out_dim() != latent_dim {
        return Err(Error::format(path, crate::error::FormatErrorKind::InvalidField));
    }
    Ok(CaModel {
        params: NetworkParams {
            mlp1,
            encoder,
            decoder: decoder_net,
            mlp2,
            latent_dim,
            output_scale,
        },
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(cell: [f64; 2], nb: f64, delta: [f64; 2]) -> TransitionSample {
        TransitionSample { cell, neighbors: [nb; 8], delta }
    }

    fn all_ones_params(latent: usize) -> NetworkParams {
        let mut p = NetworkParams::init(latent, 2.0, 0).unwrap();
        p.for_each_param_mut(|w| *w = 1.0);
        // restore zero biases
        for mlp in [&mut p.mlp1, &mut p.encoder, &mut p.decoder, &mut p.mlp2] {
            for layer in &mut mlp.layers {
                layer.b.fill(0.0);
            }
        }
        p
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut p = NetworkParams::init(16, 2.0, 1).unwrap();
        p.for_each_param_mut(|w| *w = 0.0);
        let (recon, delta) = forward(&p, &[0.4, -0.2], &[0.3; 8]).unwrap();
        assert_eq!(recon, [0.0, 0.0]);
        assert_eq!(delta, [0.0, 0.0]);
    }

    #[test]
    fn delta_strictly_bounded_by_output_scale() {
        let p = NetworkParams::init(16, 2.0, 3).unwrap();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cell = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let mut nb = [0.0; 8];
            for x in &mut nb {
                *x = rng.random_range(-5.0..5.0);
            }
            let (_, delta) = forward(&p, &cell, &nb).unwrap();
            assert!(delta[0].abs() < p.output_scale);
            assert!(delta[1].abs() < p.output_scale);
        }
    }

    #[test]
    fn hand_computed_toy_forward() {
        // h = 1, all weights 1, biases 0.
        let p = all_ones_params(1);

        // cell = (0,0), neighbors all 0: everything stays 0.
        let (recon, delta) = forward(&p, &[0.0, 0.0], &[0.0; 8]).unwrap();
        assert_eq!(recon, [0.0, 0.0]);
        assert_eq!(delta, [0.0, 0.0]);

        // cell = (0.5, 0.25), neighbors all 0.1: arithmetic done by hand.
        let nb = 0.1;
        let l1 = 8.0 * nb; // each unit sums 8 inputs
        let l2 = 8.0 * l1;
        let z1 = l2.tanh(); // tanh(6.4)
        let concat_sum = 0.5 + 0.25 + 8.0 * z1;
        let e1 = concat_sum; // relu of positive sum
        let e2 = 8.0 * e1;
        let lat = 8.0 * e2;
        let d1 = lat;
        let d2 = 8.0 * d1;
        let recon_hand = 8.0 * d2;
        let m1 = lat;
        let m2 = 8.0 * m1;
        let delta_hand = 2.0 * (8.0 * m2).tanh();

        let (recon, delta) = forward(&p, &[0.5, 0.25], &[nb; 8]).unwrap();
        assert!((recon[0] - recon_hand).abs() < 1e-12, "{} vs {recon_hand}", recon[0]);
        assert!((recon[1] - recon_hand).abs() < 1e-12);
        assert!((delta[0] - delta_hand).abs() < 1e-12);
        assert!((delta[1] - delta_hand).abs() < 1e-12);
    }

    #[test]
    fn loss_zero_for_perfect_network() {
        // Zero network perfectly fits samples with zero cell and zero delta.
        let mut p = NetworkParams::init(4, 2.0, 1).unwrap();
        p.for_each_param_mut(|w| *w = 0.0);
        let batch = vec![sample([0.0, 0.0], 0.7, [0.0, 0.0]); 3];
        assert_eq!(loss(&p, &batch, LossWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn loss_nonnegative_and_matches_hand_arithmetic() {
        let mut p = NetworkParams::init(4, 2.0, 1).unwrap();
        p.for_each_param_mut(|w| *w = 0.0);
        // zero network: recon = (0,0), delta = (0,0)
        let s = sample([0.3, -0.1], 0.0, [0.2, 0.4]);
        let w = LossWeights { recon: 1.5, pred: 0.5 };
        // recon MSE = (0.3^2 + 0.1^2)/2, pred MSE = (0.2^2 + 0.4^2)/2
        let expected = 1.5 * (0.09 + 0.01) / 2.0 + 0.5 * (0.04 + 0.16) / 2.0;
        let got = loss(&p, &[s], w).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(got >= 0.0);

        let random = NetworkParams::init(4, 2.0, 9).unwrap();
        assert!(loss(&random, &[s], w).unwrap() >= 0.0);
        assert!(loss(&random, &[], w).is_err());
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let p = NetworkParams::init(6, 2.0, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let batch: Vec<TransitionSample> = (0..16)
            .map(|_| {
                let mut s = sample(
                    [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    0.0,
                    [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
                );
                for x in &mut s.neighbors {
                    *x = rng.random_range(-1.0..1.0);
                }
                s
            })
            .collect();
        let weights = LossWeights { recon: 1.0, pred: 1.0 };
        let (_, grad) = gradient(&p, &batch, weights).unwrap();

        // flatten analytic gradient in canonical order
        let mut analytic = Vec::new();
        let mut g = grad.clone();
        g.for_each_param_mut(|x| analytic.push(*x));

        let n_params = p.param_count();
        assert_eq!(analytic.len(), n_params);
        let step = 1e-5;

        // probe 100 seeded random parameter slots
        let mut checked = 0;
        let mut probe_rng = ChaCha8Rng::seed_from_u64(99);
        while checked < 100 {
            let idx = probe_rng.random_range(0..n_params);
            let mut plus = p.clone();
            let mut minus = p.clone();
            let mut k = 0;
            plus.for_each_param_mut(|x| {
                if k == idx {
                    *x += step;
                }
                k += 1;
            });
            k = 0;
            minus.for_each_param_mut(|x| {
                if k == idx {
                    *x -= step;
                }
                k += 1;
            });
            let lp = loss(&plus, &batch, weights).unwrap();
            let lm = loss(&minus, &batch, weights).unwrap();
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic[idx];
            let ok = if a.abs() < 1e-6 && numeric.abs() < 1e-6 {
                (a - numeric).abs() < 1e-8
            } else {
                (a - numeric).abs() / a.abs().max(numeric.abs()) < 1e-4
            };
            assert!(ok, "param {idx}: analytic {a}, numeric {numeric}");
            checked += 1;
        }
    }

    #[test]
    fn gradient_is_zero_at_exact_fit() {
        // Zero network on targets it reproduces exactly: gradient vanishes.
        let mut p = NetworkParams::init(4, 2.0, 5).unwrap();
        p.for_each_param_mut(|w| *w = 0.0);
        let batch = vec![sample([0.0, 0.0], 0.3, [0.0, 0.0]); 4];
        let (l, grad) = gradient(&p, &batch, LossWeights::default()).unwrap();
        assert_eq!(l, 0.0);
        let mut max = 0.0f64;
        let mut g = grad;
        g.for_each_param_mut(|x| max = max.max(x.abs()));
        assert!(max < 1e-8, "gradient max-norm {max}");
    }

    #[test]
    fn doubling_pred_weight_doubles_prediction_gradient() {
        let p = NetworkParams::init(6, 2.0, 11).unwrap();
        let batch = vec![sample([0.2, 0.1], 0.4, [0.3, -0.2]); 8];
        let (_, g1) =
            gradient(&p, &batch, LossWeights { recon: 0.0, pred: 1.0 }).unwrap();
        let (_, g2) =
            gradient(&p, &batch, LossWeights { recon: 0.0, pred: 2.0 }).unwrap();
        let mut v1 = Vec::new();
        let mut v2 = Vec::new();
        let mut g1 = g1;
        let mut g2 = g2;
        g1.for_each_param_mut(|x| v1.push(*x));
        g2.for_each_param_mut(|x| v2.push(*x));
        for (a, b) in v1.iter().zip(&v2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn forward_is_pure() {
        let p = NetworkParams::init(8, 2.0, 2).unwrap();
        let cell = [0.3, 0.6];
        let nb = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let a = forward(&p, &cell, &nb).unwrap();
        let b = forward(&p, &cell, &nb).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_checkpoint_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.drsm");
        let params = NetworkParams::init(16, 2.0, 77).unwrap();
        let model = CaModel {
            params,
            norm: Normalizer { offset: [-1.2, 0.3], scale: [2.4, 1.7] },
        };
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn model_checkpoint_corruption_is_typed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.drsm");
        let model = CaModel {
            params: NetworkParams::init(4, 2.0, 1).unwrap(),
            norm: Normalizer::identity(),
        };
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x55;
        std::fs::write(&path, &bytes).unwrap();
        match load_model(&path) {
            Err(Error::Format { kind, .. }) => {
                assert_eq!(kind, crate::error::FormatErrorKind::ChecksumMismatch)
            }
            other => panic!("expected ChecksumMismatch, got {other:?}"),
        }
    }

    #[test]
    fn normalizer_round_trip() {
        let n = Normalizer { offset: [0.5, -0.25], scale: [2.0, 0.5] };
        let s = sample([1.5, 0.25], 0.75, [0.4, -0.1]);
        let norm = n.normalize_sample(&s);
        let back = n.denormalize_delta(norm.delta);
        assert!((back[0] - s.delta[0]).abs() < 1e-15);
        assert!((back[1] - s.delta[1]).abs() < 1e-15);
    }
}
