//! Encoder stack with a final CTC head after layer L and an optional
//! intermediate CTC head after layer l.
//!
//! The intermediate head reads the output of the same layers the final head
//! builds on, so in self-distillation the student's layers 1..l are the
//! teacher's layers 1..l: one parameter store, two heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctc::PosteriorGrid;
use crate::distill::HeadGrads;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{sha256_hex, Container};
use crate::nn::encoder_layer::EncoderLayerCache;
use crate::nn::layernorm::LayerNormCache;
use crate::nn::linear::LinearCache;
use crate::nn::{EncoderLayer, Gradients, LayerNorm, Linear, ParamId, ParamStore, Tensor2D};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Frame feature dimension D.
    pub input_dim: usize,
    pub num_layers: usize,
    /// Layer whose output feeds the intermediate head; `None` for a
    /// single-head model.
    pub tap_layer: Option<usize>,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    /// |𝒴′|, blank included.
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            num_layers: 4,
            tap_layer: Some(2),
            model_dim: 64,
            num_heads: 4,
            ffn_dim: 128,
            num_classes: 9,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::invalid("num_layers must be at least 1"));
        }
        if let Some(l) = self.tap_layer {
            if !(l >= 1 && l < self.num_layers) {
                return Err(Error::invalid(format!(
                    "tap_layer {l} must satisfy 1 <= l < L = {}",
                    self.num_layers
                )));
            }
        }
        if self.num_heads == 0 || self.model_dim % self.num_heads != 0 {
            return Err(Error::invalid(format!(
                "model_dim {} not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.input_dim == 0 || self.ffn_dim == 0 || self.num_classes < 2 {
            return Err(Error::invalid("input_dim, ffn_dim must be positive and num_classes >= 2"));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Sinusoidal position code added after the input projection.
fn positional_encoding(frames: usize, dim: usize) -> Tensor2D {
    let mut pe = Tensor2D::zeros(frames, dim);
    for f in 0..frames {
        for i in 0..dim {
            let rate = 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = f as f64 / rate;
            pe.set(f, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// `LayerNorm → Linear → log_softmax`.
#[derive(Clone, Debug)]
pub struct CtcHead {
    pub norm: LayerNorm,
    pub proj: Linear,
}

#[derive(Clone, Debug)]
struct HeadCache {
    norm: LayerNormCache,
    proj: LinearCache,
}

impl CtcHead {
    fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            norm: LayerNorm::new(store, &format!("{name}.ln"), dim),
            proj: Linear::new(store, &format!("{name}.proj"), dim, classes, rng),
        }
    }

    fn forward(&self, store: &ParamStore, x: &Tensor2D) -> Result<(PosteriorGrid, HeadCache)> {
        let (n, norm) = self.norm.forward(store, x)?;
        let (logits, proj) = self.proj.forward(store, &n)?;
        Ok((PosteriorGrid::from_logits(&logits), HeadCache { norm, proj }))
    }

    fn backward(
        &self,
        store: &ParamStore,
        cache: &HeadCache,
        dlogits: &Tensor2D,
        grads: &mut Gradients,
    ) -> Result<Tensor2D> {
        let dn = self.proj.backward(store, &cache.proj, dlogits, grads)?;
        self.norm.backward(store, &cache.norm, &dn, grads)
    }

    fn param_ids(&self) -> [ParamId; 4] {
        [self.norm.gain, self.norm.bias, self.proj.weight, self.proj.bias]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutputs {
    /// Posteriors of the final head (layer L).
    pub final_grid: PosteriorGrid,
    /// Posteriors of the intermediate head (layer l), when the model has one.
    pub inter_grid: Option<PosteriorGrid>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: LinearCache,
    layers: Vec<EncoderLayerCache>,
    final_head: HeadCache,
    inter_head: Option<HeadCache>,
    frames: usize,
}

impl ForwardCache {
    pub fn layer(&self, i: usize) -> &EncoderLayerCache {
        &self.layers[i]
    }
}

/// Which part of the network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Input,
    /// 1-based encoder layer index.
    Layer(usize),
    FinalHead,
    InterHead,
}

#[derive(Clone, Debug)]
pub struct EncoderModel {
    cfg: EncoderConfig,
    params: ParamStore,
    input: Linear,
    layers: Vec<EncoderLayer>,
    final_head: CtcHead,
    inter_head: Option<CtcHead>,
    groups: Vec<ParamGroup>,
}

impl EncoderModel {
    /// Seeded initialization: uniform `±1/sqrt(fan_in)` weights, zero biases,
    /// unit layer-norm gains.
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParamStore::new();
        let mut groups = Vec::new();
        let tag = |params: &ParamStore, groups: &mut Vec<ParamGroup>, g: ParamGroup| {
            groups.resize(params.len(), g);
        };
        let input = Linear::new(&mut params, "input", cfg.input_dim, cfg.model_dim, &mut rng);
        tag(&params, &mut groups, ParamGroup::Input);
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for i in 1..=cfg.num_layers {
            layers.push(EncoderLayer::new(
                &mut params,
                &format!("layer{i}"),
                cfg.model_dim,
                cfg.num_heads,
                cfg.ffn_dim,
                &mut rng,
            )?);
            tag(&params, &mut groups, ParamGroup::Layer(i));
        }
        let final_head = CtcHead::new(&mut params, "head_final", cfg.model_dim, cfg.num_classes, &mut rng);
        tag(&params, &mut groups, ParamGroup::FinalHead);
        let inter_head = cfg.tap_layer.map(|_| {
            CtcHead::new(&mut params, "head_inter", cfg.model_dim, cfg.num_classes, &mut rng)
        });
        tag(&params, &mut groups, ParamGroup::InterHead);
        Ok(Self {
            cfg,
            params,
            input,
            layers,
            final_head,
            inter_head,
            groups,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn layers(&self) -> &[EncoderLayer] {
        &self.layers
    }

    pub fn final_head(&self) -> &CtcHead {
        &self.final_head
    }

    pub fn inter_head(&self) -> Option<&CtcHead> {
        self.inter_head.as_ref()
    }

    pub fn param_group(&self, id: ParamId) -> ParamGroup {
        self.groups[id.index()]
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Parameters of the CTC heads only.
    pub fn head_mask(&self) -> Vec<bool> {
        self.groups
            .iter()
            .map(|g| matches!(g, ParamGroup::FinalHead | ParamGroup::InterHead))
            .collect()
    }

    /// Parameters that sit above the tap: layers l+1..L and the final head.
    pub fn above_tap_mask(&self) -> Vec<bool> {
        let l = self.cfg.tap_layer.unwrap_or(self.cfg.num_layers);
        self.groups
            .iter()
            .map(|g| match *g {
                ParamGroup::Layer(i) => i > l,
                ParamGroup::FinalHead => true,
                _ => false,
            })
            .collect()
    }

    pub fn forward(&self, features: &Tensor2D) -> Result<(ForwardOutputs, ForwardCache)> {
        features.ensure_shape((features.rows(), self.cfg.input_dim), "model forward")?;
        let frames = features.rows();
        let (mut x, input) = self.input.forward(&self.params, features)?;
        x.add_assign(&positional_encoding(frames, self.cfg.model_dim))?;
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        let mut inter = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, c) = layer.forward(&self.params, &x)?;
            layer_caches.push(c);
            x = y;
            if self.cfg.tap_layer == Some(i + 1) {
                let head = self.inter_head.as_ref().expect("tap implies head");
                inter = Some(head.forward(&self.params, &x)?);
            }
        }
        let (final_grid, final_cache) = self.final_head.forward(&self.params, &x)?;
        let (inter_grid, inter_cache) = match inter {
            Some((g, c)) => (Some(g), Some(c)),
            None => (None, None),
        };
        Ok((
            ForwardOutputs {
                final_grid,
                inter_grid,
            },
            ForwardCache {
                input,
                layers: layer_caches,
                final_head: final_cache,
                inter_head: inter_cache,
                frames,
            },
        ))
    }

    /// Posteriors only; no cache retained.
    pub fn infer(&self, features: &Tensor2D) -> Result<ForwardOutputs> {
        self.forward(features).map(|(o, _)| o)
    }

    /// Reverse pass for head-logit gradients produced by
    /// [`crate::distill::objective`]. With `stop_teacher_kd`, the
    /// distillation gradient that reaches the final head through its role as
    /// teacher is discarded, so only the final head's own CTC gradient flows
    /// down through it.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        head_grads: &HeadGrads,
        stop_teacher_kd: bool,
    ) -> Result<Gradients> {
        let mut grads = self.params.zeros_like();
        let mut d_final = head_grads.final_head.clone();
        d_final.ensure_shape((cache.frames, self.cfg.num_classes), "final head gradient")?;
        if let (false, Some(kd)) = (stop_teacher_kd, &head_grads.final_teacher_kd) {
            d_final.add_assign(kd)?;
        }
        let mut dx = self
            .final_head
            .backward(&self.params, &cache.final_head, &d_final, &mut grads)?;
        for i in (0..self.layers.len()).rev() {
            if self.cfg.tap_layer == Some(i + 1) {
                if let Some(d_inter) = &head_grads.inter_head {
                    let head = self.inter_head.as_ref().expect("tap implies head");
                    let hc = cache.inter_head.as_ref().expect("tap implies cache");
                    d_inter.ensure_shape((cache.frames, self.cfg.num_classes), "inter head gradient")?;
                    dx.add_assign(&head.backward(&self.params, hc, d_inter, &mut grads)?)?;
                }
            }
            dx = self.layers[i].backward(&self.params, &cache.layers[i], &dx, &mut grads)?;
        }
        self.input.backward(&self.params, &cache.input, &dx, &mut grads)?;
        debug_assert!(grads.is_finite(), "non-finite gradients");
        Ok(grads)
    }

    /// Layers 1..l plus the intermediate head as a standalone single-head
    /// model.
    pub fn extract_submodel(&self) -> Result<EncoderModel> {
        let l = self
            .cfg
            .tap_layer
            .ok_or_else(|| Error::invalid("model has no intermediate head to extract"))?;
        let sub_cfg = EncoderConfig {
            num_layers: l,
            tap_layer: None,
            ..self.cfg.clone()
        };
        let mut sub = EncoderModel::new(sub_cfg)?;
        let inter = self.inter_head.as_ref().expect("tap implies head");
        for id in sub.params.ids().collect::<Vec<_>>() {
            let src = match sub.groups[id.index()] {
                ParamGroup::FinalHead => {
                    let pos = sub.final_head.param_ids().iter().position(|&p| p == id).expect("head param");
                    inter.param_ids()[pos]
                }
                _ => self.params.find(sub.params.name(id)).expect("shared layer name"),
            };
            *sub.params.get_mut(id) = self.params.get(src).clone();
        }
        Ok(sub)
    }

    pub fn to_container(&self) -> Container {
        Container::new(
            self.cfg.canonical_json(),
            self.params
                .iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        )
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let cfg: EncoderConfig = serde_json::from_str(&c.config_json)?;
        let mut model = EncoderModel::new(cfg)?;
        if c.tensors.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                c.tensors.len()
            )));
        }
        for (id, (name, t)) in model.params.ids().collect::<Vec<_>>().into_iter().zip(&c.tensors) {
            if model.params.name(id) != name {
                return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
            }
            t.ensure_shape(model.params.get(id).shape(), "checkpoint tensor")?;
            *model.params.get_mut(id) = t.clone();
        }
        Ok(model)
    }

    /// Loads a checkpoint, refusing it unless its architecture digest equals
    /// that of `expected`.
    pub fn from_container_expecting(c: &Container, expected: &EncoderConfig) -> Result<Self> {
        if c.digest != expected.digest() {
            return Err(Error::ConfigDigestMismatch {
                expected: expected.digest(),
                found: c.digest.clone(),
            });
        }
        Self::from_container(c)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Forward/backward pairing for one utterance: a backward pass consumes the
/// cache left by the preceding forward.
pub struct Session<'m> {
    model: &'m EncoderModel,
    cache: Option<ForwardCache>,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m EncoderModel) -> Self {
        Self { model, cache: None }
    }

    pub fn forward(&mut self, features: &Tensor2D) -> Result<ForwardOutputs> {
        let (out, cache) = self.model.forward(features)?;
        self.cache = Some(cache);
        Ok(out)
    }

    pub fn backward(&mut self, head_grads: &HeadGrads, stop_teacher_kd: bool) -> Result<Gradients> {
        let cache = self.cache.take().ok_or(Error::BackwardWithoutForward)?;
        self.model.backward(&cache, head_grads, stop_teacher_kd)
    }
}
