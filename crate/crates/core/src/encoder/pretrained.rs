use std::path::{Path, PathBuf};

use candle_core::{DType, Device, IndexOp, Module, Tensor, Var, D};
use candle_nn::{Conv2d, Conv2dConfig, Embedding, Linear, VarBuilder};
use image::imageops::FilterType;
use serde::Deserialize;
use tokenizers::Tokenizer;

use super::backend::{BackendInfo, BackendKind, Encoder, GradientSource, LayerSelector, LayerTrace};
use super::image::ImageInput;
use super::vector::EmbeddingVector;
use crate::error::{AuditError, Result};
use crate::geometry::PixelRect;

const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
const CLIP_STD: [f32; 3] = [0.268_629_54, 0.261_302_6, 0.275_777_1];

#[derive(Debug, Clone, Deserialize)]
struct TowerConfig {
    hidden_size: usize,
    intermediate_size: usize,
    num_attention_heads: usize,
    num_hidden_layers: usize,
    #[serde(default = "default_act")]
    hidden_act: String,
    #[serde(default = "default_eps")]
    layer_norm_eps: f64,
    #[serde(default)]
    vocab_size: usize,
    #[serde(default)]
    max_position_embeddings: usize,
    #[serde(default)]
    image_size: usize,
    #[serde(default)]
    patch_size: usize,
    #[serde(default = "default_channels")]
    num_channels: usize,
}

fn default_act() -> String {
    "quick_gelu".into()
}

fn default_eps() -> f64 {
    1e-5
}

fn default_channels() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
struct CheckpointConfig {
    text_config: TowerConfig,
    vision_config: TowerConfig,
    projection_dim: usize,
}

fn candle_err(e: impl std::fmt::Display) -> AuditError {
    AuditError::Computation(format!("tensor backend: {e}"))
}

type CResult<T> = candle_core::Result<T>;

#[derive(Debug, Clone, Copy)]
enum Act {
    QuickGelu,
    Gelu,
}

impl Act {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "quick_gelu" => Ok(Act::QuickGelu),
            "gelu" => Ok(Act::Gelu),
            other => Err(AuditError::Config(format!("unsupported activation `{other}`"))),
        }
    }

    fn apply(self, xs: &Tensor) -> CResult<Tensor> {
        match self {
            Act::QuickGelu => xs / ((xs * -1.702)?.exp()? + 1.0)?,
            Act::Gelu => xs.gelu_erf(),
        }
    }
}

/// Layer norm built from primitive ops so that it stays differentiable.
struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

fn layer_norm(size: usize, eps: f64, vb: VarBuilder) -> CResult<LayerNorm> {
    Ok(LayerNorm {
        weight: vb.get(size, "weight")?,
        bias: vb.get(size, "bias")?,
        eps,
    })
}

impl LayerNorm {
    fn forward(&self, xs: &Tensor) -> CResult<Tensor> {
        let centered = xs.broadcast_sub(&xs.mean_keepdim(D::Minus1)?)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        centered
            .broadcast_div(&(var + self.eps)?.sqrt()?)?
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)
    }
}

struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
    head_dim: usize,
}

impl Attention {
    fn new(vb: VarBuilder, c: &TowerConfig) -> CResult<Self> {
        let d = c.hidden_size;
        Ok(Attention {
            q: candle_nn::linear(d, d, vb.pp("q_proj"))?,
            k: candle_nn::linear(d, d, vb.pp("k_proj"))?,
            v: candle_nn::linear(d, d, vb.pp("v_proj"))?,
            out: candle_nn::linear(d, d, vb.pp("out_proj"))?,
            heads: c.num_attention_heads,
            head_dim: d / c.num_attention_heads,
        })
    }

    fn forward(&self, xs: &Tensor, mask: Option<&Tensor>) -> CResult<Tensor> {
        let (b, n, d) = xs.dims3()?;
        let split = |t: Tensor| t.reshape((b, n, self.heads, self.head_dim))?.transpose(1, 2)?.contiguous();
        let q = split((self.q.forward(xs)? * (self.head_dim as f64).powf(-0.5))?)?;
        let k = split(self.k.forward(xs)?)?;
        let v = split(self.v.forward(xs)?)?;
        let mut w = q.matmul(&k.t()?)?;
        if let Some(m) = mask {
            w = w.broadcast_add(m)?;
        }
        let w = candle_nn::ops::softmax(&w, D::Minus1)?;
        let o = w.matmul(&v)?.transpose(1, 2)?.reshape((b, n, d))?;
        self.out.forward(&o)
    }
}

struct Block {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    act: Act,
}

impl Block {
    fn new(vb: VarBuilder, c: &TowerConfig, act: Act) -> CResult<Self> {
        Ok(Block {
            ln1: layer_norm(c.hidden_size, c.layer_norm_eps, vb.pp("layer_norm1"))?,
            attn: Attention::new(vb.pp("self_attn"), c)?,
            ln2: layer_norm(c.hidden_size, c.layer_norm_eps, vb.pp("layer_norm2"))?,
            fc1: candle_nn::linear(c.hidden_size, c.intermediate_size, vb.pp("mlp").pp("fc1"))?,
            fc2: candle_nn::linear(c.intermediate_size, c.hidden_size, vb.pp("mlp").pp("fc2"))?,
            act,
        })
    }

    /// Everything after `layer_norm1`, given the residual input and the normalized tokens.
    fn finish(&self, residual: &Tensor, normed: &Tensor, mask: Option<&Tensor>) -> CResult<Tensor> {
        let xs = (residual + self.attn.forward(normed, mask)?)?;
        let h = self.fc2.forward(&self.act.apply(&self.fc1.forward(&self.ln2.forward(&xs)?)?)?)?;
        xs + h
    }

    fn forward(&self, xs: &Tensor, mask: Option<&Tensor>) -> CResult<Tensor> {
        self.finish(xs, &self.ln1.forward(xs)?, mask)
    }
}

struct TextTower {
    token_embedding: Embedding,
    position_embedding: Embedding,
    blocks: Vec<Block>,
    final_norm: LayerNorm,
    projection: Linear,
    max_len: usize,
}

impl TextTower {
    fn new(vb: VarBuilder, c: &TowerConfig, projection_dim: usize, proj: VarBuilder) -> Result<Self> {
        let act = Act::parse(&c.hidden_act)?;
        let build = || -> CResult<Self> {
            let emb = vb.pp("embeddings");
            Ok(TextTower {
                token_embedding: candle_nn::embedding(c.vocab_size, c.hidden_size, emb.pp("token_embedding"))?,
                position_embedding: candle_nn::embedding(
                    c.max_position_embeddings,
                    c.hidden_size,
                    emb.pp("position_embedding"),
                )?,
                blocks: (0..c.num_hidden_layers)
                    .map(|i| Block::new(vb.pp("encoder.layers").pp(i.to_string()), c, act))
                    .collect::<CResult<_>>()?,
                final_norm: layer_norm(c.hidden_size, c.layer_norm_eps, vb.pp("final_layer_norm"))?,
                projection: candle_nn::linear_no_bias(c.hidden_size, projection_dim, proj)?,
                max_len: c.max_position_embeddings,
            })
        };
        build().map_err(candle_err)
    }

    fn forward(&self, ids: &[u32], device: &Device) -> CResult<Tensor> {
        let n = ids.len();
        let input = Tensor::new(ids, device)?.unsqueeze(0)?;
        let positions = Tensor::arange(0u32, n as u32, device)?;
        let mut xs = self
            .token_embedding
            .forward(&input)?
            .broadcast_add(&self.position_embedding.forward(&positions)?)?;
        let mask: Vec<f32> = (0..n)
            .flat_map(|i| (0..n).map(move |j| if j > i { f32::NEG_INFINITY } else { 0.0 }))
            .collect();
        let mask = Tensor::from_vec(mask, (1, 1, n, n), device)?;
        for block in &self.blocks {
            xs = block.forward(&xs, Some(&mask))?;
        }
        let xs = self.final_norm.forward(&xs)?;
        // pooled at the end-of-text token, which carries the largest id
        let eot = ids.iter().enumerate().max_by_key(|(i, &t)| (t, std::cmp::Reverse(*i))).map(|(i, _)| i).unwrap_or(0);
        self.projection.forward(&xs.i((.., eot, ..))?)
    }
}

struct VisionTower {
    patch_embedding: Conv2d,
    class_embedding: Tensor,
    position_embedding: Embedding,
    pre_norm: LayerNorm,
    blocks: Vec<Block>,
    post_norm: LayerNorm,
    projection: Linear,
    image_size: usize,
    grid: usize,
    channels: usize,
}

impl VisionTower {
    fn new(vb: VarBuilder, c: &TowerConfig, projection_dim: usize, proj: VarBuilder) -> Result<Self> {
        if c.patch_size == 0 || c.image_size < c.patch_size || !c.image_size.is_multiple_of(c.patch_size) {
            return Err(AuditError::Config(format!(
                "vision tower: image_size {} is not a multiple of patch_size {}",
                c.image_size, c.patch_size
            )));
        }
        let act = Act::parse(&c.hidden_act)?;
        let grid = c.image_size / c.patch_size;
        let build = || -> CResult<Self> {
            let emb = vb.pp("embeddings");
            let conv = Conv2dConfig {
                stride: c.patch_size,
                ..Default::default()
            };
            Ok(VisionTower {
                patch_embedding: candle_nn::conv2d_no_bias(
                    c.num_channels,
                    c.hidden_size,
                    c.patch_size,
                    conv,
                    emb.pp("patch_embedding"),
                )?,
                class_embedding: emb.get(c.hidden_size, "class_embedding")?,
                position_embedding: candle_nn::embedding(grid * grid + 1, c.hidden_size, emb.pp("position_embedding"))?,
                pre_norm: layer_norm(c.hidden_size, c.layer_norm_eps, vb.pp("pre_layrnorm"))?,
                blocks: (0..c.num_hidden_layers)
                    .map(|i| Block::new(vb.pp("encoder.layers").pp(i.to_string()), c, act))
                    .collect::<CResult<_>>()?,
                post_norm: layer_norm(c.hidden_size, c.layer_norm_eps, vb.pp("post_layernorm"))?,
                projection: candle_nn::linear_no_bias(c.hidden_size, projection_dim, proj)?,
                image_size: c.image_size,
                grid,
                channels: c.hidden_size,
            })
        };
        build().map_err(candle_err)
    }

    fn embed(&self, pixels: &Tensor) -> CResult<Tensor> {
        let patches = self.patch_embedding.forward(pixels)?.flatten_from(2)?.transpose(1, 2)?;
        let cls = self.class_embedding.reshape((1, 1, self.channels))?;
        let xs = Tensor::cat(&[cls, patches], 1)?;
        let positions = Tensor::arange(0u32, (self.grid * self.grid + 1) as u32, pixels.device())?;
        let xs = xs.broadcast_add(&self.position_embedding.forward(&positions)?)?;
        self.pre_norm.forward(&xs)
    }

    fn pool(&self, xs: &Tensor) -> CResult<Tensor> {
        self.projection.forward(&self.post_norm.forward(&xs.i((.., 0, ..))?)?)
    }

    fn forward(&self, pixels: &Tensor) -> CResult<Tensor> {
        let mut xs = self.embed(pixels)?;
        for block in &self.blocks {
            xs = block.forward(&xs, None)?;
        }
        self.pool(&xs)
    }

    /// Residual stream entering block `layer` and its `layer_norm1` output.
    fn hook(&self, pixels: &Tensor, layer: usize) -> CResult<(Tensor, Tensor)> {
        let mut xs = self.embed(pixels)?;
        for block in &self.blocks[..layer] {
            xs = block.forward(&xs, None)?;
        }
        let normed = self.blocks[layer].ln1.forward(&xs)?;
        Ok((xs, normed))
    }

    /// Image embedding as a function of the hooked `layer_norm1` output.
    fn tail(&self, residual: &Tensor, normed: &Tensor, layer: usize) -> CResult<Tensor> {
        let mut xs = self.blocks[layer].finish(residual, normed, None)?;
        for block in &self.blocks[layer + 1..] {
            xs = block.forward(&xs, None)?;
        }
        self.pool(&xs)
    }
}

/// A CLIP-style dual encoder loaded from a local checkpoint directory holding
/// `config.json`, `model.safetensors` and `tokenizer.json`.
pub struct PretrainedBackend {
    info: BackendInfo,
    dir: PathBuf,
    text: TextTower,
    vision: VisionTower,
    tokenizer: Tokenizer,
    device: Device,
}

impl std::fmt::Debug for PretrainedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PretrainedBackend").field("info", &self.info).field("dir", &self.dir).finish()
    }
}

impl PretrainedBackend {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let read = |name: &str| -> Result<PathBuf> {
            let p = dir.join(name);
            if p.is_file() {
                Ok(p)
            } else {
                Err(AuditError::Config(format!("checkpoint is missing {}", p.display())))
            }
        };
        let config_path = read("config.json")?;
        let text = std::fs::read_to_string(&config_path).map_err(|e| AuditError::io(&config_path, e))?;
        let config: CheckpointConfig = serde_json::from_str(&text)
            .map_err(|e| AuditError::Config(format!("{}: {e}", config_path.display())))?;
        let weights = read("model.safetensors")?;
        let tokenizer_path = read("tokenizer.json")?;
        let tokenizer = Tokenizer::from_file(&tokenizer_path)
            .map_err(|e| AuditError::Config(format!("{}: {e}", tokenizer_path.display())))?;

        let device = Device::Cpu;
        // SAFETY: the file is memory-mapped read-only and not modified while the backend lives.
        let vb = unsafe { VarBuilder::from_mmaped_safetensors(&[&weights], DType::F32, &device) }
            .map_err(|e| AuditError::Config(format!("{}: {e}", weights.display())))?;
        let text_tower = TextTower::new(
            vb.pp("text_model"),
            &config.text_config,
            config.projection_dim,
            vb.pp("text_projection"),
        )
        .map_err(|e| AuditError::Config(format!("{}: {e}", weights.display())))?;
        let vision = VisionTower::new(
            vb.pp("vision_model"),
            &config.vision_config,
            config.projection_dim,
            vb.pp("visual_projection"),
        )
        .map_err(|e| AuditError::Config(format!("{}: {e}", weights.display())))?;

        let label = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "checkpoint".into());
        Ok(PretrainedBackend {
            info: BackendInfo {
                name: format!("pretrained-{label}"),
                dim: config.projection_dim,
                kind: BackendKind::Pretrained,
                supports_gradients: true,
            },
            dir,
            text: text_tower,
            vision,
            tokenizer,
            device,
        })
    }

    pub fn layers(&self) -> usize {
        self.vision.blocks.len()
    }

    fn backend_err(&self, item: &str, e: impl std::fmt::Display) -> AuditError {
        AuditError::Backend {
            backend: self.info.name.clone(),
            item: item.to_string(),
            message: e.to_string(),
        }
    }

    /// Resize the short side, centre-crop, normalize. Returns the pixel tensor
    /// and the crop box in source coordinates.
    fn preprocess(&self, image: &ImageInput) -> Result<(Tensor, PixelRect)> {
        let (w, h) = (image.width(), image.height());
        let side = w.min(h);
        let crop = PixelRect::new((w - side) / 2, (h - side) / 2, side, side);
        let size = self.vision.image_size as u32;
        let cropped = image::imageops::crop_imm(&image.pixels, crop.x, crop.y, side, side).to_image();
        let resized = image::imageops::resize(&cropped, size, size, FilterType::CatmullRom);
        let n = (size * size) as usize;
        let mut data = vec![0f32; 3 * n];
        for (i, p) in resized.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = (p[c] as f32 / 255.0 - CLIP_MEAN[c]) / CLIP_STD[c];
            }
        }
        let t = Tensor::from_vec(data, (1, 3, size as usize, size as usize), &self.device)
            .map_err(|e| self.backend_err(&image.id, e))?;
        Ok((t, crop))
    }

    fn resolve_layer(&self, layer: &LayerSelector) -> Result<usize> {
        let n = self.layers();
        match layer {
            LayerSelector::Final => Ok(n - 1),
            LayerSelector::Block(i) if *i < n => Ok(*i),
            other => Err(AuditError::Config(format!(
                "layer `{other}` does not exist in {} (available: final, block:0..block:{})",
                self.info.name,
                n - 1
            ))),
        }
    }
}

fn to_f64(t: &Tensor) -> CResult<Vec<f64>> {
    t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()
}

impl Encoder for PretrainedBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let encoding = self.tokenizer.encode(text, true).map_err(|e| self.backend_err(text, e))?;
        let mut ids = encoding.get_ids().to_vec();
        if ids.is_empty() {
            return Err(self.backend_err(text, "tokenizer produced no tokens"));
        }
        ids.truncate(self.text.max_len);
        let out = self.text.forward(&ids, &self.device).and_then(|t| to_f64(&t));
        out.map_err(|e| self.backend_err(text, e))
    }

    fn embed_image(&self, image: &ImageInput) -> Result<Vec<f64>> {
        let (pixels, _) = self.preprocess(image)?;
        let out = self.vision.forward(&pixels).and_then(|t| to_f64(&t));
        out.map_err(|e| self.backend_err(&image.id, e))
    }

    fn gradient_source(&self) -> Option<&dyn GradientSource> {
        Some(self)
    }
}

impl GradientSource for PretrainedBackend {
    fn layer_trace(&self, image: &ImageInput, query: &EmbeddingVector, layer: &LayerSelector) -> Result<LayerTrace> {
        let layer = self.resolve_layer(layer)?;
        if query.dim() != self.info.dim {
            return Err(AuditError::Contract(format!(
                "query has dimension {}, {} produces {}",
                query.dim(),
                self.info.name,
                self.info.dim
            )));
        }
        let (pixels, footprint) = self.preprocess(image)?;
        let run = || -> CResult<(Vec<f64>, Vec<f64>, f64)> {
            let (residual, normed) = self.vision.hook(&pixels, layer)?;
            let hooked = Var::from_tensor(&normed)?;
            let emb = self.vision.tail(&residual, hooked.as_tensor(), layer)?;
            let q: Vec<f32> = query.values().iter().map(|&v| v as f32).collect();
            let q = Tensor::from_vec(q, (1, self.info.dim), &self.device)?;
            let norm = emb.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
            let sim = emb.broadcast_div(&norm)?.mul(&q)?.sum_all()?;
            let grads = sim.backward()?;
            let grad = grads
                .get(hooked.as_tensor())
                .cloned()
                .ok_or_else(|| candle_core::Error::Msg("hooked layer received no gradient".into()))?;
            Ok((to_f64(hooked.as_tensor())?, to_f64(&grad)?, sim.to_dtype(DType::F64)?.to_scalar::<f64>()?))
        };
        let (activations, gradients, similarity) = run().map_err(|e| self.backend_err(&image.id, e))?;
        let trace = LayerTrace {
            activations,
            gradients,
            channels: self.vision.channels,
            summary_tokens: 1,
            grid: (self.vision.grid, self.vision.grid),
            footprint,
            similarity,
        };
        trace.check()?;
        Ok(trace)
    }
}
