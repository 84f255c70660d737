//! Flat parameter storage and its layout.
//!
//! All tensors live in one `Vec<f32>` in a fixed declaration order (the
//! checkpoint tensor order): token embeddings, position embeddings, each
//! encoder layer's tensors, final layer norm, classifier head. The layout is
//! a pure function of the configuration, so a checkpoint can be validated
//! shape-by-shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TaggerConfig;

/// Number of tensors per encoder layer (norms, attention, feed-forward).
pub const LAYER_TENSORS: usize = 16;

// Within-layer tensor indices.
pub const T_NORM1_GAIN: usize = 0;
pub const T_NORM1_BIAS: usize = 1;
pub const T_WQ: usize = 2;
pub const T_BQ: usize = 3;
pub const T_WK: usize = 4;
pub const T_BK: usize = 5;
pub const T_WV: usize = 6;
pub const T_BV: usize = 7;
pub const T_WO: usize = 8;
pub const T_BO: usize = 9;
pub const T_NORM2_GAIN: usize = 10;
pub const T_NORM2_BIAS: usize = 11;
pub const T_FF1_W: usize = 12;
pub const T_FF1_B: usize = 13;
pub const T_FF2_W: usize = 14;
pub const T_FF2_B: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
    n_layers: usize,
}

impl ParamLayout {
    pub fn from_config(cfg: &TaggerConfig) -> ParamLayout {
        let d = cfg.d_model;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            tensors.push(TensorSpec { name, shape, offset, len });
            offset += len;
        };

        push("tok_emb".into(), vec![cfg.vocab_size, d]);
        push("pos_emb".into(), vec![cfg.max_len, d]);
        for l in 0..cfg.n_layers {
            push(format!("layer{l}.norm1.gain"), vec![d]);
            push(format!("layer{l}.norm1.bias"), vec![d]);
            push(format!("layer{l}.attn.wq"), vec![d, d]);
            push(format!("layer{l}.attn.bq"), vec![d]);
            push(format!("layer{l}.attn.wk"), vec![d, d]);
            push(format!("layer{l}.attn.bk"), vec![d]);
            push(format!("layer{l}.attn.wv"), vec![d, d]);
            push(format!("layer{l}.attn.bv"), vec![d]);
            push(format!("layer{l}.attn.wo"), vec![d, d]);
            push(format!("layer{l}.attn.bo"), vec![d]);
            push(format!("layer{l}.norm2.gain"), vec![d]);
            push(format!("layer{l}.norm2.bias"), vec![d]);
            push(format!("layer{l}.ff.w1"), vec![d, cfg.d_ff]);
            push(format!("layer{l}.ff.b1"), vec![cfg.d_ff]);
            push(format!("layer{l}.ff.w2"), vec![cfg.d_ff, d]);
            push(format!("layer{l}.ff.b2"), vec![d]);
        }
        push("final_norm.gain".into(), vec![d]);
        push("final_norm.bias".into(), vec![d]);
        push("cls.w".into(), vec![d, cfg.n_classes]);
        push("cls.b".into(), vec![cfg.n_classes]);

        ParamLayout { tensors, total: offset, n_layers: cfg.n_layers }
    }

    #[inline]
    pub fn layer_tensor(&self, layer: usize, which: usize) -> &TensorSpec {
        &self.tensors[2 + layer * LAYER_TENSORS + which]
    }

    #[inline]
    pub fn tok_emb(&self) -> &TensorSpec {
        &self.tensors[0]
    }

    #[inline]
    pub fn pos_emb(&self) -> &TensorSpec {
        &self.tensors[1]
    }

    #[inline]
    pub fn final_norm_gain(&self) -> &TensorSpec {
        &self.tensors[2 + self.n_layers * LAYER_TENSORS]
    }

    #[inline]
    pub fn final_norm_bias(&self) -> &TensorSpec {
        &self.tensors[2 + self.n_layers * LAYER_TENSORS + 1]
    }

    #[inline]
    pub fn cls_w(&self) -> &TensorSpec {
        &self.tensors[2 + self.n_layers * LAYER_TENSORS + 2]
    }

    #[inline]
    pub fn cls_b(&self) -> &TensorSpec {
        &self.tensors[2 + self.n_layers * LAYER_TENSORS + 3]
    }

    #[inline]
    pub fn view<'a>(&self, params: &'a [f32], spec: &TensorSpec) -> &'a [f32] {
        &params[spec.offset..spec.offset + spec.len]
    }

    /// Locates the tensor containing a flat parameter index (for gradient
    /// diagnostics).
    pub fn tensor_of_index(&self, index: usize) -> &TensorSpec {
        self.tensors
            .iter()
            .find(|t| index >= t.offset && index < t.offset + t.len)
            .expect("index within total")
    }
}

/// Standard-normal draw via Box-Muller; keeps initialization free of extra
/// dependencies and byte-stable across platforms.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Deterministic parameter initialization from `cfg.seed`.
///
/// Embeddings are 0.02-std normal; projection matrices are uniform in
/// `±1/sqrt(d_model)`; biases zero; layer-norm gains one.
pub fn init_params(cfg: &TaggerConfig, layout: &ParamLayout) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 1.0 / (cfg.d_model as f64).sqrt();
    let mut params = vec![0.0f32; layout.total];
    for spec in &layout.tensors {
        let slice = &mut params[spec.offset..spec.offset + spec.len];
        let name = spec.name.as_str();
        if name.ends_with("emb") {
            for p in slice.iter_mut() {
                *p = (0.02 * normal(&mut rng)) as f32;
            }
        } else if name.ends_with(".gain") {
            slice.fill(1.0);
        } else if spec.shape.len() == 2 {
            for p in slice.iter_mut() {
                *p = (rng.random::<f64>() * 2.0 * bound - bound) as f32;
            }
        }
        // Biases and norm biases stay zero.
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TaggerConfig {
        TaggerConfig {
            vocab_size: 10,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_len: 8,
            n_classes: 7,
            dropout_rate: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn layout_is_contiguous_and_ordered() {
        let cfg = tiny_config();
        let layout = ParamLayout::from_config(&cfg);
        let mut offset = 0;
        for spec in &layout.tensors {
            assert_eq!(spec.offset, offset);
            assert_eq!(spec.len, spec.shape.iter().product::<usize>());
            offset += spec.len;
        }
        assert_eq!(offset, layout.total);
        assert_eq!(layout.tensors.len(), 2 + LAYER_TENSORS + 4);
        assert_eq!(layout.tok_emb().shape, vec![10, 8]);
        assert_eq!(layout.cls_b().shape, vec![7]);
    }

    #[test]
    fn init_is_deterministic_and_scaled()
    {
        let cfg = tiny_config();
        let layout = ParamLayout::from_config(&cfg);
        let a = init_params(&cfg, &layout);
        let b = init_params(&cfg, &layout);
        assert_eq!(a, b);

        let bound = 1.0 / (cfg.d_model as f64).sqrt();
        let wq = layout.view(&a, layout.layer_tensor(0, T_WQ));
        assert!(wq.iter().all(|&v| (v as f64).abs() <= bound));
        assert!(wq.iter().any(|&v| v != 0.0));
        let gain = layout.view(&a, layout.layer_tensor(0, T_NORM1_GAIN));
        assert!(gain.iter().all(|&v| v == 1.0));
        let bq = layout.view(&a, layout.layer_tensor(0, T_BQ));
        assert!(bq.iter().all(|&v| v == 0.0));
    }
}
