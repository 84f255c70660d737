//! Encoder forward and backward passes over one sequence.
//!
//! Pre-layer-norm blocks: `x += Attn(LN(x))`, `x += FF(LN(x))`, with learned
//! absolute position embeddings, GELU feed-forward, a final layer norm, and a
//! linear classifier. The backward pass is hand-derived and exact for the
//! dropout-off graph; dropout masks recorded on the forward tape are reused,
//! so training gradients are exact for the sampled graph too.
//!
//! Sequences are processed at their true length. Batch rows are padded only
//! at the interface; PAD positions are never part of attention or loss, which
//! makes logits at real positions independent of PAD content by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{
    gelu, gelu_prime, layer_norm_backward, layer_norm_forward, linear_backward, linear_forward,
    softmax_rows, softmax_rows_backward, LnTape, Mat,
};
use super::params::*;
use super::TaggerConfig;

/// Dropout behavior for one forward/backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    /// Deterministic, dropout disabled.
    Eval,
    /// Dropout enabled with an explicit mask seed, so training stays a pure
    /// function of its seeds.
    Train { seed: u64 },
}

pub(crate) struct LayerTape {
    ln1: LnTape,
    h1: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    ctx: Mat,
    attn_mask: Option<Vec<f64>>,
    ln2: LnTape,
    h2: Mat,
    ff_pre: Mat,
    ff_act: Mat,
    ff_mask: Option<Vec<f64>>,
}

pub(crate) struct Tape {
    ids: Vec<u32>,
    emb_mask: Option<Vec<f64>>,
    layers: Vec<LayerTape>,
    lnf: LnTape,
    hf: Mat,
}

/// Read-only view of a model's configuration and flat parameters.
#[derive(Clone, Copy)]
pub(crate) struct NetView<'a> {
    pub cfg: &'a TaggerConfig,
    pub layout: &'a ParamLayout,
    pub params: &'a [f32],
}

impl<'a> NetView<'a> {
    #[inline]
    fn tensor(&self, spec: &TensorSpec) -> &'a [f32] {
        self.layout.view(self.params, spec)
    }

    #[inline]
    fn layer(&self, l: usize, which: usize) -> &'a [f32] {
        self.tensor(self.layout.layer_tensor(l, which))
    }
}

fn draw_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn apply_mask(m: &mut Mat, mask: &[f64]) {
    for (v, &k) in m.data.iter_mut().zip(mask) {
        *v *= k;
    }
}

fn embed(view: NetView<'_>, ids: &[u32]) -> Mat {
    let d = view.cfg.d_model;
    let tok = view.tensor(view.layout.tok_emb());
    let pos = view.tensor(view.layout.pos_emb());
    let mut x = Mat::zeros(ids.len(), d);
    for (t, &id) in ids.iter().enumerate() {
        let tok_row = &tok[id as usize * d..(id as usize + 1) * d];
        let pos_row = &pos[t * d..(t + 1) * d];
        for ((xv, &tv), &pv) in x.row_mut(t).iter_mut().zip(tok_row).zip(pos_row) {
            *xv = tv as f64 + pv as f64;
        }
    }
    x
}

struct AttnOut {
    ctx: Mat,
    probs: Vec<Mat>,
}

fn attention_forward(view: NetView<'_>, q: &Mat, k: &Mat, v: &Mat) -> AttnOut {
    let t_len = q.rows;
    let d = view.cfg.d_model;
    let n_heads = view.cfg.n_heads;
    let dk = d / n_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut ctx = Mat::zeros(t_len, d);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let lo = h * dk;
        let hi = lo + dk;
        let mut scores = Mat::zeros(t_len, t_len);
        for i in 0..t_len {
            let qi = &q.row(i)[lo..hi];
            let srow = scores.row_mut(i);
            for (j, sv) in srow.iter_mut().enumerate() {
                let kj = &k.row(j)[lo..hi];
                let mut acc = 0.0;
                for (&qv, &kv) in qi.iter().zip(kj) {
                    acc += qv * kv;
                }
                *sv = acc * scale;
            }
        }
        softmax_rows(&mut scores);
        for i in 0..t_len {
            let arow = scores.row(i);
            for j in 0..t_len {
                let a = arow[j];
                let vj = &v.row(j)[lo..hi];
                let ci = &mut ctx.row_mut(i)[lo..hi];
                for (cv, &vv) in ci.iter_mut().zip(vj) {
                    *cv += a * vv;
                }
            }
        }
        probs.push(scores);
    }
    AttnOut { ctx, probs }
}

/// Full forward pass over one sequence of token ids (already truncated to
/// `max_len`), recording everything the backward pass needs.
pub(crate) fn forward_full(view: NetView<'_>, ids: &[u32], mode: DropoutMode) -> (Mat, Tape) {
    debug_assert!(!ids.is_empty() && ids.len() <= view.cfg.max_len);
    let d = view.cfg.d_model;
    let rate = view.cfg.dropout_rate;
    let mut rng = match mode {
        DropoutMode::Train { seed } if rate > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };

    let mut x = embed(view, ids);
    let emb_mask = rng.as_mut().map(|r| draw_mask(r, x.data.len(), rate));
    if let Some(mask) = &emb_mask {
        apply_mask(&mut x, mask);
    }

    let mut layers = Vec::with_capacity(view.cfg.n_layers);
    for l in 0..view.cfg.n_layers {
        let (h1, ln1) = layer_norm_forward(&x, view.layer(l, T_NORM1_GAIN), view.layer(l, T_NORM1_BIAS));
        let q = linear_forward(&h1, view.layer(l, T_WQ), view.layer(l, T_BQ), d);
        let k = linear_forward(&h1, view.layer(l, T_WK), view.layer(l, T_BK), d);
        let v = linear_forward(&h1, view.layer(l, T_WV), view.layer(l, T_BV), d);
        let attn = attention_forward(view, &q, &k, &v);
        let mut attn_out = linear_forward(&attn.ctx, view.layer(l, T_WO), view.layer(l, T_BO), d);
        let attn_mask = rng.as_mut().map(|r| draw_mask(r, attn_out.data.len(), rate));
        if let Some(mask) = &attn_mask {
            apply_mask(&mut attn_out, mask);
        }
        for (xv, &av) in x.data.iter_mut().zip(&attn_out.data) {
            *xv += av;
        }

        let (h2, ln2) = layer_norm_forward(&x, view.layer(l, T_NORM2_GAIN), view.layer(l, T_NORM2_BIAS));
        let ff_pre = linear_forward(&h2, view.layer(l, T_FF1_W), view.layer(l, T_FF1_B), view.cfg.d_ff);
        let mut ff_act = ff_pre.clone();
        for v in ff_act.data.iter_mut() {
            *v = gelu(*v);
        }
        let mut ff_out = linear_forward(&ff_act, view.layer(l, T_FF2_W), view.layer(l, T_FF2_B), d);
        let ff_mask = rng.as_mut().map(|r| draw_mask(r, ff_out.data.len(), rate));
        if let Some(mask) = &ff_mask {
            apply_mask(&mut ff_out, mask);
        }
        for (xv, &fv) in x.data.iter_mut().zip(&ff_out.data) {
            *xv += fv;
        }

        layers.push(LayerTape {
            ln1,
            h1,
            q,
            k,
            v,
            probs: attn.probs,
            ctx: attn.ctx,
            attn_mask,
            ln2,
            h2,
            ff_pre,
            ff_act,
            ff_mask,
        });
    }

    let (hf, lnf) = layer_norm_forward(
        &x,
        view.tensor(view.layout.final_norm_gain()),
        view.tensor(view.layout.final_norm_bias()),
    );
    let logits = linear_forward(
        &hf,
        view.tensor(view.layout.cls_w()),
        view.tensor(view.layout.cls_b()),
        view.cfg.n_classes,
    );
    (
        logits,
        Tape { ids: ids.to_vec(), emb_mask, layers, lnf, hf },
    )
}

/// Lean inference pass: same arithmetic as [`forward_full`] in eval mode, no
/// tape. Used by prediction and latency measurement; a test pins it to the
/// tape-recording path bit for bit.
pub(crate) fn infer_logits(view: NetView<'_>, ids: &[u32]) -> Mat {
    debug_assert!(!ids.is_empty() && ids.len() <= view.cfg.max_len);
    let d = view.cfg.d_model;
    let mut x = embed(view, ids);
    for l in 0..view.cfg.n_layers {
        let (h1, _) = layer_norm_forward(&x, view.layer(l, T_NORM1_GAIN), view.layer(l, T_NORM1_BIAS));
        let q = linear_forward(&h1, view.layer(l, T_WQ), view.layer(l, T_BQ), d);
        let k = linear_forward(&h1, view.layer(l, T_WK), view.layer(l, T_BK), d);
        let v = linear_forward(&h1, view.layer(l, T_WV), view.layer(l, T_BV), d);
        let attn = attention_forward(view, &q, &k, &v);
        let attn_out = linear_forward(&attn.ctx, view.layer(l, T_WO), view.layer(l, T_BO), d);
        for (xv, &av) in x.data.iter_mut().zip(&attn_out.data) {
            *xv += av;
        }
        let (h2, _) = layer_norm_forward(&x, view.layer(l, T_NORM2_GAIN), view.layer(l, T_NORM2_BIAS));
        let ff_pre = linear_forward(&h2, view.layer(l, T_FF1_W), view.layer(l, T_FF1_B), view.cfg.d_ff);
        let mut ff_act = ff_pre;
        for v in ff_act.data.iter_mut() {
            *v = gelu(*v);
        }
        let ff_out = linear_forward(&ff_act, view.layer(l, T_FF2_W), view.layer(l, T_FF2_B), d);
        for (xv, &fv) in x.data.iter_mut().zip(&ff_out.data) {
            *xv += fv;
        }
    }
    let (hf, _) = layer_norm_forward(
        &x,
        view.tensor(view.layout.final_norm_gain()),
        view.tensor(view.layout.final_norm_bias()),
    );
    linear_forward(
        &hf,
        view.tensor(view.layout.cls_w()),
        view.tensor(view.layout.cls_b()),
        view.cfg.n_classes,
    )
}

/// Two disjoint mutable tensor slices out of the flat gradient buffer.
fn grad_pair<'a>(
    grads: &'a mut [f64],
    a: &TensorSpec,
    b: &TensorSpec,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.offset + a.len <= b.offset);
    let (left, right) = grads.split_at_mut(b.offset);
    (&mut left[a.offset..a.offset + a.len], &mut right[..b.len])
}

fn attention_backward(
    view: NetView<'_>,
    tape: &LayerTape,
    dctx: &Mat,
) -> (Mat, Mat, Mat) {
    let t_len = dctx.rows;
    let d = view.cfg.d_model;
    let n_heads = view.cfg.n_heads;
    let dk = d / n_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut dq = Mat::zeros(t_len, d);
    let mut dkm = Mat::zeros(t_len, d);
    let mut dv = Mat::zeros(t_len, d);
    for h in 0..n_heads {
        let lo = h * dk;
        let hi = lo + dk;
        let probs = &tape.probs[h];
        let mut da = Mat::zeros(t_len, t_len);
        for i in 0..t_len {
            let di = &dctx.row(i)[lo..hi];
            let dar = da.row_mut(i);
            let arow = probs.row(i);
            for j in 0..t_len {
                let vj = &tape.v.row(j)[lo..hi];
                let mut acc = 0.0;
                for (&dv_, &vv) in di.iter().zip(vj) {
                    acc += dv_ * vv;
                }
                dar[j] = acc;
                // dV[j] += A[i][j] * dctx[i]
                let a = arow[j];
                let dvj = &mut dv.row_mut(j)[lo..hi];
                for (dvv, &dcv) in dvj.iter_mut().zip(di) {
                    *dvv += a * dcv;
                }
            }
        }
        let ds = softmax_rows_backward(probs, &da);
        for i in 0..t_len {
            let dsr = ds.row(i);
            let qi: Vec<f64> = tape.q.row(i)[lo..hi].to_vec();
            let dqi = &mut dq.row_mut(i)[lo..hi];
            for j in 0..t_len {
                let s = dsr[j] * scale;
                let kj = &tape.k.row(j)[lo..hi];
                for (dqv, &kv) in dqi.iter_mut().zip(kj) {
                    *dqv += s * kv;
                }
                let dkj = &mut dkm.row_mut(j)[lo..hi];
                for (dkv, &qv) in dkj.iter_mut().zip(&qi) {
                    *dkv += s * qv;
                }
            }
        }
    }
    (dq, dkm, dv)
}

/// Backward pass for one sequence; accumulates into the flat gradient buffer
/// (same layout as the parameters).
pub(crate) fn backward(view: NetView<'_>, tape: &Tape, dlogits: &Mat, grads: &mut [f64]) {
    let layout = view.layout;

    // Classifier head.
    let dhf = {
        let (gw, gb) = grad_pair(grads, layout.cls_w(), layout.cls_b());
        linear_backward(&tape.hf, view.tensor(layout.cls_w()), dlogits, gw, gb)
    };

    // Final layer norm.
    let mut dx = {
        let (gg, gb) = grad_pair(grads, layout.final_norm_gain(), layout.final_norm_bias());
        layer_norm_backward(&dhf, &tape.lnf, view.tensor(layout.final_norm_gain()), gg, gb)
    };

    for (l, lt) in tape.layers.iter().enumerate().rev() {
        // Feed-forward block.
        let mut d_ff_out = dx.clone();
        if let Some(mask) = &lt.ff_mask {
            apply_mask(&mut d_ff_out, mask);
        }
        let df = {
            let (gw, gb) = grad_pair(grads, layout.layer_tensor(l, T_FF2_W), layout.layer_tensor(l, T_FF2_B));
            linear_backward(&lt.ff_act, view.layer(l, T_FF2_W), &d_ff_out, gw, gb)
        };
        let mut du = df;
        for (dv, &uv) in du.data.iter_mut().zip(&lt.ff_pre.data) {
            *dv *= gelu_prime(uv);
        }
        let dh2 = {
            let (gw, gb) = grad_pair(grads, layout.layer_tensor(l, T_FF1_W), layout.layer_tensor(l, T_FF1_B));
            linear_backward(&lt.h2, view.layer(l, T_FF1_W), &du, gw, gb)
        };
        let dln2 = {
            let (gg, gb) = grad_pair(grads, layout.layer_tensor(l, T_NORM2_GAIN), layout.layer_tensor(l, T_NORM2_BIAS));
            layer_norm_backward(&dh2, &lt.ln2, view.layer(l, T_NORM2_GAIN), gg, gb)
        };
        // Residual: gradient reaches the block input both directly and
        // through the norm.
        for (xv, &lv) in dx.data.iter_mut().zip(&dln2.data) {
            *xv += lv;
        }

        // Attention block.
        let mut d_attn_out = dx.clone();
        if let Some(mask) = &lt.attn_mask {
            apply_mask(&mut d_attn_out, mask);
        }
        let dctx = {
            let (gw, gb) = grad_pair(grads, layout.layer_tensor(l, T_WO), layout.layer_tensor(l, T_BO));
            linear_backward(&lt.ctx, view.layer(l, T_WO), &d_attn_out, gw, gb)
        };
        let (dq, dk, dv) = attention_backward(view, lt, &dctx);
        let mut dh1 = {
            let (gw, gb) = grad_pair(grads, layout.layer_tensor(l, T_WQ), layout.layer_tensor(l, T_BQ));
            linear_backward(&lt.h1, view.layer(l, T_WQ), &dq, gw, gb)
        };
        let dh1_k = {
            let (gw, gb) = grad_pair(grads, layout.layer_tensor(l, T_WK), layout.layer_tensor(l, T_BK));
            linear_backward(&lt.h1, view.layer(l, T_WK), &dk, gw, gb)
        };
        let dh1_v = {
            let (gw, gb) = grad_pair(grads, layout.layer_tensor(l, T_WV), layout.layer_tensor(l, T_BV));
            linear_backward(&lt.h1, view.layer(l, T_WV), &dv, gw, gb)
        };
        for ((a, &b), &c) in dh1.data.iter_mut().zip(&dh1_k.data).zip(&dh1_v.data) {
            *a += b + c;
        }
        let dln1 = {
            let (gg, gb) = grad_pair(grads, layout.layer_tensor(l, T_NORM1_GAIN), layout.layer_tensor(l, T_NORM1_BIAS));
            layer_norm_backward(&dh1, &lt.ln1, view.layer(l, T_NORM1_GAIN), gg, gb)
        };
        for (xv, &lv) in dx.data.iter_mut().zip(&dln1.data) {
            *xv += lv;
        }
    }

    if let Some(mask) = &tape.emb_mask {
        apply_mask(&mut dx, mask);
    }
    let d = view.cfg.d_model;
    let tok_spec = layout.tok_emb();
    let pos_spec = layout.pos_emb();
    for (t, &id) in tape.ids.iter().enumerate() {
        let row = dx.row(t);
        let tok_off = tok_spec.offset + id as usize * d;
        for (g, &v) in grads[tok_off..tok_off + d].iter_mut().zip(row) {
            *g += v;
        }
        let pos_off = pos_spec.offset + t * d;
        for (g, &v) in grads[pos_off..pos_off + d].iter_mut().zip(row) {
            *g += v;
        }
    }
}
