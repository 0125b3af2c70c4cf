use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::params::{AttnParams, MlpParams, Params, Scalar};
use crate::rng::derive_rng;

const RMS_EPS: f64 = 1e-6;
const NEG_INF: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub embed_dim: usize,
    pub mlp_dim: usize,
    pub max_prompt_len: usize,
    pub max_target_len: usize,
    pub dropout: f64,
}

impl Default for TransformerConfig {
    /// Desk-scale architecture; larger settings remain reachable
    /// through the same fields.
    fn default() -> Self {
        Self {
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            head_dim: 32,
            embed_dim: 128,
            mlp_dim: 512,
            max_prompt_len: 256,
            max_target_len: 8,
            dropout: 0.0,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim != self.heads * self.head_dim {
            return Err(Error::InvalidConfig(format!(
                "embed_dim {} != heads {} * head_dim {}",
                self.embed_dim, self.heads, self.head_dim
            )));
        }
        let dims = [
            self.enc_layers,
            self.dec_layers,
            self.heads,
            self.head_dim,
            self.embed_dim,
            self.mlp_dim,
            self.max_prompt_len,
            self.max_target_len,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("all dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Padded training batch: prompts (right-truncated to the config maximum),
/// shifted decoder inputs and the target token grid.
#[derive(Debug, Clone)]
pub struct Batch {
    pub prompt_ids: Array2<usize>,
    pub prompt_len: Vec<usize>,
    pub dec_in: Array2<usize>,
    pub targets: Array2<usize>,
    /// 1.0 where a target position contributes to the loss.
    pub target_mask: Array2<f64>,
}

impl Batch {
    /// `pad_id` doubles as the decoder start token.
    pub fn new(
        prompts: &[Vec<u32>],
        targets: &[Vec<u32>],
        config: &TransformerConfig,
        pad_id: u32,
    ) -> Result<Self> {
        if prompts.is_empty() || prompts.len() != targets.len() {
            return Err(Error::InvalidConfig("batch prompts/targets misaligned".into()));
        }
        if targets.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidConfig("empty target".into()));
        }
        let tt = targets.iter().map(|t| t.len()).max().unwrap();
        if tt > config.max_target_len {
            return Err(Error::InvalidConfig(format!(
                "target length {tt} exceeds max_target_len {}; targets are never truncated",
                config.max_target_len
            )));
        }
        let b = prompts.len();
        let tp = prompts
            .iter()
            .map(|p| p.len().min(config.max_prompt_len).max(1))
            .max()
            .unwrap();
        let mut prompt_ids = Array2::from_elem((b, tp), pad_id as usize);
        let mut prompt_len = Vec::with_capacity(b);
        for (i, p) in prompts.iter().enumerate() {
            let n = p.len().min(config.max_prompt_len).max(1);
            for (j, &id) in p.iter().take(n).enumerate() {
                prompt_ids[[i, j]] = id as usize;
            }
            prompt_len.push(n);
        }
        let mut dec_in = Array2::from_elem((b, tt), pad_id as usize);
        let mut tgt = Array2::from_elem((b, tt), pad_id as usize);
        let mut mask = Array2::zeros((b, tt));
        for (i, t) in targets.iter().enumerate() {
            for (j, &id) in t.iter().enumerate() {
                tgt[[i, j]] = id as usize;
                mask[[i, j]] = 1.0;
                if j + 1 < tt {
                    dec_in[[i, j + 1]] = id as usize;
                }
            }
        }
        Ok(Self { prompt_ids, prompt_len, dec_in, targets: tgt, target_mask: mask })
    }
}

// ---------------------------------------------------------------------------
// primitive layers

struct RmsCache<F> {
    x: Array2<F>,
    r: Array1<F>,
}

fn rmsnorm_fwd<F: Scalar>(x: &Array2<F>, g: &Array1<F>) -> (Array2<F>, RmsCache<F>) {
    let d = x.ncols();
    let r = x.map_axis(Axis(1), |row| {
        F::from_f64(
            (row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / d as f64 + RMS_EPS)
                .sqrt(),
        )
    });
    let mut y = x.clone();
    for (mut row, &rn) in y.axis_iter_mut(Axis(0)).zip(r.iter()) {
        for (v, &gi) in row.iter_mut().zip(g.iter()) {
            *v = *v * gi / rn;
        }
    }
    (y, RmsCache { x: x.clone(), r })
}

fn rmsnorm_bwd<F: Scalar>(
    cache: &RmsCache<F>,
    g: &Array1<F>,
    dy: &Array2<F>,
) -> (Array2<F>, Array1<F>) {
    let d = cache.x.ncols();
    let mut dx = Array2::zeros(cache.x.raw_dim());
    let mut dg = Array1::zeros(g.raw_dim());
    for n in 0..cache.x.nrows() {
        let rn = cache.r[n].as_f64();
        let mut s = 0.0;
        for j in 0..d {
            let xv = cache.x[[n, j]].as_f64();
            let dyv = dy[[n, j]].as_f64();
            dg[j] = dg[j] + F::from_f64(dyv * xv / rn);
            s += g[j].as_f64() * dyv * xv;
        }
        s /= d as f64;
        for j in 0..d {
            let xv = cache.x[[n, j]].as_f64();
            let dyv = dy[[n, j]].as_f64();
            dx[[n, j]] = F::from_f64(g[j].as_f64() * dyv / rn - xv * s / (rn * rn * rn));
        }
    }
    (dx, dg)
}

fn softmax_rows_inplace<F: Scalar>(m: &mut Array2<F>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            let e = (v.as_f64() - max).exp();
            sum += e;
            *v = F::from_f64(e);
        }
        for v in row.iter_mut() {
            *v = F::from_f64(v.as_f64() / sum);
        }
    }
}

struct MhaCache<F> {
    xq_normed: Array2<F>,
    xkv_normed: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Attention probabilities, one [tq, tk] matrix per (batch, head).
    probs: Vec<Array2<F>>,
}

struct MhaShape<'a> {
    b: usize,
    tq: usize,
    tk: usize,
    heads: usize,
    head_dim: usize,
    key_len: &'a [usize],
    causal: bool,
}

/// Multi-head attention over flattened [b*t, d] activations.
fn mha_fwd<F: Scalar>(
    xq: &Array2<F>,
    xkv: &Array2<F>,
    p: &AttnParams<F>,
    sh: &MhaShape,
) -> (Array2<F>, MhaCache<F>) {
    let d = xq.ncols();
    let scale = F::from_f64(1.0 / (sh.head_dim as f64).sqrt());
    let q = xq.dot(&p.wq);
    let k = xkv.dot(&p.wk);
    let v = xkv.dot(&p.wv);
    let mut concat: Array2<F> = Array2::zeros((sh.b * sh.tq, d));
    let mut probs = Vec::with_capacity(sh.b * sh.heads);
    for bi in 0..sh.b {
        let qrows = q.slice(s![bi * sh.tq..(bi + 1) * sh.tq, ..]);
        let krows = k.slice(s![bi * sh.tk..(bi + 1) * sh.tk, ..]);
        let vrows = v.slice(s![bi * sh.tk..(bi + 1) * sh.tk, ..]);
        for h in 0..sh.heads {
            let cols = h * sh.head_dim..(h + 1) * sh.head_dim;
            let qh = qrows.slice(s![.., cols.clone()]);
            let kh = krows.slice(s![.., cols.clone()]);
            let vh = vrows.slice(s![.., cols.clone()]);
            let mut scores = qh.dot(&kh.t()) * scale;
            for i in 0..sh.tq {
                for j in 0..sh.tk {
                    let masked = j >= sh.key_len[bi] || (sh.causal && j > i);
                    if masked {
                        scores[[i, j]] = F::from_f64(NEG_INF);
                    }
                }
            }
            softmax_rows_inplace(&mut scores);
            let oh = scores.dot(&vh);
            concat
                .slice_mut(s![bi * sh.tq..(bi + 1) * sh.tq, cols])
                .assign(&oh);
            probs.push(scores);
        }
    }
    let out = concat.dot(&p.wo);
    (
        out,
        MhaCache { xq_normed: xq.clone(), xkv_normed: xkv.clone(), q, k, v, probs },
    )
}

fn softmax_bwd_rows<F: Scalar>(p: &Array2<F>, dp: &Array2<F>) -> Array2<F> {
    let mut ds = Array2::zeros(p.raw_dim());
    for i in 0..p.nrows() {
        let mut dot = 0.0;
        for j in 0..p.ncols() {
            dot += p[[i, j]].as_f64() * dp[[i, j]].as_f64();
        }
        for j in 0..p.ncols() {
            let pv = p[[i, j]].as_f64();
            ds[[i, j]] = F::from_f64(pv * (dp[[i, j]].as_f64() - dot));
        }
    }
    ds
}

/// Returns (d_xq, d_xkv, gradient of the projection weights).
fn mha_bwd<F: Scalar>(
    cache: &MhaCache<F>,
    p: &AttnParams<F>,
    sh: &MhaShape,
    d_out: &Array2<F>,
) -> (Array2<F>, Array2<F>, AttnParams<F>) {
    let d = cache.xq_normed.ncols();
    let scale = F::from_f64(1.0 / (sh.head_dim as f64).sqrt());
    // out = concat . wo
    let mut concat: Array2<F> = Array2::zeros((sh.b * sh.tq, d));
    for bi in 0..sh.b {
        for h in 0..sh.heads {
            let cols = h * sh.head_dim..(h + 1) * sh.head_dim;
            let probsm = &cache.probs[bi * sh.heads + h];
            let vh = cache
                .v
                .slice(s![bi * sh.tk..(bi + 1) * sh.tk, cols.clone()]);
            concat
                .slice_mut(s![bi * sh.tq..(bi + 1) * sh.tq, cols])
                .assign(&probsm.dot(&vh));
        }
    }
    let d_wo = concat.t().dot(d_out);
    let d_concat = d_out.dot(&p.wo.t());
    let mut dq: Array2<F> = Array2::zeros(cache.q.raw_dim());
    let mut dk: Array2<F> = Array2::zeros(cache.k.raw_dim());
    let mut dv: Array2<F> = Array2::zeros(cache.v.raw_dim());
    for bi in 0..sh.b {
        for h in 0..sh.heads {
            let cols = h * sh.head_dim..(h + 1) * sh.head_dim;
            let probsm = &cache.probs[bi * sh.heads + h];
            let d_oh = d_concat.slice(s![bi * sh.tq..(bi + 1) * sh.tq, cols.clone()]);
            let qh = cache.q.slice(s![bi * sh.tq..(bi + 1) * sh.tq, cols.clone()]);
            let kh = cache.k.slice(s![bi * sh.tk..(bi + 1) * sh.tk, cols.clone()]);
            let vh = cache.v.slice(s![bi * sh.tk..(bi + 1) * sh.tk, cols.clone()]);
            let d_p = d_oh.dot(&vh.t());
            let d_vh = probsm.t().dot(&d_oh);
            let d_s = softmax_bwd_rows(probsm, &d_p) * scale;
            let d_qh = d_s.dot(&kh);
            let d_kh = d_s.t().dot(&qh);
            dq.slice_mut(s![bi * sh.tq..(bi + 1) * sh.tq, cols.clone()])
                .assign(&d_qh);
            dk.slice_mut(s![bi * sh.tk..(bi + 1) * sh.tk, cols.clone()])
                .assign(&d_kh);
            dv.slice_mut(s![bi * sh.tk..(bi + 1) * sh.tk, cols])
                .assign(&d_vh);
        }
    }
    let d_wq = cache.xq_normed.t().dot(&dq);
    let d_wk = cache.xkv_normed.t().dot(&dk);
    let d_wv = cache.xkv_normed.t().dot(&dv);
    let d_xq = dq.dot(&p.wq.t());
    let d_xkv = dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());
    (d_xq, d_xkv, AttnParams { wq: d_wq, wk: d_wk, wv: d_wv, wo: d_wo })
}

struct MlpCache<F> {
    x: Array2<F>,
    h: Array2<F>,
}

fn mlp_fwd<F: Scalar>(x: &Array2<F>, p: &MlpParams<F>) -> (Array2<F>, MlpCache<F>) {
    let mut h = x.dot(&p.w1);
    h.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
    let out = h.dot(&p.w2);
    (out, MlpCache { x: x.clone(), h })
}

fn mlp_bwd<F: Scalar>(
    cache: &MlpCache<F>,
    p: &MlpParams<F>,
    d_out: &Array2<F>,
) -> (Array2<F>, MlpParams<F>) {
    let d_w2 = cache.h.t().dot(d_out);
    let mut d_h = d_out.dot(&p.w2.t());
    d_h.zip_mut_with(&cache.h, |dv, &hv| {
        if hv <= F::zero() {
            *dv = F::zero();
        }
    });
    let d_w1 = cache.x.t().dot(&d_h);
    let d_x = d_h.dot(&p.w1.t());
    (d_x, MlpParams { w1: d_w1, w2: d_w2 })
}

// ---------------------------------------------------------------------------
// full model

#[derive(Debug, Clone)]
pub struct Model<F> {
    pub config: TransformerConfig,
    pub vocab_size: usize,
    pub params: Params<F>,
}

struct EncLayerCache<F> {
    rms1: RmsCache<F>,
    attn: MhaCache<F>,
    rms2: RmsCache<F>,
    mlp: MlpCache<F>,
    drop_attn: Option<Array2<F>>,
    drop_mlp: Option<Array2<F>>,
}

struct DecLayerCache<F> {
    rms1: RmsCache<F>,
    self_attn: MhaCache<F>,
    rms2: RmsCache<F>,
    cross_attn: MhaCache<F>,
    rms3: RmsCache<F>,
    mlp: MlpCache<F>,
    drop_self: Option<Array2<F>>,
    drop_cross: Option<Array2<F>>,
    drop_mlp: Option<Array2<F>>,
}

struct ForwardCache<F> {
    enc_layers: Vec<EncLayerCache<F>>,
    enc_pre_final: RmsCache<F>,
    enc_out: Array2<F>,
    dec_layers: Vec<DecLayerCache<F>>,
    dec_pre_final: RmsCache<F>,
    dec_final: Array2<F>,
    logits: Array2<F>,
}

fn gather_embed<F: Scalar>(
    embed: &Array2<F>,
    pos: &Array2<F>,
    ids: &Array2<usize>,
) -> Array2<F> {
    let (b, t) = ids.dim();
    let d = embed.ncols();
    let mut x = Array2::zeros((b * t, d));
    for bi in 0..b {
        for ti in 0..t {
            let row = ids[[bi, ti]];
            for di in 0..d {
                x[[bi * t + ti, di]] = embed[[row, di]] + pos[[ti, di]];
            }
        }
    }
    x
}

impl<F: Scalar> Model<F> {
    pub fn new(config: TransformerConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size < 3 {
            return Err(Error::InvalidConfig("vocab too small".into()));
        }
        let mut rng = derive_rng(seed, &[0x1_0de1]);
        let params = Params::init(&config, vocab_size, &mut rng);
        Ok(Self { config, vocab_size, params })
    }

    fn dropout_mask(
        &self,
        shape: (usize, usize),
        rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> Option<Array2<F>> {
        use rand::Rng;
        let rate = self.config.dropout;
        let rng = rng?;
        if rate == 0.0 {
            return None;
        }
        let keep = 1.0 - rate;
        Some(Array2::from_shape_fn(shape, |_| {
            if rng.gen_bool(keep) {
                F::from_f64(1.0 / keep)
            } else {
                F::zero()
            }
        }))
    }

    fn encoder_fwd(
        &self,
        batch: &Batch,
        mut rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> (Array2<F>, Vec<EncLayerCache<F>>, RmsCache<F>, Array2<F>) {
        let (b, tp) = batch.prompt_ids.dim();
        let x0 = gather_embed(&self.params.embed, &self.params.pos_enc, &batch.prompt_ids);
        let sh = MhaShape {
            b,
            tq: tp,
            tk: tp,
            heads: self.config.heads,
            head_dim: self.config.head_dim,
            key_len: &batch.prompt_len,
            causal: false,
        };
        let mut x = x0.clone();
        let mut caches = vec![];
        for layer in &self.params.enc {
            let (n1, rms1) = rmsnorm_fwd(&x, &layer.ln1);
            let (mut a, attn) = mha_fwd(&n1, &n1, &layer.attn, &sh);
            let drop_attn = self.dropout_mask(a.dim(), rng.as_deref_mut());
            if let Some(m) = &drop_attn {
                a = a * m;
            }
            let x2 = &x + &a;
            let (n2, rms2) = rmsnorm_fwd(&x2, &layer.ln2);
            let (mut m_out, mlp) = mlp_fwd(&n2, &layer.mlp);
            let drop_mlp = self.dropout_mask(m_out.dim(), rng.as_deref_mut());
            if let Some(m) = &drop_mlp {
                m_out = m_out * m;
            }
            let x3 = &x2 + &m_out;
            caches.push(EncLayerCache { rms1, attn, rms2, mlp, drop_attn, drop_mlp });
            x = x3;
        }
        let (enc_out, pre_final) = rmsnorm_fwd(&x, &self.params.enc_final_ln);
        (enc_out, caches, pre_final, x0)
    }

    fn decoder_fwd(
        &self,
        dec_in: &Array2<usize>,
        enc_out: &Array2<F>,
        enc_b: usize,
        enc_tp: usize,
        enc_len: &[usize],
        mut rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> (Array2<F>, Vec<DecLayerCache<F>>, RmsCache<F>, Array2<F>) {
        let (b, tt) = dec_in.dim();
        debug_assert_eq!(b, enc_b);
        let x0 = gather_embed(&self.params.embed, &self.params.pos_dec, dec_in);
        let full_len = vec![usize::MAX; b];
        let self_sh = MhaShape {
            b,
            tq: tt,
            tk: tt,
            heads: self.config.heads,
            head_dim: self.config.head_dim,
            key_len: &full_len,
            causal: true,
        };
        let cross_sh = MhaShape {
            b,
            tq: tt,
            tk: enc_tp,
            heads: self.config.heads,
            head_dim: self.config.head_dim,
            key_len: enc_len,
            causal: false,
        };
        let mut x = x0.clone();
        let mut caches = vec![];
        for layer in &self.params.dec {
            let (n1, rms1) = rmsnorm_fwd(&x, &layer.ln1);
            let (mut a, self_attn) = mha_fwd(&n1, &n1, &layer.self_attn, &self_sh);
            let drop_self = self.dropout_mask(a.dim(), rng.as_deref_mut());
            if let Some(m) = &drop_self {
                a = a * m;
            }
            let x2 = &x + &a;
            let (n2, rms2) = rmsnorm_fwd(&x2, &layer.ln2);
            let (mut c, cross_attn) = mha_fwd(&n2, enc_out, &layer.cross_attn, &cross_sh);
            let drop_cross = self.dropout_mask(c.dim(), rng.as_deref_mut());
            if let Some(m) = &drop_cross {
                c = c * m;
            }
            let x3 = &x2 + &c;
            let (n3, rms3) = rmsnorm_fwd(&x3, &layer.ln3);
            let (mut m_out, mlp) = mlp_fwd(&n3, &layer.mlp);
            let drop_mlp = self.dropout_mask(m_out.dim(), rng.as_deref_mut());
            if let Some(m) = &drop_mlp {
                m_out = m_out * m;
            }
            let x4 = &x3 + &m_out;
            caches.push(DecLayerCache {
                rms1,
                self_attn,
                rms2,
                cross_attn,
                rms3,
                mlp,
                drop_self,
                drop_cross,
                drop_mlp,
            });
            x = x4;
        }
        let (dec_final, pre_final) = rmsnorm_fwd(&x, &self.params.dec_final_ln);
        (dec_final, caches, pre_final, x0)
    }

    fn forward(
        &self,
        batch: &Batch,
        mut rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> ForwardCache<F> {
        let (b, tp) = batch.prompt_ids.dim();
        let (enc_out, enc_layers, enc_pre_final, _) =
            self.encoder_fwd(batch, rng.as_deref_mut());
        let (dec_final, dec_layers, dec_pre_final, _) = self.decoder_fwd(
            &batch.dec_in,
            &enc_out,
            b,
            tp,
            &batch.prompt_len,
            rng,
        );
        let logits = dec_final.dot(&self.params.out);
        ForwardCache {
            enc_layers,
            enc_pre_final,
            enc_out,
            dec_layers,
            dec_pre_final,
            dec_final,
            logits,
        }
    }

    /// Mean cross-entropy over unmasked target positions only.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let cache = self.forward(batch, None);
        Ok(ce_loss(&cache.logits, batch)?.0)
    }

    /// Loss plus full analytic gradient. `rng` drives dropout; pass `None`
    /// for deterministic evaluation-style gradients.
    pub fn loss_and_grad(
        &self,
        batch: &Batch,
        rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> Result<(f64, Params<F>)> {
        let cache = self.forward(batch, rng);
        let (loss, d_logits) = ce_loss(&cache.logits, batch)?;
        let mut grads = self.params.zeros_like();
        let (b, tp) = batch.prompt_ids.dim();
        let tt = batch.dec_in.ncols();

        // Output head.
        grads.out = cache.dec_final.t().dot(&d_logits);
        let d_dec_final = d_logits.dot(&self.params.out.t());

        // Decoder stack.
        let (mut dx, d_ln) =
            rmsnorm_bwd(&cache.dec_pre_final, &self.params.dec_final_ln, &d_dec_final);
        grads.dec_final_ln = d_ln;
        let full_len = vec![usize::MAX; b];
        let self_sh = MhaShape {
            b,
            tq: tt,
            tk: tt,
            heads: self.config.heads,
            head_dim: self.config.head_dim,
            key_len: &full_len,
            causal: true,
        };
        let cross_sh = MhaShape {
            b,
            tq: tt,
            tk: tp,
            heads: self.config.heads,
            head_dim: self.config.head_dim,
            key_len: &batch.prompt_len,
            causal: false,
        };
        let mut d_enc_out: Array2<F> = Array2::zeros(cache.enc_out.raw_dim());
        for (li, layer) in self.params.dec.iter().enumerate().rev() {
            let lc = &cache.dec_layers[li];
            let g = &mut grads.dec[li];
            // x4 = x3 + drop(mlp(rms3(x3)))
            let mut d_m = dx.clone();
            if let Some(m) = &lc.drop_mlp {
                d_m = d_m * m;
            }
            let (d_n3, d_mlp) = mlp_bwd(&lc.mlp, &layer.mlp, &d_m);
            g.mlp = d_mlp;
            let (d_x3a, d_ln3) = rmsnorm_bwd(&lc.rms3, &layer.ln3, &d_n3);
            g.ln3 = d_ln3;
            let d_x3 = dx + d_x3a;
            // x3 = x2 + drop(cross(rms2(x2), enc_out))
            let mut d_c = d_x3.clone();
            if let Some(m) = &lc.drop_cross {
                d_c = d_c * m;
            }
            let (d_n2, d_enc_part, d_cross) =
                mha_bwd(&lc.cross_attn, &layer.cross_attn, &cross_sh, &d_c);
            g.cross_attn = d_cross;
            d_enc_out = d_enc_out + d_enc_part;
            let (d_x2a, d_ln2) = rmsnorm_bwd(&lc.rms2, &layer.ln2, &d_n2);
            g.ln2 = d_ln2;
            let d_x2 = d_x3 + d_x2a;
            // x2 = x + drop(self(rms1(x)))
            let mut d_a = d_x2.clone();
            if let Some(m) = &lc.drop_self {
                d_a = d_a * m;
            }
            let (d_n1q, d_n1kv, d_self) =
                mha_bwd(&lc.self_attn, &layer.self_attn, &self_sh, &d_a);
            g.self_attn = d_self;
            let (d_xa, d_ln1) = rmsnorm_bwd(&lc.rms1, &layer.ln1, &(d_n1q + d_n1kv));
            g.ln1 = d_ln1;
            dx = d_x2 + d_xa;
        }
        // Decoder embeddings.
        scatter_embed_grads(
            &mut grads.embed,
            &mut grads.pos_dec,
            &batch.dec_in,
            &dx,
        );

        // Encoder stack, seeded by the accumulated cross-attention grads.
        let (mut dx, d_ln) =
            rmsnorm_bwd(&cache.enc_pre_final, &self.params.enc_final_ln, &d_enc_out);
        grads.enc_final_ln = d_ln;
        let enc_sh = MhaShape {
            b,
            tq: tp,
            tk: tp,
            heads: self.config.heads,
            head_dim: self.config.head_dim,
            key_len: &batch.prompt_len,
            causal: false,
        };
        for (li, layer) in self.params.enc.iter().enumerate().rev() {
            let lc = &cache.enc_layers[li];
            let g = &mut grads.enc[li];
            let mut d_m = dx.clone();
            if let Some(m) = &lc.drop_mlp {
                d_m = d_m * m;
            }
            let (d_n2, d_mlp) = mlp_bwd(&lc.mlp, &layer.mlp, &d_m);
            g.mlp = d_mlp;
            let (d_x2a, d_ln2) = rmsnorm_bwd(&lc.rms2, &layer.ln2, &d_n2);
            g.ln2 = d_ln2;
            let d_x2 = dx + d_x2a;
            let mut d_a = d_x2.clone();
            if let Some(m) = &lc.drop_attn {
                d_a = d_a * m;
            }
            let (d_n1q, d_n1kv, d_attn) = mha_bwd(&lc.attn, &layer.attn, &enc_sh, &d_a);
            g.attn = d_attn;
            let (d_xa, d_ln1) = rmsnorm_bwd(&lc.rms1, &layer.ln1, &(d_n1q + d_n1kv));
            g.ln1 = d_ln1;
            dx = d_x2 + d_xa;
        }
        scatter_embed_grads(
            &mut grads.embed,
            &mut grads.pos_enc,
            &batch.prompt_ids,
            &dx,
        );
        Ok((loss, grads))
    }

    /// Encoder output for a single prompt, [tp, embed]. Inference path.
    pub fn encode_prompt(&self, prompt: &[u32]) -> Array2<F> {
        let n = prompt.len().min(self.config.max_prompt_len).max(1);
        let mut ids = Array2::zeros((1, n));
        for (j, &id) in prompt.iter().take(n).enumerate() {
            ids[[0, j]] = id as usize;
        }
        let batch = Batch {
            prompt_ids: ids,
            prompt_len: vec![n],
            dec_in: Array2::zeros((1, 1)),
            targets: Array2::zeros((1, 1)),
            target_mask: Array2::zeros((1, 1)),
        };
        let (enc_out, _, _, _) = self.encoder_fwd(&batch, None);
        enc_out
    }

    /// Next-token logits for a batch of decoder prefixes sharing one encoded
    /// prompt. `prefixes` is [b, t] (t >= 1, position 0 is the start token).
    pub fn decode_logits(&self, enc_out: &Array2<F>, prefixes: &Array2<usize>) -> Array2<F> {
        let (b, _t) = prefixes.dim();
        let tp = enc_out.nrows();
        // Tile the single encoded prompt across the sample batch.
        let mut tiled = Array2::zeros((b * tp, enc_out.ncols()));
        for bi in 0..b {
            tiled.slice_mut(s![bi * tp..(bi + 1) * tp, ..]).assign(enc_out);
        }
        let enc_len = vec![tp; b];
        let (dec_final, _, _, _) = self.decoder_fwd(prefixes, &tiled, b, tp, &enc_len, None);
        let logits = dec_final.dot(&self.params.out);
        // Keep only each sequence's last position.
        let t = prefixes.ncols();
        let mut last = Array2::zeros((b, self.vocab_size));
        for bi in 0..b {
            last.row_mut(bi).assign(&logits.row(bi * t + t - 1));
        }
        last
    }
}

/// Softmax cross-entropy and its logit gradient, averaged over unmasked
/// target positions.
fn ce_loss<F: Scalar>(logits: &Array2<F>, batch: &Batch) -> Result<(f64, Array2<F>)> {
    let (b, tt) = batch.targets.dim();
    let v = logits.ncols();
    let n_valid: f64 = batch.target_mask.sum();
    if n_valid == 0.0 {
        return Err(Error::InvalidConfig("empty target".into()));
    }
    let mut d = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for bi in 0..b {
        for ti in 0..tt {
            let w = batch.target_mask[[bi, ti]];
            if w == 0.0 {
                continue;
            }
            let row = logits.row(bi * tt + ti);
            let max = row.iter().fold(f64::NEG_INFINITY, |a, x| a.max(x.as_f64()));
            let mut sum = 0.0;
            for x in row.iter() {
                sum += (x.as_f64() - max).exp();
            }
            let log_z = max + sum.ln();
            let t = batch.targets[[bi, ti]];
            loss += (log_z - row[t].as_f64()) * w;
            for j in 0..v {
                let p = (row[j].as_f64() - log_z).exp();
                let onehot = if j == t { 1.0 } else { 0.0 };
                d[[bi * tt + ti, j]] = F::from_f64((p - onehot) * w / n_valid);
            }
        }
    }
    Ok((loss / n_valid, d))
}

fn scatter_embed_grads<F: Scalar>(
    d_embed: &mut Array2<F>,
    d_pos: &mut Array2<F>,
    ids: &Array2<usize>,
    dx: &Array2<F>,
) {
    let (b, t) = ids.dim();
    let d = d_embed.ncols();
    for bi in 0..b {
        for ti in 0..t {
            let row = ids[[bi, ti]];
            for di in 0..d {
                let g = dx[[bi * t + ti, di]];
                d_embed[[row, di]] = d_embed[[row, di]] + g;
                d_pos[[ti, di]] = d_pos[[ti, di]] + g;
            }
        }
    }
}

/// Mean cross-entropy of one (prompt, target) pair — the Prefix-LM loss.
pub fn prefix_lm_loss<F: Scalar>(
    model: &Model<F>,
    prompt_tokens: &[u32],
    target_tokens: &[u32],
) -> Result<f64> {
    let batch = Batch::new(
        &[prompt_tokens.to_vec()],
        &[target_tokens.to_vec()],
        &model.config,
        0,
    )?;
    model.loss(&batch)
}
