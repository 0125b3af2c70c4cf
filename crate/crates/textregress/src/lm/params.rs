use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::lm::transformer::TransformerConfig;

/// Floating-point element type of the tensor core.
pub trait Scalar:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams<F> {
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
    pub wo: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<F> {
    pub w1: Array2<F>,
    pub w2: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncLayerParams<F> {
    pub ln1: Array1<F>,
    pub attn: AttnParams<F>,
    pub ln2: Array1<F>,
    pub mlp: MlpParams<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecLayerParams<F> {
    pub ln1: Array1<F>,
    pub self_attn: AttnParams<F>,
    pub ln2: Array1<F>,
    pub cross_attn: AttnParams<F>,
    pub ln3: Array1<F>,
    pub mlp: MlpParams<F>,
}

/// All learnable tensors. Layout is fixed so the flat-tensor walk used by
/// the optimizer, the checkpoints and the gradient checks always agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    /// Token embeddings, [vocab, embed].
    pub embed: Array2<F>,
    /// Learned encoder positions, [max_prompt_len, embed].
    pub pos_enc: Array2<F>,
    /// Learned decoder positions, [max_target_len, embed].
    pub pos_dec: Array2<F>,
    pub enc: Vec<EncLayerParams<F>>,
    pub enc_final_ln: Array1<F>,
    pub dec: Vec<DecLayerParams<F>>,
    pub dec_final_ln: Array1<F>,
    /// Output head, [embed, vocab].
    pub out: Array2<F>,
}

/// One named flat view; shapes travel alongside for serialization.
pub struct TensorMut<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [F],
}

pub struct TensorRef<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

fn xavier<F: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<F> {
    let std = (2.0 / (rows + cols) as f64).sqrt();
    let dist = Normal::new(0.0, std).unwrap();
    Array2::from_shape_fn((rows, cols), |_| F::from_f64(dist.sample(rng)))
}

fn attn_init<F: Scalar, R: Rng>(rng: &mut R, d: usize) -> AttnParams<F> {
    AttnParams {
        wq: xavier(rng, d, d),
        wk: xavier(rng, d, d),
        wv: xavier(rng, d, d),
        wo: xavier(rng, d, d),
    }
}

impl<F: Scalar> Params<F> {
    pub fn init<R: Rng>(config: &TransformerConfig, vocab_size: usize, rng: &mut R) -> Self {
        let d = config.embed_dim;
        let emb_dist = Normal::new(0.0, 0.02).unwrap();
        let mut emb = |rows: usize| {
            Array2::from_shape_fn((rows, d), |_| F::from_f64(emb_dist.sample(rng)))
        };
        let embed = emb(vocab_size);
        let pos_enc = emb(config.max_prompt_len);
        let pos_dec = emb(config.max_target_len);
        let enc = (0..config.enc_layers)
            .map(|_| EncLayerParams {
                ln1: Array1::ones(d),
                attn: attn_init(rng, d),
                ln2: Array1::ones(d),
                mlp: MlpParams { w1: xavier(rng, d, config.mlp_dim), w2: xavier(rng, config.mlp_dim, d) },
            })
            .collect();
        let dec = (0..config.dec_layers)
            .map(|_| DecLayerParams {
                ln1: Array1::ones(d),
                self_attn: attn_init(rng, d),
                ln2: Array1::ones(d),
                cross_attn: attn_init(rng, d),
                ln3: Array1::ones(d),
                mlp: MlpParams { w1: xavier(rng, d, config.mlp_dim), w2: xavier(rng, config.mlp_dim, d) },
            })
            .collect();
        Self {
            embed,
            pos_enc,
            pos_dec,
            enc,
            enc_final_ln: Array1::ones(d),
            dec,
            dec_final_ln: Array1::ones(d),
            out: xavier(rng, d, vocab_size),
        }
    }

    /// Same structure, all zeros — gradient and moment buffers.
    pub fn zeros_like(&self) -> Self {
        let z1 = |a: &Array1<F>| Array1::zeros(a.raw_dim());
        let z2 = |a: &Array2<F>| Array2::zeros(a.raw_dim());
        let za = |a: &AttnParams<F>| AttnParams {
            wq: z2(&a.wq),
            wk: z2(&a.wk),
            wv: z2(&a.wv),
            wo: z2(&a.wo),
        };
        let zm = |m: &MlpParams<F>| MlpParams { w1: z2(&m.w1), w2: z2(&m.w2) };
        Self {
            embed: z2(&self.embed),
            pos_enc: z2(&self.pos_enc),
            pos_dec: z2(&self.pos_dec),
            enc: self
                .enc
                .iter()
                .map(|l| EncLayerParams {
                    ln1: z1(&l.ln1),
                    attn: za(&l.attn),
                    ln2: z1(&l.ln2),
                    mlp: zm(&l.mlp),
                })
                .collect(),
            enc_final_ln: z1(&self.enc_final_ln),
            dec: self
                .dec
                .iter()
                .map(|l| DecLayerParams {
                    ln1: z1(&l.ln1),
                    self_attn: za(&l.self_attn),
                    ln2: z1(&l.ln2),
                    cross_attn: za(&l.cross_attn),
                    ln3: z1(&l.ln3),
                    mlp: zm(&l.mlp),
                })
                .collect(),
            dec_final_ln: z1(&self.dec_final_ln),
            out: z2(&self.out),
        }
    }

    /// Named flat mutable views over every tensor, in a fixed order.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, F>> {
        let mut out: Vec<TensorMut<'_, F>> = vec![];
        fn push2<'a, F>(out: &mut Vec<TensorMut<'a, F>>, name: String, a: &'a mut Array2<F>) {
            let shape = a.shape().to_vec();
            out.push(TensorMut { name, shape, data: a.as_slice_mut().unwrap() });
        }
        fn push1<'a, F>(out: &mut Vec<TensorMut<'a, F>>, name: String, a: &'a mut Array1<F>) {
            let shape = a.shape().to_vec();
            out.push(TensorMut { name, shape, data: a.as_slice_mut().unwrap() });
        }
        fn push_attn<'a, F>(out: &mut Vec<TensorMut<'a, F>>, prefix: &str, a: &'a mut AttnParams<F>) {
            push2(out, format!("{prefix}.wq"), &mut a.wq);
            push2(out, format!("{prefix}.wk"), &mut a.wk);
            push2(out, format!("{prefix}.wv"), &mut a.wv);
            push2(out, format!("{prefix}.wo"), &mut a.wo);
        }
        push2(&mut out, "embed".into(), &mut self.embed);
        push2(&mut out, "pos_enc".into(), &mut self.pos_enc);
        push2(&mut out, "pos_dec".into(), &mut self.pos_dec);
        for (i, l) in self.enc.iter_mut().enumerate() {
            push1(&mut out, format!("enc.{i}.ln1"), &mut l.ln1);
            push_attn(&mut out, &format!("enc.{i}.attn"), &mut l.attn);
            push1(&mut out, format!("enc.{i}.ln2"), &mut l.ln2);
            push2(&mut out, format!("enc.{i}.mlp.w1"), &mut l.mlp.w1);
            push2(&mut out, format!("enc.{i}.mlp.w2"), &mut l.mlp.w2);
        }
        push1(&mut out, "enc_final_ln".into(), &mut self.enc_final_ln);
        for (i, l) in self.dec.iter_mut().enumerate() {
            push1(&mut out, format!("dec.{i}.ln1"), &mut l.ln1);
            push_attn(&mut out, &format!("dec.{i}.self_attn"), &mut l.self_attn);
            push1(&mut out, format!("dec.{i}.ln2"), &mut l.ln2);
            push_attn(&mut out, &format!("dec.{i}.cross_attn"), &mut l.cross_attn);
            push1(&mut out, format!("dec.{i}.ln3"), &mut l.ln3);
            push2(&mut out, format!("dec.{i}.mlp.w1"), &mut l.mlp.w1);
            push2(&mut out, format!("dec.{i}.mlp.w2"), &mut l.mlp.w2);
        }
        push1(&mut out, "dec_final_ln".into(), &mut self.dec_final_ln);
        push2(&mut out, "out".into(), &mut self.out);
        out
    }

    /// Read-only companion of [`tensors_mut`]; identical naming and order.
    pub fn tensors(&self) -> Vec<TensorRef<'_, F>> {
        // Cloning self to reuse the mutable walk would defeat the purpose;
        // instead walk a mutable alias obtained safely via interior
        // indirection: we simply duplicate the traversal.
        let mut out: Vec<TensorRef<'_, F>> = vec![];
        fn push2<'a, F>(out: &mut Vec<TensorRef<'a, F>>, name: String, a: &'a Array2<F>) {
            out.push(TensorRef { name, shape: a.shape().to_vec(), data: a.as_slice().unwrap() });
        }
        fn push1<'a, F>(out: &mut Vec<TensorRef<'a, F>>, name: String, a: &'a Array1<F>) {
            out.push(TensorRef { name, shape: a.shape().to_vec(), data: a.as_slice().unwrap() });
        }
        fn push_attn<'a, F>(out: &mut Vec<TensorRef<'a, F>>, prefix: &str, a: &'a AttnParams<F>) {
            push2(out, format!("{prefix}.wq"), &a.wq);
            push2(out, format!("{prefix}.wk"), &a.wk);
            push2(out, format!("{prefix}.wv"), &a.wv);
            push2(out, format!("{prefix}.wo"), &a.wo);
        }
        push2(&mut out, "embed".into(), &self.embed);
        push2(&mut out, "pos_enc".into(), &self.pos_enc);
        push2(&mut out, "pos_dec".into(), &self.pos_dec);
        for (i, l) in self.enc.iter().enumerate() {
            push1(&mut out, format!("enc.{i}.ln1"), &l.ln1);
            push_attn(&mut out, &format!("enc.{i}.attn"), &l.attn);
            push1(&mut out, format!("enc.{i}.ln2"), &l.ln2);
            push2(&mut out, format!("enc.{i}.mlp.w1"), &l.mlp.w1);
            push2(&mut out, format!("enc.{i}.mlp.w2"), &l.mlp.w2);
        }
        push1(&mut out, "enc_final_ln".into(), &self.enc_final_ln);
        for (i, l) in self.dec.iter().enumerate() {
            push1(&mut out, format!("dec.{i}.ln1"), &l.ln1);
            push_attn(&mut out, &format!("dec.{i}.self_attn"), &l.self_attn);
            push1(&mut out, format!("dec.{i}.ln2"), &l.ln2);
            push_attn(&mut out, &format!("dec.{i}.cross_attn"), &l.cross_attn);
            push1(&mut out, format!("dec.{i}.ln3"), &l.ln3);
            push2(&mut out, format!("dec.{i}.mlp.w1"), &l.mlp.w1);
            push2(&mut out, format!("dec.{i}.mlp.w2"), &l.mlp.w2);
        }
        push1(&mut out, "dec_final_ln".into(), &self.dec_final_ln);
        push2(&mut out, "out".into(), &self.out);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}
