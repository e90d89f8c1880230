//! Parameterized building blocks. Each layer registers its tensors in a
//! [`ParamStore`] under a dotted name prefix and replays itself onto a tape.

use rand::Rng;

use crate::{init, ParamId, ParamStore, Tape, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Registers `{name}.weight` (`in × out`, LeCun normal) and `{name}.bias`.
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), init::lecun_normal(in_dim, out_dim, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.linear(x, w, Some(b))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(1, dim, 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(1, dim)),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.layer_norm(x, g, b, LAYER_NORM_EPS)
    }
}

/// Two linear layers with a GELU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, dims: [usize; 3]) -> Self {
        Self {
            fc1: Linear::new(store, rng, &format!("{name}.fc1"), dims[0], dims[1]),
            fc2: Linear::new(store, rng, &format!("{name}.fc2"), dims[1], dims[2]),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let h = self.fc1.forward(tape, x);
        let h = tape.gelu(h);
        self.fc2.forward(tape, h)
    }
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, dim: usize, heads: usize) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            query: Linear::new(store, rng, &format!("{name}.query"), dim, dim),
            key: Linear::new(store, rng, &format!("{name}.key"), dim, dim),
            value: Linear::new(store, rng, &format!("{name}.value"), dim, dim),
            out: Linear::new(store, rng, &format!("{name}.out"), dim, dim),
            heads,
        }
    }

    /// `queries` and `context` are stacked per-sample blocks of equal size.
    pub fn forward(&self, tape: &mut Tape<'_>, queries: Var, context: Var, batch: usize) -> Var {
        let q = self.query.forward(tape, queries);
        let k = self.key.forward(tape, context);
        let v = self.value.forward(tape, context);
        let a = tape.attention(q, k, v, self.heads, batch);
        self.out.forward(tape, a)
    }
}

/// Pre-norm transformer encoder block.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

impl EncoderBlock {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, dim: usize, heads: usize, mlp_ratio: usize) -> Self {
        Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            attn: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), dim, heads),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
            mlp: Mlp::new(store, rng, &format!("{name}.mlp"), [dim, dim * mlp_ratio, dim]),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, batch: usize) -> Var {
        let h = self.norm1.forward(tape, x);
        let h = self.attn.forward(tape, h, h, batch);
        let x = tape.add(x, h);
        let h = self.norm2.forward(tape, x);
        let h = self.mlp.forward(tape, h);
        tape.add(x, h)
    }
}

/// Pre-norm transformer decoder block: self-attention over the queries,
/// cross-attention into a memory, then an MLP.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub norm_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm_cross: LayerNorm,
    pub norm_memory: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm_mlp: LayerNorm,
    pub mlp: Mlp,
}

impl DecoderBlock {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, dim: usize, heads: usize, mlp_ratio: usize) -> Self {
        Self {
            norm_self: LayerNorm::new(store, &format!("{name}.norm_self"), dim),
            self_attn: MultiHeadAttention::new(store, rng, &format!("{name}.self_attn"), dim, heads),
            norm_cross: LayerNorm::new(store, &format!("{name}.norm_cross"), dim),
            norm_memory: LayerNorm::new(store, &format!("{name}.norm_memory"), dim),
            cross_attn: MultiHeadAttention::new(store, rng, &format!("{name}.cross_attn"), dim, heads),
            norm_mlp: LayerNorm::new(store, &format!("{name}.norm_mlp"), dim),
            mlp: Mlp::new(store, rng, &format!("{name}.mlp"), [dim, dim * mlp_ratio, dim]),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, queries: Var, memory: Var, batch: usize) -> Var {
        let h = self.norm_self.forward(tape, queries);
        let h = self.self_attn.forward(tape, h, h, batch);
        let x = tape.add(queries, h);
        let h = self.norm_cross.forward(tape, x);
        let m = self.norm_memory.forward(tape, memory);
        let h = self.cross_attn.forward(tape, h, m, batch);
        let x = tape.add(x, h);
        let h = self.norm_mlp.forward(tape, x);
        let h = self.mlp.forward(tape, h);
        tape.add(x, h)
    }
}
