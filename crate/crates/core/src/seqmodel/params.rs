use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Index of a tensor inside [`ModelParams`].
pub type ParamId = usize;

/// Canonical GRU: update gate `z`, reset gate `r`, candidate `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_c: ParamId,
    pub u_c: ParamId,
    pub b_c: ParamId,
}

/// Parameters that read one input sequence. Shared encoders alias a single
/// instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderParams {
    /// Source embedding table `[vocab, embedding]`.
    pub embedding: ParamId,
    pub forward: GruParams,
    pub backward: GruParams,
    /// Attention key projection `W_H`, `[2 * hidden, hidden]`.
    pub key_proj: ParamId,
}

/// All learned tensors of the multi-encoder model.
///
/// Row-vector convention: a projection `W x` is stored as the matrix that
/// right-multiplies the row `x`.
#[derive(Clone, Debug)]
pub struct ModelParams<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    /// One entry per encoder; equal entries when weights are shared.
    pub encoders: Vec<EncoderParams>,
    /// `W_{a_i}`: context-to-logit matrices, `[2 * hidden, target_vocab]`.
    pub context_out: Vec<ParamId>,
    /// `C_i`: final-state combination matrices, `[2 * hidden, hidden]`.
    pub init_comb: Vec<ParamId>,
    /// `C_img`: image combination matrix, `[image_dim, hidden]`.
    pub init_image: Option<ParamId>,
    /// `[1, hidden]`.
    pub init_bias: ParamId,
    /// `P`: projects the decoder state into the attention space, `[hidden, hidden]`.
    pub query_proj: ParamId,
    /// `v`: attention scoring vector, `[hidden, 1]`.
    pub score: ParamId,
    /// Target embedding table `[target_vocab, embedding]`.
    pub target_embedding: ParamId,
    /// Decoder GRU over `[embedding | a_1 | ... | a_n]`.
    pub decoder: GruParams,
    /// `W_o`: `[hidden, target_vocab]`.
    pub output: ParamId,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize]) -> ParamId {
        self.names.push(name);
        self.shapes.push(shape.to_vec());
        self.names.len() - 1
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) -> GruParams {
        let mut gate = |g: &str| {
            (
                self.add(format!("{prefix}.w_{g}"), &[input, hidden]),
                self.add(format!("{prefix}.u_{g}"), &[hidden, hidden]),
                self.add(format!("{prefix}.b_{g}"), &[1, hidden]),
            )
        };
        let (w_z, u_z, b_z) = gate("z");
        let (w_r, u_r, b_r) = gate("r");
        let (w_c, u_c, b_c) = gate("c");
        GruParams {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_c,
            u_c,
            b_c,
        }
    }
}

/// Ids into the parameter arena, derived from a config alone.
struct Layout {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    encoders: Vec<EncoderParams>,
    context_out: Vec<ParamId>,
    init_comb: Vec<ParamId>,
    init_image: Option<ParamId>,
    init_bias: ParamId,
    query_proj: ParamId,
    score: ParamId,
    target_embedding: ParamId,
    decoder: GruParams,
    output: ParamId,
}

fn layout(config: &ModelConfig) -> Layout {
    let n = config.encoder_count();
    let (e, h) = (config.embedding_dim, config.hidden_dim);
    let v = config.target_vocab_size;
    let mut b = Builder {
        names: Vec::new(),
        shapes: Vec::new(),
    };

    let mut encoders = Vec::with_capacity(n);
    for i in 0..n {
        if config.share_encoder_weights && i > 0 {
            encoders.push(encoders[0]);
            continue;
        }
        let embedding = b.add(format!("enc{i}.embedding"), &[config.source_vocab_sizes[i], e]);
        let forward = b.gru(&format!("enc{i}.fwd"), e, h);
        let backward = b.gru(&format!("enc{i}.bwd"), e, h);
        let key_proj = b.add(format!("enc{i}.key_proj"), &[2 * h, h]);
        encoders.push(EncoderParams {
            embedding,
            forward,
            backward,
            key_proj,
        });
    }
    let context_out = (0..n)
        .map(|i| b.add(format!("enc{i}.context_out"), &[2 * h, v]))
        .collect();
    let init_comb = (0..n)
        .map(|i| b.add(format!("enc{i}.init_comb"), &[2 * h, h]))
        .collect();
    let init_image = config.image_dim.map(|d| b.add("init.image".into(), &[d, h]));
    let init_bias = b.add("init.bias".into(), &[1, h]);
    let query_proj = b.add("attn.query".into(), &[h, h]);
    let score = b.add("attn.score".into(), &[h, 1]);
    let target_embedding = b.add("dec.embedding".into(), &[v, e]);
    let decoder = b.gru("dec.gru", e + n * 2 * h, h);
    let output = b.add("dec.output".into(), &[h, v]);

    Layout {
        names: b.names,
        shapes: b.shapes,
        encoders,
        context_out,
        init_comb,
        init_image,
        init_bias,
        query_proj,
        score,
        target_embedding,
        decoder,
        output,
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Uniform initialization in `(-init_range, init_range)` from `init_seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let r = config.init_range;
        Ok(Self::from_layout(layout(config), |shape| {
            Tensor::uniform(shape, -r, r, &mut rng)
        }))
    }

    /// Assemble parameters from named tensors, checking every name and shape
    /// against the layout implied by `config`.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let lay = layout(config);
        if named.len() != lay.names.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                lay.names.len(),
                named.len()
            )));
        }
        for ((name, tensor), (want_name, want_shape)) in
            named.iter().zip(lay.names.iter().zip(&lay.shapes))
        {
            if name != want_name {
                return Err(Error::Checkpoint(format!(
                    "expected parameter {want_name}, found {name}"
                )));
            }
            if tensor.shape() != &want_shape[..] {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, config requires {want_shape:?}",
                    tensor.shape()
                )));
            }
        }
        let mut tensors = named.into_iter().map(|(_, t)| t);
        Ok(Self::from_layout(lay, |_| tensors.next().expect("count checked")))
    }

    fn from_layout(lay: Layout, mut make: impl FnMut(&[usize]) -> Tensor<T>) -> Self {
        let tensors = lay.shapes.iter().map(|s| make(s)).collect();
        ModelParams {
            names: lay.names,
            tensors,
            encoders: lay.encoders,
            context_out: lay.context_out,
            init_comb: lay.init_comb,
            init_image: lay.init_image,
            init_bias: lay.init_bias,
            query_proj: lay.query_proj,
            score: lay.score,
            target_embedding: lay.target_embedding,
            decoder: lay.decoder,
            output: lay.output,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Scalar count of the distinct encoder-side tensors (embeddings, GRUs
    /// and key projections).
    pub fn encoder_scalar_count(&self) -> usize {
        let mut ids: Vec<ParamId> = Vec::new();
        for enc in &self.encoders {
            ids.push(enc.embedding);
            ids.push(enc.key_proj);
            for gru in [enc.forward, enc.backward] {
                ids.extend([
                    gru.w_z, gru.u_z, gru.b_z, gru.w_r, gru.u_r, gru.b_r, gru.w_c, gru.u_c, gru.b_c,
                ]);
            }
        }
        ids.sort_unstable();
        ids.dedup();
        ids.iter().map(|&i| self.tensors[i].numel()).sum()
    }
}
