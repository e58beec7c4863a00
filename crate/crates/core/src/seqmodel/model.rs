use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::{EncoderParams, GruParams, ModelParams, ParamId};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, dropout_mask, l2_penalty, AdamState, Scalar, Tape, Tensor, Var};
use crate::textproc::{BOS_ID, PAD_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// No dropout.
    Inference,
    /// Dropout masks drawn from a generator seeded with `seed`.
    Training { seed: u64 },
}

/// One training pair: a token sequence per encoder, optional image
/// features, and the target ids (ending with EOS).
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub sources: Vec<Vec<usize>>,
    pub image: Option<Vec<f32>>,
    pub target: Vec<usize>,
}

/// A padded mini-batch. Rows of every stream are padded with PAD to the
/// stream maximum; the true lengths are kept alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub sources: Vec<Vec<Vec<usize>>>,
    pub source_lengths: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
    pub target_lengths: Vec<usize>,
    pub images: Option<Vec<Vec<f32>>>,
}

/// Borrowed, unpadded view of one batch row.
pub struct ExampleView<'b> {
    pub sources: Vec<&'b [usize]>,
    pub image: Option<&'b [f32]>,
    pub target: &'b [usize],
}

fn pad(rows: Vec<&[usize]>) -> (Vec<Vec<usize>>, Vec<usize>) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let lengths = rows.iter().map(|r| r.len()).collect();
    let padded = rows
        .into_iter()
        .map(|r| {
            let mut row = r.to_vec();
            row.resize(width, PAD_ID);
            row
        })
        .collect();
    (padded, lengths)
}

impl Batch {
    pub fn from_examples(examples: &[Example]) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::usage("a batch needs at least one example"))?;
        let streams = first.sources.len();
        let with_image = first.image.is_some();
        if examples
            .iter()
            .any(|e| e.sources.len() != streams || e.image.is_some() != with_image)
        {
            return Err(Error::usage("examples in a batch must share their stream layout"));
        }
        let mut sources = Vec::with_capacity(streams);
        let mut source_lengths = Vec::with_capacity(streams);
        for s in 0..streams {
            let (p, l) = pad(examples.iter().map(|e| e.sources[s].as_slice()).collect());
            sources.push(p);
            source_lengths.push(l);
        }
        let (targets, target_lengths) = pad(examples.iter().map(|e| e.target.as_slice()).collect());
        let images = with_image.then(|| {
            examples
                .iter()
                .map(|e| e.image.clone().expect("checked"))
                .collect()
        });
        Ok(Batch {
            sources,
            source_lengths,
            targets,
            target_lengths,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn example(&self, row: usize) -> ExampleView<'_> {
        ExampleView {
            sources: self
                .sources
                .iter()
                .zip(&self.source_lengths)
                .map(|(s, l)| &s[row][..l[row]])
                .collect(),
            image: self.images.as_ref().map(|im| im[row].as_slice()),
            target: &self.targets[row][..self.target_lengths[row]],
        }
    }

    /// Number of non-PAD target positions.
    pub fn target_tokens(&self) -> usize {
        self.target_lengths.iter().sum()
    }
}

/// Output of one bidirectional encoder.
#[derive(Clone, Debug)]
pub struct EncodedSequence {
    /// `H`, `[k, 2 * hidden]`: row `j` is `[forward_j | backward_j]`.
    pub states: Var,
    /// `[1, 2 * hidden]`: `[forward_k | backward_1]`.
    pub final_state: Var,
    /// `H W_H`, `[k, hidden]`, cached for attention.
    pub keys: Var,
    pub len: usize,
}

/// A tape with every model parameter bound as a leaf.
pub struct Graph<'p, T: Scalar> {
    pub tape: Tape<'p, T>,
    vars: Vec<Var>,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn param(&self, id: ParamId) -> Var {
        self.vars[id]
    }

    pub fn param_vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        self.tape.value(var)
    }

    pub fn training(&self) -> bool {
        self.dropout.is_some()
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some((rate, rng)) = &mut self.dropout else {
            return Ok(x);
        };
        let rate = *rate;
        let seed = rng.next_u64();
        let shape = self.tape.value(x).shape().to_vec();
        let mask = self.tape.leaf(dropout_mask(&shape, rate, seed)?);
        self.tape.mul(x, mask)
    }

    fn zeros(&mut self, shape: &[usize]) -> Var {
        self.tape.leaf(Tensor::zeros(shape))
    }

    /// `h' = (1 - z) * h + z * c` with
    /// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
    /// `c = tanh(x W_c + (r * h) U_c + b_c)`.
    pub fn gru_step(&mut self, p: &GruParams, x: Var, h: Var) -> Result<Var> {
        let gate = |g: &mut Self, w: ParamId, u: ParamId, b: ParamId, hh: Var| -> Result<Var> {
            let xw = g.tape.matmul(x, g.vars[w])?;
            let hu = g.tape.matmul(hh, g.vars[u])?;
            let sum = g.tape.add(xw, hu)?;
            g.tape.add(sum, g.vars[b])
        };
        let z_in = gate(self, p.w_z, p.u_z, p.b_z, h)?;
        let z = self.tape.sigmoid(z_in)?;
        let r_in = gate(self, p.w_r, p.u_r, p.b_r, h)?;
        let r = self.tape.sigmoid(r_in)?;
        let rh = self.tape.mul(r, h)?;
        let c_in = gate(self, p.w_c, p.u_c, p.b_c, rh)?;
        let c = self.tape.tanh(c_in)?;
        let delta = self.tape.sub(c, h)?;
        let step = self.tape.mul(z, delta)?;
        self.tape.add(h, step)
    }
}

/// The multi-encoder attentional encoder-decoder.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    params: ModelParams<T>,
}

/// Loss terms of one batch.
pub struct LossTerms {
    /// `nll + l2`.
    pub total: Var,
    /// Mean negative log-likelihood per target token.
    pub nll: Var,
    pub tokens: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Loss before the update, including the L2 term.
    pub loss: f64,
    /// Per-token negative log-likelihood before the update.
    pub nll: f64,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Ok(Model { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Self {
        Model { config, params }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    /// Bind every parameter to a fresh tape.
    pub fn graph(&self, mode: Mode) -> Graph<'_, T> {
        let mut tape = Tape::new();
        let vars = self.params.tensors().iter().map(|t| tape.leaf_ref(t)).collect();
        let dropout = match mode {
            Mode::Training { seed } if self.config.dropout > 0.0 => {
                Some((self.config.dropout, ChaCha8Rng::seed_from_u64(seed)))
            }
            _ => None,
        };
        Graph {
            tape,
            vars,
            dropout,
        }
    }

    fn encoder(&self, index: usize) -> Result<&EncoderParams> {
        self.params.encoders.get(index).ok_or_else(|| {
            Error::usage(format!(
                "encoder {index} requested, model has {}",
                self.config.encoder_count()
            ))
        })
    }

    /// Run encoder `index` over `tokens` in both directions.
    pub fn encode(&self, g: &mut Graph<'_, T>, tokens: &[usize], index: usize) -> Result<EncodedSequence> {
        if tokens.is_empty() {
            return Err(Error::usage("cannot encode an empty sequence"));
        }
        let enc = *self.encoder(index)?;
        let vocab = self.config.source_vocab_sizes[index];
        if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab) {
            return Err(Error::Vocabulary(format!(
                "source id {bad} outside vocabulary of {vocab} for encoder {index}"
            )));
        }
        let h = self.config.hidden_dim;
        let mut inputs = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let x = g.tape.embedding(g.vars[enc.embedding], &[t])?;
            inputs.push(g.dropout(x)?);
        }

        let mut forward = Vec::with_capacity(tokens.len());
        let mut state = g.zeros(&[1, h]);
        for &x in &inputs {
            state = g.gru_step(&enc.forward, x, state)?;
            forward.push(state);
        }
        let mut backward = vec![state; tokens.len()];
        let mut state = g.zeros(&[1, h]);
        for (j, &x) in inputs.iter().enumerate().rev() {
            state = g.gru_step(&enc.backward, x, state)?;
            backward[j] = state;
        }

        let rows = forward
            .iter()
            .zip(&backward)
            .map(|(&f, &b)| g.tape.concat(&[f, b], 1))
            .collect::<Result<Vec<_>>>()?;
        let stacked = g.tape.concat(&rows, 0)?;
        let states = g.dropout(stacked)?;
        let final_state = g.tape.concat(&[*forward.last().unwrap(), backward[0]], 1)?;
        let keys = g.tape.matmul(states, g.vars[enc.key_proj])?;
        Ok(EncodedSequence {
            states,
            final_state,
            keys,
            len: tokens.len(),
        })
    }

    /// `s0 = tanh(sum_i final_i C_i + image C_img + bias)`.
    pub fn initial_state(&self, g: &mut Graph<'_, T>, finals: &[Var], image: Option<Var>) -> Result<Var> {
        if finals.len() != self.config.encoder_count() {
            return Err(Error::usage(format!(
                "{} encoder final states given, model has {} encoders",
                finals.len(),
                self.config.encoder_count()
            )));
        }
        let mut acc = g.vars[self.params.init_bias];
        for (&f, &c) in finals.iter().zip(&self.params.init_comb) {
            let term = g.tape.matmul(f, g.vars[c])?;
            acc = g.tape.add(acc, term)?;
        }
        match (image, self.params.init_image) {
            (Some(img), Some(c)) => {
                let term = g.tape.matmul(img, g.vars[c])?;
                acc = g.tape.add(acc, term)?;
            }
            (None, None) => {}
            (Some(_), None) => return Err(Error::usage("image features given to a text-only model")),
            (None, Some(_)) => return Err(Error::usage("model expects image features")),
        }
        g.tape.tanh(acc)
    }

    /// Attention of decoder state `state` over one encoded sequence.
    /// Returns the context `a = alpha H` and the weights `alpha`, `[1, k]`.
    pub fn attend(&self, g: &mut Graph<'_, T>, state: Var, encoded: &EncodedSequence) -> Result<(Var, Var)> {
        let query = g.tape.matmul(state, g.vars[self.params.query_proj])?;
        let hidden = g.tape.add(encoded.keys, query)?;
        let act = g.tape.tanh(hidden)?;
        let scores = g.tape.matmul(act, g.vars[self.params.score])?;
        let scores = g.tape.transpose(scores)?;
        let weights = g.tape.softmax(scores)?;
        let context = g.tape.matmul(weights, encoded.states)?;
        Ok((context, weights))
    }

    /// One decoder transition. Returns the new state and unnormalized
    /// logits `s W_o + sum_i a_i W_{a_i}`.
    pub fn decoder_step(
        &self,
        g: &mut Graph<'_, T>,
        prev_state: Var,
        prev_token: usize,
        contexts: &[Var],
    ) -> Result<(Var, Var)> {
        let v = self.config.target_vocab_size;
        if prev_token >= v {
            return Err(Error::Vocabulary(format!(
                "target id {prev_token} outside vocabulary of {v}"
            )));
        }
        if contexts.len() != self.config.encoder_count() {
            return Err(Error::usage(format!(
                "{} contexts given, model has {} encoders",
                contexts.len(),
                self.config.encoder_count()
            )));
        }
        let emb = g.tape.embedding(g.vars[self.params.target_embedding], &[prev_token])?;
        let mut parts = Vec::with_capacity(1 + contexts.len());
        parts.push(emb);
        parts.extend_from_slice(contexts);
        let input = g.tape.concat(&parts, 1)?;
        let input = g.dropout(input)?;
        let state = g.gru_step(&self.params.decoder, input, prev_state)?;
        let out = g.dropout(state)?;
        let mut logits = g.tape.matmul(out, g.vars[self.params.output])?;
        for (&a, &w) in contexts.iter().zip(&self.params.context_out) {
            let term = g.tape.matmul(a, g.vars[w])?;
            logits = g.tape.add(logits, term)?;
        }
        Ok((state, logits))
    }

    /// Encode every stream of an example and compute the decoder initial state.
    pub fn start(
        &self,
        g: &mut Graph<'_, T>,
        sources: &[&[usize]],
        image: Option<&[f32]>,
    ) -> Result<(Vec<EncodedSequence>, Var)> {
        if sources.len() != self.config.encoder_count() {
            return Err(Error::usage(format!(
                "{} source streams given, model has {} encoders",
                sources.len(),
                self.config.encoder_count()
            )));
        }
        let encoded = sources
            .iter()
            .enumerate()
            .map(|(i, s)| self.encode(g, s, i))
            .collect::<Result<Vec<_>>>()?;
        let image = match image {
            Some(features) => {
                let dim = self.config.image_dim.unwrap_or(0);
                if features.len() != dim {
                    return Err(Error::Dimension {
                        kind: "initial_state",
                        detail: format!("image has {} features, model expects {dim}", features.len()),
                    });
                }
                let row = features.iter().map(|&x| T::of(x as f64)).collect();
                Some(g.tape.leaf(Tensor::row(row)))
            }
            None => None,
        };
        let finals: Vec<Var> = encoded.iter().map(|e| e.final_state).collect();
        let s0 = self.initial_state(g, &finals, image)?;
        Ok((encoded, s0))
    }

    /// Contexts for decoder state `state` over every encoder.
    pub fn contexts(&self, g: &mut Graph<'_, T>, state: Var, encoded: &[EncodedSequence]) -> Result<Vec<Var>> {
        encoded
            .iter()
            .map(|e| self.attend(g, state, e).map(|(a, _)| a))
            .collect()
    }

    /// Sum over target positions of `log p(gold)` for one example
    /// (teacher forcing).
    fn example_log_likelihood(&self, g: &mut Graph<'_, T>, example: &ExampleView<'_>) -> Result<Var> {
        if example.target.is_empty() {
            return Err(Error::usage("target sequence is empty"));
        }
        let (encoded, mut state) = self.start(g, &example.sources, example.image)?;
        let mut prev = BOS_ID;
        let mut logits = Vec::with_capacity(example.target.len());
        for &gold in example.target {
            let contexts = self.contexts(g, state, &encoded)?;
            let (next, l) = self.decoder_step(g, state, prev, &contexts)?;
            logits.push(l);
            state = next;
            prev = gold;
        }
        let stacked = g.tape.concat(&logits, 0)?;
        let logp = g.tape.log_softmax(stacked)?;
        let gold = g.tape.row_select(logp, example.target)?;
        g.tape.sum_all(gold)
    }

    /// Mean per-token negative log-likelihood over non-PAD target positions,
    /// plus the L2 penalty on every parameter.
    pub fn sequence_loss(&self, g: &mut Graph<'_, T>, batch: &Batch) -> Result<LossTerms> {
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        let mut total_ll: Option<Var> = None;
        for row in 0..batch.len() {
            let ll = self.example_log_likelihood(g, &batch.example(row))?;
            total_ll = Some(match total_ll {
                Some(acc) => g.tape.add(acc, ll)?,
                None => ll,
            });
        }
        let tokens = batch.target_tokens();
        let nll = g.tape.scale(total_ll.expect("non-empty"), T::of(-1.0 / tokens as f64))?;
        let params = g.vars.clone();
        let l2 = l2_penalty(&mut g.tape, &params, self.config.l2)?;
        let total = g.tape.add(nll, l2)?;
        Ok(LossTerms { total, nll, tokens })
    }

    /// Loss and per-parameter gradients of one batch, without updating.
    pub fn loss_and_gradients(&self, batch: &Batch, mode: Mode) -> Result<(StepStats, Vec<Tensor<T>>)> {
        let mut g = self.graph(mode);
        let terms = self.sequence_loss(&mut g, batch)?;
        let stats = StepStats {
            loss: g.value(terms.total).item().as_f64(),
            nll: g.value(terms.nll).item().as_f64(),
        };
        let mut grads = g.tape.backward(terms.total)?;
        let grads = g
            .vars
            .iter()
            .map(|&v| grads.take(v).expect("leaf gradients are always present"))
            .collect();
        Ok((stats, grads))
    }

    /// Forward, backward and one Adam update. Returns the pre-update loss.
    pub fn train_step(&mut self, batch: &Batch, adam: &mut AdamState<T>, seed: u64) -> Result<StepStats> {
        let (stats, grads) = self.loss_and_gradients(batch, Mode::Training { seed })?;
        adam_step(self.params.tensors_mut(), &grads, adam)?;
        Ok(stats)
    }
}
