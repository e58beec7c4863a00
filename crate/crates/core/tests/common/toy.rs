//! Small models and batches.

use msnmt::numerics::{Scalar, Tensor};
use msnmt::seqmodel::{Batch, Example, Mode, Model, ModelConfig, ModelParams};
use msnmt::textproc::EOS_ID;
use msnmt::Result;
use rand::Rng;

use super::grad::Objective;

/// Dropout and L2 off; dimensions as given.
pub fn toy_config(sources: Vec<usize>, target: usize, embedding: usize, hidden: usize, seed: u64) -> ModelConfig {
    let mut c = ModelConfig::new(sources, target);
    c.embedding_dim = embedding;
    c.hidden_dim = hidden;
    c.dropout = 0.0;
    c.l2 = 0.0;
    c.init_seed = seed;
    c
}

/// Random example for `config`: source ids avoid the reserved block when the
/// vocabulary allows it, and the target ends with EOS.
pub fn random_example<R: Rng>(config: &ModelConfig, rng: &mut R, max_len: usize) -> Example {
    let pick = |rng: &mut R, v: usize| if v > 4 { rng.gen_range(4..v) } else { rng.gen_range(0..v) };
    let sources = config
        .source_vocab_sizes
        .iter()
        .map(|&v| (0..rng.gen_range(1..=max_len)).map(|_| pick(rng, v)).collect())
        .collect();
    let mut target: Vec<usize> = (0..rng.gen_range(0..max_len)).map(|_| pick(rng, config.target_vocab_size)).collect();
    target.push(EOS_ID);
    let image = config
        .image_dim
        .map(|d| (0..d).map(|_| rng.gen_range(-1.0..1.0f32)).collect());
    Example { sources, image, target }
}

/// The full training loss as a function of every model parameter.
pub struct ModelLoss {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub batch: Batch,
    pub mode: Mode,
}

impl ModelLoss {
    /// Objective over `model`'s parameters; returns it with the starting point.
    pub fn new(model: &Model<f64>, batch: Batch, mode: Mode) -> (Self, Vec<Tensor<f64>>) {
        let obj = ModelLoss {
            config: model.config().clone(),
            names: model.params().names().to_vec(),
            batch,
            mode,
        };
        (obj, model.params().tensors().to_vec())
    }
}

impl Objective for ModelLoss {
    fn eval<T: Scalar>(&self, inputs: &[Tensor<T>], grad: bool) -> Result<(f64, Vec<Tensor<T>>)> {
        let named = self.names.iter().cloned().zip(inputs.iter().cloned()).collect();
        let params = ModelParams::from_named(&self.config, named)?;
        let model = Model::from_params(self.config.clone(), params);
        if grad {
            let (stats, grads) = model.loss_and_gradients(&self.batch, self.mode)?;
            Ok((stats.loss, grads))
        } else {
            let mut g = model.graph(self.mode);
            let terms = model.sequence_loss(&mut g, &self.batch)?;
            Ok((g.value(terms.total).item().as_f64(), Vec::new()))
        }
    }
}

/// Random model with a 4-token target vocabulary, varied enough that greedy
/// and beam search disagree on a fair share of inputs.
pub fn random_toy_model(seed: u64) -> (Model<f64>, Vec<usize>) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut config = toy_config(vec![6], 4, 3, 4, seed);
    config.init_range = rng.gen_range(0.5..2.0);
    let model = Model::new(config).unwrap();
    let source = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..6)).collect();
    (model, source)
}
