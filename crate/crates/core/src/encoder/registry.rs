//! Every trainable tensor, by name. Initialisation, counting, weight decay
//! and checkpoint manifests are all driven from this one list.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::config::{ModelConfig, UNIT_BLOCKS};
use super::EncoderError;
use crate::numeric::{ParamStore, Real, Tensor};

pub const INIT_STDDEV: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Embeddings,
    Encoder,
    Pooler,
    StepEmbedding,
    Halting,
    Latent,
    MlmHead,
    NsHead,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 8] = [
        ParamGroup::Embeddings,
        ParamGroup::Encoder,
        ParamGroup::Pooler,
        ParamGroup::StepEmbedding,
        ParamGroup::Halting,
        ParamGroup::Latent,
        ParamGroup::MlmHead,
        ParamGroup::NsHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Embeddings => "embeddings",
            ParamGroup::Encoder => "encoder",
            ParamGroup::Pooler => "pooler",
            ParamGroup::StepEmbedding => "step_embedding",
            ParamGroup::Halting => "halting_unit",
            ParamGroup::Latent => "latent_bias",
            ParamGroup::MlmHead => "mlm_head",
            ParamGroup::NsHead => "ns_head",
        }
    }

    /// Whether the published parameter totals include this group. They
    /// follow the usual encoder-checkpoint convention: embeddings, encoder
    /// and pooler, without the pretraining heads.
    pub fn in_reported_total(self) -> bool {
        !matches!(self, ParamGroup::MlmHead | ParamGroup::NsHead)
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: ParamGroup,
    pub init: Init,
    /// Subject to decoupled weight decay.
    pub decay: bool,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

struct Builder(Vec<ParamSpec>);

impl Builder {
    fn push(&mut self, name: String, shape: &[usize], group: ParamGroup, init: Init, decay: bool) {
        self.0.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            group,
            init,
            decay,
        });
    }

    fn weight(&mut self, name: String, shape: &[usize], group: ParamGroup) {
        self.push(name, shape, group, Init::Normal, true);
    }

    fn bias(&mut self, name: String, width: usize, group: ParamGroup) {
        self.push(name, &[width], group, Init::Zeros, false);
    }

    fn norm(&mut self, prefix: &str, width: usize, group: ParamGroup) {
        self.push(format!("{prefix}.gain"), &[width], group, Init::Ones, false);
        self.push(format!("{prefix}.shift"), &[width], group, Init::Zeros, false);
    }

    fn dense(&mut self, prefix: &str, rows: usize, cols: usize, group: ParamGroup) {
        self.weight(format!("{prefix}.weight"), &[rows, cols], group);
        self.bias(format!("{prefix}.bias"), cols, group);
    }

    fn block(&mut self, prefix: &str, c: &ModelConfig) {
        let (h, g) = (c.hidden, ParamGroup::Encoder);
        self.dense(&format!("{prefix}.attn.query"), h, h, g);
        // No key bias: softmax is shift invariant, so its gradient is zero.
        self.weight(format!("{prefix}.attn.key.weight"), &[h, h], g);
        self.dense(&format!("{prefix}.attn.value"), h, h, g);
        self.dense(&format!("{prefix}.attn.output"), h, h, g);
        self.norm(&format!("{prefix}.attn.norm"), h, g);
        self.dense(&format!("{prefix}.ffn.inner"), h, c.ffn, g);
        self.dense(&format!("{prefix}.ffn.outer"), c.ffn, h, g);
        self.norm(&format!("{prefix}.ffn.norm"), h, g);
    }
}

pub fn base_block_prefix(i: usize) -> String {
    format!("encoder.layer{i}")
}

pub fn unit_block_prefix(i: usize) -> String {
    format!("recurrent.layer{i}")
}

/// The full parameter list for a configuration, in a fixed order.
pub fn parameter_specs(c: &ModelConfig) -> Vec<ParamSpec> {
    let h = c.hidden;
    let mut b = Builder(Vec::new());
    let e = ParamGroup::Embeddings;
    b.weight("embeddings.word".into(), &[c.vocab, h], e);
    b.weight("embeddings.position".into(), &[c.max_positions, h], e);
    b.weight("embeddings.segment".into(), &[2, h], e);
    b.norm("embeddings.norm", h, e);

    if c.variant.is_universal() {
        for i in 0..UNIT_BLOCKS {
            b.block(&unit_block_prefix(i), c);
        }
        b.weight(
            "recurrent.step_embedding".into(),
            &[c.act_max_steps, h],
            ParamGroup::StepEmbedding,
        );
        b.weight("recurrent.halting.weight".into(), &[h], ParamGroup::Halting);
        b.push(
            "recurrent.halting.bias".into(),
            &[1],
            ParamGroup::Halting,
            Init::Constant(c.act_bias_init),
            false,
        );
    } else {
        for i in 0..c.layers_base {
            b.block(&base_block_prefix(i), c);
        }
    }

    b.dense("pooler", h, h, ParamGroup::Pooler);

    let l = c.latent();
    if l > 0 {
        b.push(
            "latent.bias_matrix".into(),
            &[l, c.vocab],
            ParamGroup::Latent,
            Init::Normal,
            false,
        );
    }

    b.dense("mlm.transform", h, h, ParamGroup::MlmHead);
    b.norm("mlm.norm", h, ParamGroup::MlmHead);
    b.bias("mlm.output_bias".into(), c.vocab, ParamGroup::MlmHead);

    b.dense("ns.classifier", h, 2, ParamGroup::NsHead);
    if l > 0 {
        b.weight("ns.feature_weight".into(), &[2, 2], ParamGroup::NsHead);
    }
    b.0
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterCount {
    /// Scalars per group, in [`ParamGroup::ALL`] order; absent groups are 0.
    pub by_group: Vec<(ParamGroup, usize)>,
    /// Comparable to published totals (heads excluded).
    pub reported: usize,
    /// Every trainable scalar, heads included.
    pub total: usize,
}

impl ParameterCount {
    pub fn group(&self, g: ParamGroup) -> usize {
        self.by_group
            .iter()
            .find(|(x, _)| *x == g)
            .map_or(0, |(_, n)| *n)
    }
}

pub fn count_parameters(c: &ModelConfig) -> ParameterCount {
    let specs = parameter_specs(c);
    let by_group: Vec<(ParamGroup, usize)> = ParamGroup::ALL
        .iter()
        .map(|&g| (g, specs.iter().filter(|s| s.group == g).map(ParamSpec::numel).sum()))
        .collect();
    let reported = by_group
        .iter()
        .filter(|(g, _)| g.in_reported_total())
        .map(|(_, n)| n)
        .sum();
    let total = by_group.iter().map(|(_, n)| n).sum();
    ParameterCount {
        by_group,
        reported,
        total,
    }
}

/// Seed for one tensor: the run seed mixed with a digest of the tensor name,
/// so a tensor's initial value does not depend on which others exist.
fn tensor_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word) ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn init_tensor<F: Real>(spec: &ParamSpec, seed: u64) -> Tensor<F> {
    let n = spec.numel();
    let data: Vec<F> = match spec.init {
        Init::Zeros => vec![F::zero(); n],
        Init::Ones => vec![F::one(); n],
        Init::Constant(v) => vec![F::of(v); n],
        Init::Normal => {
            let mut rng = ChaCha8Rng::seed_from_u64(tensor_seed(seed, &spec.name));
            let normal = Normal::new(0.0, INIT_STDDEV).expect("valid normal");
            // Drawn in 64-bit so both precisions start from the same values.
            (0..n).map(|_| F::of(normal.sample(&mut rng))).collect()
        }
    };
    Tensor::new(spec.shape.clone(), data).expect("spec shape matches data")
}

/// Freshly initialised parameters for a configuration.
pub fn init_params<F: Real>(c: &ModelConfig, seed: u64) -> Result<ParamStore<F>, EncoderError> {
    c.validate()?;
    let mut store = ParamStore::new();
    for spec in parameter_specs(c) {
        let t = init_tensor(&spec, seed);
        store.insert(spec.name, t);
    }
    Ok(store)
}

/// Checks that a store holds exactly the registry's tensors with the right
/// shapes.
pub fn check_store<F: Real>(c: &ModelConfig, store: &ParamStore<F>) -> Result<(), EncoderError> {
    let specs = parameter_specs(c);
    if specs.len() != store.len() {
        return Err(EncoderError::InvalidConfig(format!(
            "expected {} tensors, found {}",
            specs.len(),
            store.len()
        )));
    }
    for spec in &specs {
        match store.get(&spec.name) {
            None => {
                return Err(EncoderError::InvalidConfig(format!(
                    "missing tensor {}",
                    spec.name
                )))
            }
            Some(t) if t.shape() != spec.shape.as_slice() => {
                return Err(EncoderError::InvalidConfig(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )))
            }
            _ => {}
        }
    }
    Ok(())
}
