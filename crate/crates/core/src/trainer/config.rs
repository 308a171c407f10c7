//! `key = value` configuration files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoder::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenKind, WeightTable};

/// How `wall_seconds` and `examples_per_sec` are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Timing {
    /// Elapsed wall-clock time.
    Wall,
    /// Arithmetic work converted to seconds at a fixed nominal rate, so
    /// metrics files are reproducible byte for byte.
    Logical,
}

impl FromStr for Timing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wall" => Ok(Timing::Wall),
            "logical" => Ok(Timing::Logical),
            _ => Err(Error::Config(format!("timing must be wall or logical, got {s:?}"))),
        }
    }
}

impl Timing {
    pub fn name(self) -> &'static str {
        match self {
            Timing::Wall => "wall",
            Timing::Logical => "logical",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub weights: WeightTable,
    /// Whether the weight table should replace the weights stored in the
    /// example file.
    pub weights_overridden: bool,
    pub eval_interval: usize,
    /// 0 disables intermediate checkpoints; the final one is always written.
    pub checkpoint_interval: usize,
    pub timing: Timing,
    /// Fix the halting unit so every position runs exactly `act_max_steps`
    /// recurrences.
    pub act_pinned: bool,
    pub examples_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
    pub emoticons_path: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            steps: 500,
            batch_size: 16,
            learning_rate: 1e-3,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            seed: 0,
            weights: WeightTable::default(),
            weights_overridden: false,
            eval_interval: 50,
            checkpoint_interval: 0,
            timing: Timing::Wall,
            act_pinned: false,
            examples_path: None,
            vocab_path: None,
            emoticons_path: None,
            output_dir: PathBuf::from("run"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must be in [0, 1]");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be at least 1");
        }
        if self.act_pinned && !self.model.variant.is_universal() {
            return bad("act_pinned needs a universal variant");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative paths are taken from the config file's directory
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.examples_path,
            &mut cfg.vocab_path,
            &mut cfg.emoticons_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Parses a configuration. Unspecified keys keep their defaults; the
    /// variant defaults to `base` and widths to the small desk preset.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let variant = match pairs.iter().find(|(k, _, _)| k == "variant") {
            Some((_, v, _)) => v.parse::<Variant>()?,
            None => Variant::Base,
        };
        let mut cfg = TrainConfig::new(ModelConfig::desk(variant, 0));
        for (key, value, line) in &pairs {
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        cfg.validate_partial()?;
        Ok(cfg)
    }

    // Like `validate`, but vocab may still be unresolved.
    fn validate_partial(&self) -> Result<()> {
        let mut probe = self.clone();
        if probe.model.vocab == 0 {
            probe.model.vocab = 1;
        }
        probe.validate()
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        if set_model_key(&mut self.model, key, value)? {
            return Ok(());
        }
        let weight = |t: &mut WeightTable, kind: TokenKind| -> std::result::Result<(), String> {
            t.set(kind, num(value)?).map_err(|e| e.to_string())
        };
        match key {
            "steps" => self.steps = num(value)?,
            "batch_size" => self.batch_size = num(value)?,
            "learning_rate" => self.learning_rate = num(value)?,
            "warmup_fraction" => self.warmup_fraction = num(value)?,
            "weight_decay" => self.weight_decay = num(value)?,
            "seed" => self.seed = num(value)?,
            "eval_interval" => self.eval_interval = num(value)?,
            "checkpoint_interval" => self.checkpoint_interval = num(value)?,
            "timing" => self.timing = value.parse().map_err(|e: Error| e.to_string())?,
            "act_pinned" => self.act_pinned = num(value)?,
            "examples_path" => self.examples_path = Some(PathBuf::from(value)),
            "vocab_path" => self.vocab_path = Some(PathBuf::from(value)),
            "emoticons_path" => self.emoticons_path = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "weight_regular" => weight(&mut self.weights, TokenKind::Regular)?,
            "weight_emoji" => weight(&mut self.weights, TokenKind::Emoji)?,
            "weight_url" => weight(&mut self.weights, TokenKind::Url)?,
            "weight_mention" => weight(&mut self.weights, TokenKind::Mention)?,
            "weight_special" => weight(&mut self.weights, TokenKind::Special)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        if key.starts_with("weight_") && key != "weight_decay" {
            self.weights_overridden = true;
        }
        Ok(())
    }
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse {value:?}"))
}

fn set_model_key(m: &mut ModelConfig, key: &str, value: &str) -> std::result::Result<bool, String> {
    match key {
        "hidden" => m.hidden = num(value)?,
        "heads" => m.heads = num(value)?,
        "ffn" => m.ffn = num(value)?,
        "layers_base" => m.layers_base = num(value)?,
        "vocab" => m.vocab = num(value)?,
        "max_positions" => m.max_positions = num(value)?,
        "latent_dims" => m.latent_dims = num(value)?,
        "variant" => m.variant = value.parse().map_err(|e: crate::encoder::EncoderError| e.to_string())?,
        "act_epsilon" => m.act_epsilon = num(value)?,
        "act_max_steps" => m.act_max_steps = num(value)?,
        "act_tau" => m.act_tau = num(value)?,
        "act_bias_init" => m.act_bias_init = num(value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// `(key, value, line number)` triples; `#` starts a comment.
fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if out.iter().any(|(seen, _, _)| seen == k) {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
        }
        out.push((k.to_string(), v.to_string(), i + 1));
    }
    Ok(out)
}

/// Model settings as config text, as echoed into checkpoints.
pub fn model_config_text(m: &ModelConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "hidden = {}", m.hidden);
    let _ = writeln!(s, "heads = {}", m.heads);
    let _ = writeln!(s, "ffn = {}", m.ffn);
    let _ = writeln!(s, "layers_base = {}", m.layers_base);
    let _ = writeln!(s, "vocab = {}", m.vocab);
    let _ = writeln!(s, "max_positions = {}", m.max_positions);
    let _ = writeln!(s, "latent_dims = {}", m.latent_dims);
    let _ = writeln!(s, "variant = {}", m.variant);
    let _ = writeln!(s, "act_epsilon = {:?}", m.act_epsilon);
    let _ = writeln!(s, "act_max_steps = {}", m.act_max_steps);
    let _ = writeln!(s, "act_tau = {:?}", m.act_tau);
    let _ = writeln!(s, "act_bias_init = {:?}", m.act_bias_init);
    s
}

/// Inverse of [`model_config_text`]; every model key must be present.
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    let pairs = parse_pairs(text)?;
    let mut m = ModelConfig::desk(Variant::Base, 0);
    const KEYS: [&str; 12] = [
        "hidden",
        "heads",
        "ffn",
        "layers_base",
        "vocab",
        "max_positions",
        "latent_dims",
        "variant",
        "act_epsilon",
        "act_max_steps",
        "act_tau",
        "act_bias_init",
    ];
    for key in KEYS {
        if !pairs.iter().any(|(k, _, _)| k == key) {
            return Err(Error::Config(format!("model configuration lacks {key}")));
        }
    }
    for (k, v, line) in &pairs {
        match set_model_key(&mut m, k, v) {
            Ok(true) => {}
            Ok(false) => return Err(Error::Config(format!("line {line}: unknown key {k:?}"))),
            Err(e) => return Err(Error::Config(format!("line {line}: {e}"))),
        }
    }
    m.validate()?;
    Ok(m)
}
