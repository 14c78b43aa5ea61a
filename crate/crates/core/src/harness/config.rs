use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::HarnessError;
use crate::execution::RefinementConfig;
use crate::gating::AdapterConfig;
use crate::retrieval::{EncoderConfig, RetrievalConfig, DEFAULT_B, DEFAULT_K1};

/// Every tunable of a pipeline run. Serialized as flat `key = value` lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// retrieved items per aspect
    pub entity_k: usize,
    pub relation_k: usize,
    pub subgraph_k: usize,
    /// adapter embedding width
    pub e: usize,
    /// projector bottleneck width
    pub d: usize,
    /// relation encoder width
    pub d_r: usize,
    /// tokens kept per entity, relation, subgraph document and question
    pub entity_len: usize,
    pub relation_len: usize,
    pub subgraph_len: usize,
    pub question_len: usize,
    /// soft prompt rows
    pub l_p: usize,
    pub beam_n: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub entity_threshold: f64,
    pub seed: u64,
    pub encoder_epochs: usize,
    pub scorer_epochs: usize,
    pub adapter_epochs: usize,
    pub negatives: usize,
    pub encoder_lr: f64,
    pub scorer_lr: f64,
    pub adapter_lr: f64,
    pub logit_scale: f64,
    pub encoder_buckets: usize,
    pub token_buckets: usize,
    pub init_std: f64,
    pub attention_gamma: f64,
    pub max_words: usize,
    pub rerank: bool,
    pub allow_empty_answers: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let ad = AdapterConfig::default();
        PipelineConfig {
            entity_k: 8,
            relation_k: 16,
            subgraph_k: 8,
            e: ad.dim,
            d: ad.hidden,
            d_r: enc.dim,
            entity_len: ad.entity_len,
            relation_len: ad.relation_len,
            subgraph_len: ad.subgraph_len,
            question_len: ad.question_len,
            l_p: ad.soft_tokens,
            beam_n: 8,
            bm25_k1: DEFAULT_K1,
            bm25_b: DEFAULT_B,
            entity_threshold: 0.4,
            seed: 42,
            encoder_epochs: 10,
            scorer_epochs: 10,
            adapter_epochs: 80,
            negatives: 8,
            encoder_lr: enc.lr,
            scorer_lr: 0.5,
            adapter_lr: ad.lr,
            logit_scale: enc.logit_scale,
            encoder_buckets: enc.buckets,
            token_buckets: ad.buckets,
            init_std: ad.init_std,
            attention_gamma: ad.attention_gamma,
            max_words: crate::kg::DEFAULT_MAX_WORDS,
            rerank: true,
            allow_empty_answers: false,
        }
    }
}

fn fields(c: &PipelineConfig) -> Map<String, Value> {
    match serde_json::to_value(c).expect("plain struct") {
        Value::Object(m) => m,
        _ => unreachable!(),
    }
}

impl PipelineConfig {
    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let mut map = fields(self);
        let bad = |m: &str| HarnessError::Config(format!("{key}: {m}"));
        let slot = map.get_mut(key).ok_or_else(|| bad("unknown key"))?;
        let v = value.trim();
        *slot = match slot {
            Value::Bool(_) => Value::Bool(v.parse().map_err(|_| bad("expected true or false"))?),
            Value::Number(n) if n.is_f64() => {
                let x: f64 = v.parse().map_err(|_| bad("expected a number"))?;
                serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(|| bad("not finite"))?
            }
            _ => Value::Number(v.parse::<u64>().map_err(|_| bad("expected a nonnegative integer"))?.into()),
        };
        *self = serde_json::from_value(Value::Object(map)).map_err(|e| bad(&e.to_string()))?;
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut c = PipelineConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        fields(self)
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let sizes = [
            ("entity_k", self.entity_k),
            ("relation_k", self.relation_k),
            ("subgraph_k", self.subgraph_k),
            ("e", self.e),
            ("d", self.d),
            ("d_r", self.d_r),
            ("entity_len", self.entity_len),
            ("relation_len", self.relation_len),
            ("subgraph_len", self.subgraph_len),
            ("question_len", self.question_len),
            ("beam_n", self.beam_n),
            ("encoder_buckets", self.encoder_buckets),
            ("token_buckets", self.token_buckets),
            ("max_words", self.max_words),
        ];
        if let Some((k, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(HarnessError::Config(format!("{k} must be positive")));
        }
        if !(self.bm25_k1 > 0.0 && (0.0..=1.0).contains(&self.bm25_b)) {
            return Err(HarnessError::Config("bm25_k1 must be positive and bm25_b in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.entity_threshold) {
            return Err(HarnessError::Config("entity_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            entities: self.entity_k,
            relations: self.relation_k,
            subgraphs: self.subgraph_k,
            k1: self.bm25_k1,
            b: self.bm25_b,
            max_words: self.max_words,
            rerank: self.rerank,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            buckets: self.encoder_buckets,
            dim: self.d_r,
            seed: self.seed,
            lr: self.encoder_lr,
            logit_scale: self.logit_scale,
        }
    }

    pub fn adapter(&self) -> AdapterConfig {
        AdapterConfig {
            dim: self.e,
            hidden: self.d,
            buckets: self.token_buckets,
            entity_len: self.entity_len,
            relation_len: self.relation_len,
            subgraph_len: self.subgraph_len,
            question_len: self.question_len,
            soft_tokens: self.l_p,
            init_std: self.init_std,
            attention_gamma: self.attention_gamma,
            lr: self.adapter_lr,
            seed: self.seed,
        }
    }

    pub fn refinement(&self) -> RefinementConfig {
        RefinementConfig {
            entity_threshold: self.entity_threshold,
            allow_empty_answers: self.allow_empty_answers,
            ..RefinementConfig::default()
        }
    }
}
