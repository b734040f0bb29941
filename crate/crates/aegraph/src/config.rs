//! Run configuration: every tunable in one flat bag, layered from defaults,
//! then an optional key=value file, then AEG_-prefixed environment
//! variables, then command-line flags. Later layers win. Unknown keys are
//! rejected at every layer so typos fail loudly instead of silently running
//! with defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decomposer::DecomposeParams;
use crate::error::{Error, Result};
use crate::ingest::{BuildParams, ChunkParams};
use crate::resonance::{PropagationParams, SeedParams, Strategy};
use crate::sieve::AnswerMode;

/// Environment variables with this prefix override file values.
pub const ENV_PREFIX: &str = "AEG_";

/// Which completion backend serves gateway calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Fixture-driven, fully offline and deterministic.
    Mock,
    /// Chat-completions HTTP endpoint.
    Remote,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::Mock => "mock",
            BackendKind::Remote => "remote",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "remote" => Ok(BackendKind::Remote),
            other => Err(Error::config(format!(
                "unknown backend `{other}`; expected mock or remote"
            ))),
        }
    }
}

/// Which text encoder produces embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Hashed character n-grams, offline and deterministic.
    Ngram,
    /// Embeddings HTTP endpoint.
    Remote,
}

impl EncoderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderKind::Ngram => "ngram",
            EncoderKind::Remote => "remote",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ngram" => Ok(EncoderKind::Ngram),
            "remote" => Ok(EncoderKind::Remote),
            other => Err(Error::config(format!(
                "unknown encoder `{other}`; expected ngram or remote"
            ))),
        }
    }
}

macro_rules! run_config {
    ($(($field:ident, $ty:ty, $default:expr, $doc:literal)),+ $(,)?) => {
        #[doc = "Every tunable for indexing, querying, evaluation and theory checks."]
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct RunConfig {
            $(#[doc = $doc] pub $field: $ty,)+
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($field: $default,)+ }
            }
        }

        impl RunConfig {
            /// Assigns one key from its textual form. All layers (file, env,
            /// flags) funnel through here, so they agree on names and
            /// parsing.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $(stringify!($field) => {
                        self.$field = value.parse::<$ty>().map_err(|e| {
                            Error::config(format!(
                                "invalid value {value:?} for {key}: {e}"
                            ))
                        })?;
                    })+
                    _ => {
                        return Err(Error::config(format!("unknown config key {key:?}")));
                    }
                }
                Ok(())
            }

            /// Emits the full configuration as the same flat key=value text
            /// the file layer reads, one key per line in declaration order.
            pub fn to_file_string(&self) -> String {
                let mut out = String::new();
                $(
                    out.push_str(stringify!($field));
                    out.push_str(" = ");
                    out.push_str(&self.$field.to_string());
                    out.push('\n');
                )+
                out
            }
        }
    };
}

run_config![
    (retrieval_top_k, usize, 25, "Atoms retrieved per (sub-)query for downstream selection."),
    (synonymy_edge_topk, usize, 2047, "Nearest neighbors considered per entity when adding synonym edges."),
    (synonymy_edge_sim_threshold, f64, 0.8, "Minimum cosine similarity for a synonym edge."),
    (entity_node_weight, f64, 1.0, "Weight factor for entity seeds in the personalization vector."),
    (entity_top_k, usize, 20, "Entity seeds retained per query."),
    (entity_sim_threshold, f64, 0.3, "Minimum similarity for an entity to seed propagation."),
    (propagation_method, Strategy, Strategy::Ppr, "Graph propagation strategy."),
    (damping, f64, 0.3, "Restart probability of the propagation walk."),
    (passage_node_weight, f64, 0.1, "Weight factor for atom seeds in the personalization vector."),
    (propagation_num_iter, usize, 20, "Iterations for fixed-count iterative strategies."),
    (propagation_num_walks, usize, 1000, "Walks for Monte-Carlo propagation."),
    (propagation_walk_length, usize, 10, "Length of each Monte-Carlo walk."),
    (max_sub_questions, usize, 3, "Cap on sub-questions produced by decomposition."),
    (complexity_threshold, f64, 6.5, "Complexity score at or above which a query decomposes."),
    (backend, BackendKind, BackendKind::Mock, "Completion backend: mock or remote."),
    (encoder, EncoderKind, EncoderKind::Ngram, "Text encoder: ngram or remote."),
    (answer_mode, AnswerMode, AnswerMode::Abstract, "Answer style: abstract or precise."),
    (metric_alpha, f64, 0.7, "Blend between claim F1 and semantic similarity in accuracy."),
    (context_budget_tokens, usize, 4096, "Token cap on assembled evidence."),
    (chunk_size, usize, 256, "Ingestion window length in whitespace tokens."),
    (chunk_overlap, usize, 32, "Tokens shared between consecutive ingestion windows."),
    (ppr_tol, f64, 1e-8, "Convergence tolerance for fixed-point propagation."),
    (ppr_max_iter, usize, 1000, "Iteration cap for fixed-point propagation."),
    (katz_decay, f64, 0.1, "Per-hop decay of the path-counting strategy."),
    (bfs_decay, f64, 0.5, "Per-hop decay of the frontier-flow strategy."),
    (bfs_max_hops, usize, 3, "Hop budget of the frontier-flow strategy."),
    (workers, usize, 1, "Worker threads for query batches."),
    (seed, u64, 42, "Root RNG seed; mock-mode runs are reproducible from it."),
    (fixtures_path, String, String::new(), "Fixture file backing the mock backend."),
    (llm_endpoint, String, String::new(), "Chat-completions URL for the remote backend."),
    (llm_model, String, String::new(), "Model name sent to the remote backend."),
    (llm_api_key, String, String::new(), "Bearer token for the remote backend; prefer the env layer."),
    (encoder_endpoint, String, String::new(), "Embeddings URL for the remote encoder."),
    (encoder_auth_token, String, String::new(), "Bearer token for the remote encoder; prefer the env layer."),
    (encoder_batch_size, usize, 32, "Texts per remote embedding request."),
    (encoder_dimension, usize, 1024, "Embedding width the remote encoder returns."),
];

impl RunConfig {
    /// Applies a flat key=value file on top of the current values. Blank
    /// lines and lines starting with `#` are skipped; anything else must be
    /// `key = value` with a known key.
    pub fn apply_file_contents(&mut self, contents: &str, origin: &str) -> Result<()> {
        for (lineno, raw) in contents.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "{origin}:{}: expected key = value, got {line:?}",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::config(format!("{origin}:{}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let contents = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        self.apply_file_contents(&contents, &path.display().to_string())
    }

    /// Applies environment pairs: a variable named AEG_<KEY> sets the config
    /// key <key>. Unknown AEG_-prefixed names are rejected, same as unknown
    /// file keys.
    pub fn apply_env_pairs<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            let Some(suffix) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = suffix.to_ascii_lowercase();
            self.set(&key, &value)
                .map_err(|e| Error::config(format!("environment variable {name}: {e}")))?;
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_env_pairs(std::env::vars())
    }

    /// Defaults, then the optional file, then the environment. Flag
    /// overrides are the caller's last layer on the returned value.
    pub fn load(file: Option<&Path>) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = file {
            config.apply_file(path)?;
        }
        config.apply_env()?;
        Ok(config)
    }

    /// Cross-field and range checks that the individual stages would only
    /// surface mid-run.
    pub fn validate(&self) -> Result<()> {
        if self.retrieval_top_k == 0 {
            return Err(Error::config("retrieval_top_k must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config(format!(
                "damping must be in (0, 1], got {}",
                self.damping
            )));
        }
        for (name, value) in [
            ("synonymy_edge_sim_threshold", self.synonymy_edge_sim_threshold),
            ("entity_sim_threshold", self.entity_sim_threshold),
        ] {
            if !value.is_finite() || !(-1.0..=1.0).contains(&value) {
                return Err(Error::config(format!(
                    "{name} must be a cosine value in [-1, 1], got {value}"
                )));
            }
        }
        if !self.metric_alpha.is_finite() || !(0.0..=1.0).contains(&self.metric_alpha) {
            return Err(Error::config(format!(
                "metric_alpha must be in [0, 1], got {}",
                self.metric_alpha
            )));
        }
        if !self.complexity_threshold.is_finite() {
            return Err(Error::config("complexity_threshold must be finite"));
        }
        if !(self.passage_node_weight.is_finite() && self.passage_node_weight >= 0.0)
            || !(self.entity_node_weight.is_finite() && self.entity_node_weight >= 0.0)
        {
            return Err(Error::config("seed weights must be finite and non-negative"));
        }
        if self.chunk_size == 0 {
            return Err(Error::config("chunk_size must be at least 1"));
        }
        if self.chunk_overlap >= self.chunk_size {
            return Err(Error::config(format!(
                "chunk_overlap {} must be smaller than chunk_size {}",
                self.chunk_overlap, self.chunk_size
            )));
        }
        if !(self.ppr_tol > 0.0 && self.ppr_tol.is_finite()) {
            return Err(Error::config("ppr_tol must be positive and finite"));
        }
        if self.ppr_max_iter == 0 {
            return Err(Error::config("ppr_max_iter must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.backend == BackendKind::Remote {
            if self.llm_endpoint.is_empty() {
                return Err(Error::config("remote backend needs llm_endpoint"));
            }
            if self.llm_model.is_empty() {
                return Err(Error::config("remote backend needs llm_model"));
            }
        }
        if self.encoder == EncoderKind::Remote && self.encoder_endpoint.is_empty() {
            return Err(Error::config("remote encoder needs encoder_endpoint"));
        }
        Ok(())
    }

    pub fn seed_params(&self) -> SeedParams {
        SeedParams {
            atom_seed_weight: self.passage_node_weight,
            atom_top_k: self.retrieval_top_k,
            entity_top_k: self.entity_top_k,
            entity_sim_threshold: self.entity_sim_threshold,
            entity_seed_weight: self.entity_node_weight,
        }
    }

    pub fn propagation_params(&self) -> PropagationParams {
        PropagationParams {
            restart: self.damping,
            tol: self.ppr_tol,
            max_iter: self.ppr_max_iter,
            num_walks: self.propagation_num_walks,
            walk_length: self.propagation_walk_length,
            num_iter: self.propagation_num_iter,
            katz_decay: self.katz_decay,
            bfs_decay: self.bfs_decay,
            bfs_max_hops: self.bfs_max_hops,
            rng_seed: self.seed,
        }
    }

    pub fn decompose_params(&self) -> DecomposeParams {
        DecomposeParams {
            complexity_threshold: self.complexity_threshold,
            max_sub_questions: self.max_sub_questions,
        }
    }

    pub fn build_params(&self) -> BuildParams {
        BuildParams {
            chunk: ChunkParams {
                size: self.chunk_size,
                overlap: self.chunk_overlap,
            },
            synonym_top_k: self.synonymy_edge_topk,
            synonym_sim_threshold: self.synonymy_edge_sim_threshold,
        }
    }
}
