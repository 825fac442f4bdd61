//! Seeded synthetic corpus generator and query/database splitting.
//!
//! Each category owns a feature-space anchor, an embedding-space center,
//! and a private vocabulary. An instance samples 1-3 categories, sums their
//! feature anchors (plus Gaussian noise), and draws its tokens from their
//! vocabularies, so both views carry the same label signal.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusInstance};
use crate::embedding::GloveTable;
use crate::error::{Error, Result};

/// Spread of word vectors around their category center, relative to the
/// unit-variance centers themselves.
const WORD_JITTER: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub categories: usize,
    pub feature_dim: usize,
    pub vocab_per_class: usize,
    pub noise: f64,
    pub seed: u64,
    pub max_words: usize,
    pub glove_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2500,
            categories: 8,
            feature_dim: 64,
            vocab_per_class: 12,
            noise: 0.3,
            seed: 0,
            max_words: 8,
            glove_dim: 16,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Argument("need at least one instance".into()));
        }
        if self.categories < 2 {
            return Err(Error::Argument("need at least two categories".into()));
        }
        if self.feature_dim == 0 || self.glove_dim == 0 {
            return Err(Error::Argument("dimensions must be positive".into()));
        }
        if self.vocab_per_class == 0 {
            return Err(Error::Argument("each category needs at least one word".into()));
        }
        if self.max_words == 0 {
            return Err(Error::Argument("max_words must be at least 1".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Argument(format!("noise must be non-negative, got {}", self.noise)));
        }
        Ok(())
    }
}

fn token_name(category: usize, word: usize) -> String {
    format!("c{category:02}_t{word:02}")
}

/// Deterministic synthetic corpus plus its companion embedding table.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(Corpus, GloveTable)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let feature_anchors: Vec<Vec<f64>> = (0..config.categories)
        .map(|_| (0..config.feature_dim).map(|_| normal(&mut rng)).collect())
        .collect();
    let embed_centers: Vec<Vec<f64>> = (0..config.categories)
        .map(|_| (0..config.glove_dim).map(|_| normal(&mut rng)).collect())
        .collect();
    let mut entries = Vec::with_capacity(config.categories * config.vocab_per_class);
    for (c, center) in embed_centers.iter().enumerate() {
        for w in 0..config.vocab_per_class {
            let vector = center.iter().map(|v| v + WORD_JITTER * normal(&mut rng)).collect();
            entries.push((token_name(c, w), vector));
        }
    }
    let table = GloveTable::from_entries(entries)?;

    let max_labels = 3.min(config.categories);
    let mut instances = Vec::with_capacity(config.n);
    for id in 0..config.n as u64 {
        let label_count = rng.gen_range(1..=max_labels);
        let mut picks: Vec<usize> = (0..config.categories).collect();
        let (chosen, _) = picks.partial_shuffle(&mut rng, label_count);
        let mut labels: Vec<usize> = chosen.to_vec();
        labels.sort_unstable();

        let mut features = vec![0.0; config.feature_dim];
        for &c in &labels {
            for (f, a) in features.iter_mut().zip(&feature_anchors[c]) {
                *f += a;
            }
        }
        for f in features.iter_mut() {
            *f += config.noise * normal(&mut rng);
        }

        // One word per label first so every category is attested, then fill
        // the remaining slots from random labels.
        let mut tokens: Vec<String> = labels
            .iter()
            .map(|&c| token_name(c, rng.gen_range(0..config.vocab_per_class)))
            .collect();
        while tokens.len() < config.max_words {
            let c = labels[rng.gen_range(0..labels.len())];
            tokens.push(token_name(c, rng.gen_range(0..config.vocab_per_class)));
        }

        instances.push(CorpusInstance { id, features, tokens, labels });
    }
    let corpus = Corpus::new(
        config.feature_dim,
        config.categories,
        config.max_words,
        config.glove_dim,
        instances,
    )?;
    Ok((corpus, table))
}

/// Disjoint query/database split; the training pool defaults to the whole
/// database and can be restricted to a random subset of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub query_ids: Vec<u64>,
    pub database_ids: Vec<u64>,
    pub train_ids: Vec<u64>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let db: std::collections::HashSet<u64> = self.database_ids.iter().copied().collect();
        if self.query_ids.iter().any(|id| db.contains(id)) {
            return Err(Error::Contract("query and database sets overlap".into()));
        }
        if !self.train_ids.iter().all(|id| db.contains(id)) {
            return Err(Error::Contract("training pool must lie inside the database".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("split serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<SplitSpec> {
        let text = std::fs::read_to_string(path)?;
        let spec: SplitSpec =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad split file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Uniform sample of `n_query` ids without replacement; the rest is the
/// database. `n_train` (if given) restricts the training pool.
pub fn split(corpus: &Corpus, n_query: usize, n_train: Option<usize>, seed: u64) -> Result<SplitSpec> {
    let n = corpus.len();
    if n_query >= n {
        return Err(Error::Argument(format!(
            "query size {n_query} must be smaller than the corpus ({n})"
        )));
    }
    let mut ids = corpus.ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut query_ids: Vec<u64> = ids[..n_query].to_vec();
    let mut database_ids: Vec<u64> = ids[n_query..].to_vec();
    let mut train_ids = match n_train {
        None => database_ids.clone(),
        Some(k) => {
            if k > database_ids.len() {
                return Err(Error::Argument(format!(
                    "training size {k} exceeds the database ({})",
                    database_ids.len()
                )));
            }
            database_ids[..k].to_vec()
        }
    };
    query_ids.sort_unstable();
    database_ids.sort_unstable();
    train_ids.sort_unstable();
    Ok(SplitSpec { query_ids, database_ids, train_ids, seed })
}
