//! On-disk corpus of paired instances: dense feature vector, token list,
//! and a category bitset per instance. Little-endian, versioned.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::bytes::{
    expect_header, read_f64, read_string, read_u32, read_u64, read_u8, write_f64, write_string,
    write_u32, write_u64,
};
use crate::embedding::{vectorize, GloveTable, OovPolicy};
use crate::error::{Error, Result};
use crate::objective::LabelMatrix;
use crate::tensor::Tensor;
use crate::trainer::TrainingSet;

const MAGIC: &[u8; 4] = b"CVHD";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusInstance {
    pub id: u64,
    pub features: Vec<f64>,
    pub tokens: Vec<String>,
    /// Sorted distinct category indices; never empty.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    feature_dim: usize,
    categories: usize,
    max_words: usize,
    glove_dim: usize,
    instances: Vec<CorpusInstance>,
}

impl Corpus {
    pub fn new(
        feature_dim: usize,
        categories: usize,
        max_words: usize,
        glove_dim: usize,
        instances: Vec<CorpusInstance>,
    ) -> Result<Self> {
        if categories == 0 {
            return Err(Error::Contract("corpus must declare at least one category".into()));
        }
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if !seen.insert(inst.id) {
                return Err(Error::DuplicateId(inst.id));
            }
            if inst.features.len() != feature_dim {
                return Err(Error::Dimension {
                    op: "corpus",
                    detail: format!(
                        "instance {} has {} features, header says {}",
                        inst.id,
                        inst.features.len(),
                        feature_dim
                    ),
                });
            }
            if !inst.features.iter().all(|v| v.is_finite()) {
                return Err(Error::Contract(format!(
                    "instance {} has non-finite features",
                    inst.id
                )));
            }
            if inst.labels.is_empty() {
                return Err(Error::Contract(format!("instance {} has no labels", inst.id)));
            }
            let sorted_distinct =
                inst.labels.windows(2).all(|w| w[0] < w[1]) && *inst.labels.last().unwrap() < categories;
            if !sorted_distinct {
                return Err(Error::Contract(format!(
                    "instance {} labels must be sorted, distinct, and below {}",
                    inst.id, categories
                )));
            }
        }
        Ok(Self { feature_dim, categories, max_words, glove_dim, instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    /// Vectorization window used when turning token lists into text vectors.
    pub fn max_words(&self) -> usize {
        self.max_words
    }

    /// Dimension of the companion embedding table this corpus was built for.
    pub fn glove_dim(&self) -> usize {
        self.glove_dim
    }

    pub fn instances(&self) -> &[CorpusInstance] {
        &self.instances
    }

    pub fn ids(&self) -> Vec<u64> {
        self.instances.iter().map(|i| i.id).collect()
    }

    /// Instances in the order of `ids`; unknown id is an argument error.
    pub fn subset_by_ids(&self, ids: &[u64]) -> Result<Corpus> {
        let index: std::collections::HashMap<u64, usize> =
            self.instances.iter().enumerate().map(|(i, inst)| (inst.id, i)).collect();
        let mut picked = Vec::with_capacity(ids.len());
        for &id in ids {
            let &i = index
                .get(&id)
                .ok_or_else(|| Error::Argument(format!("id {id} not present in corpus")))?;
            picked.push(self.instances[i].clone());
        }
        Corpus::new(self.feature_dim, self.categories, self.max_words, self.glove_dim, picked)
    }

    /// Materialize both views: features as-is, tokens through the embedding
    /// table with this corpus's vectorization window.
    pub fn to_training_set(&self, table: &GloveTable, oov: OovPolicy) -> Result<TrainingSet> {
        if self.is_empty() {
            return Err(Error::Contract("cannot build a training set from an empty corpus".into()));
        }
        let n = self.len();
        let text_dim = self.max_words * table.dimension();
        let mut features = Vec::with_capacity(n * self.feature_dim);
        let mut texts = Vec::with_capacity(n * text_dim);
        let mut labels = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for inst in &self.instances {
            ids.push(inst.id);
            features.extend_from_slice(&inst.features);
            let tv = vectorize(&inst.tokens, table, self.max_words, oov)?;
            texts.extend_from_slice(&tv.data);
            labels.push(inst.labels.clone());
        }
        TrainingSet::new(
            ids,
            Tensor::new(vec![n, self.feature_dim], features)?,
            Tensor::new(vec![n, text_dim], texts)?,
            LabelMatrix::from_rows(self.categories, &labels)?,
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        write_u64(&mut w, self.instances.len() as u64)?;
        write_u32(&mut w, self.feature_dim as u32)?;
        write_u32(&mut w, self.categories as u32)?;
        write_u32(&mut w, self.max_words as u32)?;
        write_u32(&mut w, self.glove_dim as u32)?;
        let label_bytes = self.categories.div_ceil(8);
        for inst in &self.instances {
            write_u64(&mut w, inst.id)?;
            for &v in &inst.features {
                write_f64(&mut w, v)?;
            }
            write_u32(&mut w, inst.tokens.len() as u32)?;
            for token in &inst.tokens {
                write_string(&mut w, token)?;
            }
            let mut bits = vec![0u8; label_bytes];
            for &c in &inst.labels {
                bits[c / 8] |= 1 << (c % 8);
            }
            w.write_all(&bits)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Corpus> {
        let mut r = BufReader::new(File::open(path)?);
        expect_header(&mut r, MAGIC, VERSION, "corpus")?;
        let n = read_u64(&mut r)? as usize;
        let feature_dim = read_u32(&mut r)? as usize;
        let categories = read_u32(&mut r)? as usize;
        let max_words = read_u32(&mut r)? as usize;
        let glove_dim = read_u32(&mut r)? as usize;
        let label_bytes = categories.div_ceil(8);
        let mut instances = Vec::with_capacity(n);
        for _ in 0..n {
            let id = read_u64(&mut r)?;
            let mut features = Vec::with_capacity(feature_dim);
            for _ in 0..feature_dim {
                features.push(read_f64(&mut r)?);
            }
            let token_count = read_u32(&mut r)? as usize;
            let mut tokens = Vec::with_capacity(token_count);
            for _ in 0..token_count {
                tokens.push(read_string(&mut r)?);
            }
            let mut labels = Vec::new();
            for byte_index in 0..label_bytes {
                let byte = read_u8(&mut r)?;
                for bit in 0..8 {
                    if byte & (1 << bit) != 0 {
                        labels.push(byte_index * 8 + bit);
                    }
                }
            }
            instances.push(CorpusInstance { id, features, tokens, labels });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after final instance".into()));
        }
        Corpus::new(feature_dim, categories, max_words, glove_dim, instances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Seek, SeekFrom};

    fn sample_corpus() -> Corpus {
        Corpus::new(
            3,
            4,
            2,
            2,
            vec![
                CorpusInstance {
                    id: 10,
                    features: vec![1.0, -2.0, 0.5],
                    tokens: vec!["red".into(), "sky".into()],
                    labels: vec![0, 3],
                },
                CorpusInstance {
                    id: 11,
                    features: vec![0.0, 0.25, -1.5],
                    tokens: vec!["sky".into()],
                    labels: vec![2],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_identity() {
        let corpus = sample_corpus();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.cvhd");
        corpus.write(&path).unwrap();
        let back = Corpus::read(&path).unwrap();
        assert_eq!(corpus, back);
    }

    #[test]
    fn rejects_wrong_magic() {
        let corpus = sample_corpus();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.cvhd");
        corpus.write(&path).unwrap();
        let mut f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.seek(SeekFrom::Start(0)).unwrap();
        f.write_all(b"NOPE").unwrap();
        drop(f);
        assert!(matches!(Corpus::read(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_unlabeled_instances() {
        let err = Corpus::new(
            1,
            2,
            1,
            1,
            vec![CorpusInstance { id: 0, features: vec![0.0], tokens: vec![], labels: vec![] }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn rejects_out_of_range_or_unsorted_labels() {
        let make = |labels: Vec<usize>| {
            Corpus::new(
                1,
                3,
                1,
                1,
                vec![CorpusInstance { id: 0, features: vec![0.0], tokens: vec![], labels }],
            )
        };
        assert!(make(vec![3]).is_err());
        assert!(make(vec![1, 0]).is_err());
        assert!(make(vec![1, 1]).is_err());
        assert!(make(vec![0, 2]).is_ok());
    }

    #[test]
    fn rejects_duplicate_ids() {
        let inst = CorpusInstance { id: 7, features: vec![0.0], tokens: vec![], labels: vec![0] };
        let err = Corpus::new(1, 1, 1, 1, vec![inst.clone(), inst]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(7)));
    }

    #[test]
    fn rejects_feature_dimension_mismatch() {
        let err = Corpus::new(
            2,
            1,
            1,
            1,
            vec![CorpusInstance { id: 0, features: vec![0.0], tokens: vec![], labels: vec![0] }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn subset_preserves_requested_order() {
        let corpus = sample_corpus();
        let sub = corpus.subset_by_ids(&[11, 10]).unwrap();
        assert_eq!(sub.ids(), vec![11, 10]);
        assert!(matches!(corpus.subset_by_ids(&[99]), Err(Error::Argument(_))));
    }

    #[test]
    fn training_set_dimensions_follow_header_and_table() {
        let corpus = sample_corpus();
        let table = GloveTable::from_entries(vec![
            ("red".into(), vec![1.0, 0.0]),
            ("sky".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let set = corpus.to_training_set(&table, OovPolicy::Zero).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.feature_dim(), 3);
        assert_eq!(set.text_dim(), 4);
        assert_eq!(set.ids(), &[10, 11]);
        // First instance: "red" then "sky"; second: "sky" then zero padding.
        assert_eq!(set.text_vectors().row(0), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(set.text_vectors().row(1), &[0.0, 1.0, 0.0, 0.0]);
        assert!(set.labels().contains(0, 3));
        assert!(!set.labels().contains(1, 3));
    }
}
