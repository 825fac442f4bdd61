//! Generates a paired image-feature/text corpus with shared multilabel
//! ground truth, inspects a few instances, and round-trips the corpus and
//! its word-embedding table through their on-disk formats.

use crossview::corpus::Corpus;
use crossview::embedding::GloveTable;
use crossview::synth::{generate_synthetic, split, SynthConfig};

fn main() -> crossview::Result<()> {
    let config = SynthConfig { n: 1000, categories: 6, feature_dim: 24, seed: 42, ..SynthConfig::default() };
    let (corpus, table) = generate_synthetic(&config)?;
    println!(
        "{} instances, {} categories, {}-dim features, vocabulary of {} tokens ({}-dim embeddings)",
        corpus.len(),
        corpus.categories(),
        corpus.feature_dim(),
        table.len(),
        table.dimension(),
    );

    let mut per_category = vec![0usize; corpus.categories()];
    for inst in corpus.instances() {
        for &c in &inst.labels {
            per_category[c] += 1;
        }
    }
    println!("label marginals: {per_category:?}");

    for inst in corpus.instances().iter().take(3) {
        println!(
            "  id {:>4}  labels {:?}  tokens {:?}",
            inst.id,
            inst.labels,
            inst.tokens.join(" ")
        );
    }

    let dir = tempfile::tempdir()?;
    let corpus_path = dir.path().join("corpus.bin");
    let table_path = dir.path().join("vectors.txt");
    corpus.write(&corpus_path)?;
    table.write(&table_path)?;
    let reread = Corpus::read(&corpus_path)?;
    let table_back = GloveTable::load(&table_path)?;
    assert_eq!(reread.len(), corpus.len());
    assert_eq!(table_back.len(), table.len());
    println!(
        "round-trip: corpus {} bytes, embedding table {} bytes",
        std::fs::metadata(&corpus_path)?.len(),
        std::fs::metadata(&table_path)?.len()
    );

    let spec = split(&corpus, 200, Some(600), 9)?;
    println!(
        "split: {} queries / {} database / {} training rows (training is a database subset)",
        spec.query_ids.len(),
        spec.database_ids.len(),
        spec.train_ids.len()
    );
    Ok(())
}
