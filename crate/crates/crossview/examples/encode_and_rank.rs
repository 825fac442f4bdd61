//! Cross-view retrieval end to end: train on a synthetic corpus, encode
//! image-view queries and text-view database entries into packed binary
//! codes, then run Hamming ranking and fixed-radius lookup for one query.

use crossview::embedding::OovPolicy;
use crossview::models::ViewModel;
use crossview::retrieval::PackedCodeSet;
use crossview::synth::{generate_synthetic, split, SynthConfig};
use crossview::trainer::{train, TrainConfig, TrainingSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn main() -> crossview::Result<()> {
    let synth = SynthConfig { n: 800, categories: 6, feature_dim: 32, seed: 12, ..SynthConfig::default() };
    let (corpus, table) = generate_synthetic(&synth)?;
    let spec = split(&corpus, 100, None, 3)?;
    let train_set = corpus.subset_by_ids(&spec.train_ids)?.to_training_set(&table, OovPolicy::Zero)?;
    let query_set = corpus.subset_by_ids(&spec.query_ids)?.to_training_set(&table, OovPolicy::Zero)?;

    let code_bits = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let image = ViewModel::new_image(corpus.feature_dim(), &[64], code_bits, corpus.categories(), &mut rng)?;
    let text = ViewModel::new_text(
        corpus.glove_dim(),
        corpus.max_words(),
        32,
        32,
        64,
        code_bits,
        corpus.categories(),
        &mut rng,
    )?;
    let mut config = TrainConfig::desk(0.3, 6);
    config.pretrain_iters_image = 300;
    config.pretrain_iters_text = 300;
    config.joint_iters = 600;
    println!("training on {} paired instances...", train_set.len());
    let state = train(image, text, &train_set, &config)?;

    // Image view encodes the queries, text view encodes the database.
    let query_codes = PackedCodeSet::pack(&state.image.codes(query_set.features())?, query_set.ids())?;
    let db_codes = PackedCodeSet::pack(&state.text.codes(train_set.text_vectors())?, train_set.ids())?;
    println!(
        "{} query codes vs {} database codes, {} bits each ({} bytes packed)",
        query_codes.len(),
        db_codes.len(),
        db_codes.code_bits(),
        db_codes.row_bytes()
    );

    let labels_by_id: HashMap<u64, Vec<usize>> =
        corpus.instances().iter().map(|i| (i.id, i.labels.clone())).collect();
    let show = |set: &TrainingSet, row: usize| labels_by_id[&set.ids()[row]].clone();

    let shares = |a: u64, b: u64| labels_by_id[&a].iter().any(|c| labels_by_id[&b].contains(c));
    let mut p_at_10 = 0.0;
    for (row, &qid) in query_set.ids().iter().enumerate() {
        let hits = db_codes.rank(query_codes.row(row), 10)?;
        p_at_10 += hits.iter().filter(|h| shares(qid, h.id)).count() as f64 / 10.0;
    }
    println!(
        "mean precision@10 over {} cross-view queries: {:.3}",
        query_codes.len(),
        p_at_10 / query_codes.len() as f64
    );

    let query_row = 2;
    let query_id = query_set.ids()[query_row];
    println!("\nquery id {query_id} (image view), labels {:?}", show(&query_set, query_row));
    println!("top 10 by Hamming distance (ties break on ascending id):");
    for hit in db_codes.rank(query_codes.row(query_row), 10)? {
        println!("  id {:>4}  distance {:>2}  labels {:?}", hit.id, hit.distance, labels_by_id[&hit.id]);
    }

    let radius = 4;
    let within = db_codes.lookup(query_codes.row(query_row), radius)?;
    let relevant = within.iter().filter(|&&id| shares(query_id, id)).count();
    println!(
        "\nlookup within radius {radius}: {} items, {relevant} sharing a label with the query",
        within.len()
    );
    Ok(())
}
