//! Scores a trained cross-view model: mean average precision in both
//! retrieval directions (an item is relevant when it shares at least one
//! label with the query), a shuffled-codes baseline showing how much the
//! codes actually carry, and the precision-recall trade-off over lookup
//! radii.

use crossview::embedding::OovPolicy;
use crossview::evaluation::{mean_average_precision, pr_curve, RelevanceRule};
use crossview::models::ViewModel;
use crossview::retrieval::PackedCodeSet;
use crossview::synth::{generate_synthetic, split, SynthConfig};
use crossview::trainer::{train, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> crossview::Result<()> {
    let synth = SynthConfig { n: 800, categories: 6, feature_dim: 32, seed: 20, ..SynthConfig::default() };
    let (corpus, table) = generate_synthetic(&synth)?;
    let spec = split(&corpus, 100, None, 8)?;
    let train_set = corpus.subset_by_ids(&spec.train_ids)?.to_training_set(&table, OovPolicy::Zero)?;
    let query_set = corpus.subset_by_ids(&spec.query_ids)?.to_training_set(&table, OovPolicy::Zero)?;

    let code_bits = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(30);
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
    let mut config = TrainConfig::desk(0.3, 31);
    config.pretrain_iters_image = 300;
    config.pretrain_iters_text = 300;
    config.joint_iters = 600;
    println!("training on {} paired instances...", train_set.len());
    let state = train(image, text, &train_set, &config)?;

    let image_queries = PackedCodeSet::pack(&state.image.codes(query_set.features())?, query_set.ids())?;
    let text_queries = PackedCodeSet::pack(&state.text.codes(query_set.text_vectors())?, query_set.ids())?;
    let image_db = PackedCodeSet::pack(&state.image.codes(train_set.features())?, train_set.ids())?;
    let text_db = PackedCodeSet::pack(&state.text.codes(train_set.text_vectors())?, train_set.ids())?;

    let rule = RelevanceRule::new(query_set.ids(), query_set.labels(), train_set.ids(), train_set.labels())?;
    let i2t = mean_average_precision(&image_queries, &text_db, &rule)?;
    let t2i = mean_average_precision(&text_queries, &image_db, &rule)?;
    println!("mAP image->text {i2t:.4}, text->image {t2i:.4}");

    // Shuffling which id owns which code keeps the label prior but destroys
    // the learned structure; the gap over this baseline is the signal.
    let mut shuffled = text_db.ids().to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let permuted = PackedCodeSet::pack(&text_db.unpack(), &shuffled)?;
    let baseline = mean_average_precision(&image_queries, &permuted, &rule)?;
    println!("shuffled-codes baseline image->text {baseline:.4}");

    let curve = pr_curve(&image_queries, &text_db, &rule)?;
    println!("\nprecision/recall by lookup radius (image->text):");
    for p in curve.points.iter().filter(|p| p.defined && p.radius % 2 == 0) {
        println!("  radius {:>2}  precision {:.4}  recall {:.4}", p.radius, p.precision, p.recall);
    }
    Ok(())
}
