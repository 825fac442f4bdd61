//! Top-k annotation: the classifier head scores every category from an
//! instance's binary-embedding code, the k highest-scoring categories
//! become its predicted tags, and pooled overall precision/recall/F1
//! summarize quality across the evaluation set.

use crossview::embedding::OovPolicy;
use crossview::evaluation::{annotate_topk, overall_prf};
use crossview::models::ViewModel;
use crossview::synth::{generate_synthetic, split, SynthConfig};
use crossview::trainer::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> crossview::Result<()> {
    let synth = SynthConfig { n: 800, categories: 6, feature_dim: 32, seed: 14, ..SynthConfig::default() };
    let (corpus, table) = generate_synthetic(&synth)?;
    let spec = split(&corpus, 100, None, 2)?;
    let train_set = corpus.subset_by_ids(&spec.train_ids)?.to_training_set(&table, OovPolicy::Zero)?;
    let query_set = corpus.subset_by_ids(&spec.query_ids)?.to_training_set(&table, OovPolicy::Zero)?;

    let code_bits = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
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
    let mut config = TrainConfig::desk(0.3, 8);
    config.pretrain_iters_image = 300;
    config.pretrain_iters_text = 300;
    config.joint_iters = 600;
    println!("training on {} paired instances...", train_set.len());
    let state = train(image, text, &train_set, &config)?;

    // Annotate image-view instances with their top 2 categories.
    let k = 2;
    let codes = state.image.encode(query_set.features())?;
    let logits = state.image.classifier.classify(&codes, &state.image.params)?;
    let predictions = annotate_topk(&logits, k)?;

    println!("\nfirst five annotations (predicted vs true):");
    for (row, predicted) in predictions.iter().take(5).enumerate() {
        println!(
            "  id {:>4}  predicted {predicted:?}  true {:?}",
            query_set.ids()[row],
            query_set.labels().labels_of(row)
        );
    }

    let (p, r, f1) = overall_prf(&predictions, query_set.labels())?;
    println!("\npooled over {} instances at k = {k}:", predictions.len());
    println!("overall precision {p:.4}, recall {r:.4}, F1 {f1:.4}");
    Ok(())
}
