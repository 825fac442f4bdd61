//! Persists trained models to a self-describing binary checkpoint (layer
//! shapes, weights, and batch-normalization statistics) alongside the TOML
//! run configuration, restores them, and shows the restored models emit
//! bit-identical codes.

use crossview::checkpoint::Checkpoint;
use crossview::config::RunConfig;
use crossview::embedding::OovPolicy;
use crossview::synth::{generate_synthetic, SynthConfig};
use crossview::trainer::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> crossview::Result<()> {
    let synth = SynthConfig { n: 400, categories: 6, feature_dim: 24, seed: 3, ..SynthConfig::default() };
    let (corpus, table) = generate_synthetic(&synth)?;
    let set = corpus.to_training_set(&table, OovPolicy::Zero)?;

    let mut run = RunConfig::default();
    run.model.code_bits = 16;
    run.model.image_hidden = vec![48];
    run.train = TrainConfig {
        pretrain_iters_image: 150,
        pretrain_iters_text: 150,
        joint_iters: 300,
        ..TrainConfig::desk(0.3, 9)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(run.train.seed);
    let (image, text) = run.build_models(
        corpus.feature_dim(),
        corpus.glove_dim(),
        corpus.max_words(),
        corpus.categories(),
        &mut rng,
    )?;
    let state = train(image, text, &set, &run.train)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("trained.ckpt");
    let ckpt = Checkpoint {
        meta: run.to_toml(),
        iteration: state.iteration,
        models: vec![("image".into(), state.image.clone()), ("text".into(), state.text.clone())],
    };
    ckpt.write(&path)?;
    println!("wrote checkpoint: {} bytes", std::fs::metadata(&path)?.len());

    let mut restored = Checkpoint::read(&path)?;
    let image_back = restored.take_model("image")?;
    let text_back = restored.take_model("text")?;
    let meta: RunConfig = RunConfig::from_toml(&restored.meta)?;
    println!("restored at iteration {}, code_bits {}", restored.iteration, meta.model.code_bits);

    let before = state.image.codes(set.features())?;
    let after = image_back.codes(set.features())?;
    assert_eq!(before, after);
    let before_t = state.text.codes(set.text_vectors())?;
    let after_t = text_back.codes(set.text_vectors())?;
    assert_eq!(before_t, after_t);
    println!("restored models reproduce all {} codes bit-for-bit", 2 * set.len());
    Ok(())
}
