//! Trains both view models on a small synthetic corpus: per-view
//! classification pretraining first, then the joint phase that balances
//! classification against cross-view code alignment. Prints the loss
//! trajectory as it goes.

use crossview::embedding::OovPolicy;
use crossview::models::ViewModel;
use crossview::nn::LrSchedule;
use crossview::synth::{generate_synthetic, SynthConfig};
use crossview::trainer::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> crossview::Result<()> {
    let synth = SynthConfig { n: 600, categories: 6, feature_dim: 32, seed: 5, ..SynthConfig::default() };
    let (corpus, table) = generate_synthetic(&synth)?;
    let set = corpus.to_training_set(&table, OovPolicy::Zero)?;

    let code_bits = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
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

    let config = TrainConfig {
        lambda: 0.3,
        pretrain_rate: LrSchedule::constant(0.5),
        joint_rate: LrSchedule { base_rate: 0.5, decay_factor: 0.9, decay_every: 150 },
        batch_size: 64,
        pretrain_iters_image: 300,
        pretrain_iters_text: 300,
        joint_iters: 600,
        seed: 2,
    };
    let state = train(image, text, &set, &config)?;

    let milestone = |h: &[f64]| {
        let pick = [0, h.len() / 4, h.len() / 2, 3 * h.len() / 4, h.len() - 1];
        pick.map(|i| format!("{:.4}", h[i])).join(" -> ")
    };
    println!("image pretraining loss: {}", milestone(&state.pretrain_history_image));
    println!("text pretraining loss:  {}", milestone(&state.pretrain_history_text));

    println!("\njoint phase (lambda = {}):", config.lambda);
    println!("{:>5}  {:>8}  {:>8}  {:>8}  {:>8}", "iter", "L_image", "L_text", "J_align", "total");
    for (i, r) in state.history.iter().enumerate() {
        if i % 100 == 0 || i + 1 == state.history.len() {
            println!(
                "{:>5}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
                i, r.l_image, r.l_text, r.j_align, r.total
            );
        }
    }

    let first = state.history.first().unwrap().total;
    let last = state.history.last().unwrap().total;
    println!("\njoint total went {first:.4} -> {last:.4} over {} iterations", state.history.len());
    Ok(())
}
