//! Loads a word-embedding table in the whitespace-separated text format
//! (token followed by its vector, one entry per line) and turns token
//! lists into fixed-width concatenated vectors under both out-of-vocabulary
//! policies.

use std::io::Write;

use crossview::embedding::{normalize_token, vectorize, GloveTable, OovPolicy};

fn main() -> crossview::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("vectors.txt");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "red 0.9 0.1 0.0")?;
    writeln!(f, "sky 0.0 0.2 0.8")?;
    writeln!(f, "sunset 0.7 0.3 0.2")?;
    drop(f);

    let table = GloveTable::load(&path)?;
    println!("loaded {} tokens of dimension {}", table.len(), table.dimension());

    // Tokens are lowercased and stripped of surrounding punctuation before
    // lookup, so "Red," matches the entry for "red".
    let tokens: Vec<String> =
        ["Red,", "sky", "at", "night"].iter().map(|t| t.to_string()).collect();
    for t in &tokens {
        println!("  {:?} normalizes to {:?}", t, normalize_token(t));
    }

    // Zero policy: unknown words consume a slot of zeros.
    let zeroed = vectorize(&tokens, &table, 5, OovPolicy::Zero)?;
    // Skip policy: unknown words are dropped, later words shift forward.
    let skipped = vectorize(&tokens, &table, 5, OovPolicy::Skip)?;
    println!("zero policy: used {} of 5 slots", zeroed.used_words);
    println!("  {:?}", zeroed.data);
    println!("skip policy: used {} of 5 slots", skipped.used_words);
    println!("  {:?}", skipped.data);
    Ok(())
}
