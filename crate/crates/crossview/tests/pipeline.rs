//! Drives the command-line pipeline end to end on a small synthetic
//! corpus: data generation, embedding import, training, encoding,
//! indexing, retrieval, metrics, annotation, the alignment-weight sweep,
//! and the gradient audit, checking exit codes and output artifacts.

use std::path::{Path, PathBuf};

use crossview::cli::{run, LAMBDA_GRID};
use crossview::config::RunConfig;
use crossview::retrieval::PackedCodeSet;
use crossview::trainer::TrainConfig;
use serde_json::Value;

fn cv(args: &[&str]) -> i32 {
    let mut full = vec!["crossview"];
    full.extend_from_slice(args);
    run(full)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Small corpus plus a short schedule; every command should finish in
/// well under a second.
struct Fixture {
    dir: tempfile::TempDir,
    corpus: PathBuf,
    glove: PathBuf,
    split: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn new(n: usize, n_query: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus.bin");
        let glove = dir.path().join("vectors.txt");
        let split = dir.path().join("split.json");
        let config = dir.path().join("run.toml");
        assert_eq!(
            cv(&[
                "gen-data",
                "--out-corpus",
                path_str(&corpus),
                "--out-glove",
                path_str(&glove),
                "--n",
                &n.to_string(),
                "--categories",
                "6",
                "--feature-dim",
                "24",
                "--vocab-per-class",
                "6",
                "--seed",
                &seed.to_string(),
                "--max-words",
                "6",
                "--glove-dim",
                "8",
                "--out-split",
                path_str(&split),
                "--n-query",
                &n_query.to_string(),
                "--split-seed",
                "2",
            ]),
            0
        );

        let mut run_config = RunConfig::default();
        run_config.model.code_bits = 16;
        run_config.model.image_hidden = vec![48];
        run_config.model.text_conv1_kernels = 24;
        run_config.model.text_conv2_kernels = 24;
        run_config.model.text_fc_width = 48;
        run_config.train = TrainConfig {
            batch_size: 32,
            pretrain_iters_image: 100,
            pretrain_iters_text: 100,
            joint_iters: 200,
            ..TrainConfig::desk(0.3, 9)
        };
        run_config.save(&config).unwrap();
        Fixture { dir, corpus, glove, split, config }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn full_pipeline_produces_consistent_artifacts() {
    let fx = Fixture::new(300, 60, 4);

    // Prune the embedding table to the corpus vocabulary; the synthetic
    // table is already exactly that vocabulary, so nothing is dropped.
    let pruned = fx.path("pruned.txt");
    assert_eq!(
        cv(&[
            "import-glove",
            "--input",
            path_str(&fx.glove),
            "--output",
            path_str(&pruned),
            "--corpus",
            path_str(&fx.corpus),
        ]),
        0
    );
    assert_eq!(
        std::fs::read_to_string(&fx.glove).unwrap(),
        std::fs::read_to_string(&pruned).unwrap()
    );

    // Single-view pretraining writes a checkpoint and a per-step log.
    let pre_ckpt = fx.path("image.ckpt");
    let pre_log = fx.path("pretrain.jsonl");
    assert_eq!(
        cv(&[
            "pretrain",
            "--corpus",
            path_str(&fx.corpus),
            "--glove",
            path_str(&pruned),
            "--split",
            path_str(&fx.split),
            "--role",
            "train",
            "--config",
            path_str(&fx.config),
            "--view",
            "image",
            "--out",
            path_str(&pre_ckpt),
            "--log",
            path_str(&pre_log),
        ]),
        0
    );
    let pre_records = jsonl(&pre_log);
    assert_eq!(pre_records.len(), 100);
    assert!(pre_records[0]["loss"].as_f64().unwrap() > pre_records[99]["loss"].as_f64().unwrap());

    // Joint training over both views.
    let ckpt = fx.path("model.ckpt");
    let train_log = fx.path("train.jsonl");
    assert_eq!(
        cv(&[
            "train",
            "--corpus",
            path_str(&fx.corpus),
            "--glove",
            path_str(&pruned),
            "--split",
            path_str(&fx.split),
            "--role",
            "train",
            "--config",
            path_str(&fx.config),
            "--out",
            path_str(&ckpt),
            "--log",
            path_str(&train_log),
        ]),
        0
    );
    let train_records = jsonl(&train_log);
    assert_eq!(train_records.len(), 200);
    for r in &train_records {
        assert!(r["total"].as_f64().unwrap().is_finite());
    }

    // Codes for each view/role combination.
    let encode = |view: &str, role: &str, out: &Path| {
        assert_eq!(
            cv(&[
                "encode",
                "--corpus",
                path_str(&fx.corpus),
                "--glove",
                path_str(&pruned),
                "--split",
                path_str(&fx.split),
                "--role",
                role,
                "--checkpoint",
                path_str(&ckpt),
                "--view",
                view,
                "--out",
                path_str(out),
            ]),
            0
        );
    };
    let q_img = fx.path("q_img.codes");
    let q_txt = fx.path("q_txt.codes");
    let db_img = fx.path("db_img.codes");
    let db_txt = fx.path("db_txt.codes");
    encode("image", "query", &q_img);
    encode("text", "query", &q_txt);
    encode("image", "database", &db_img);
    encode("text", "database", &db_txt);
    let queries = PackedCodeSet::read(&q_img).unwrap();
    let database = PackedCodeSet::read(&db_txt).unwrap();
    assert_eq!(queries.len(), 60);
    assert_eq!(database.len(), 240);
    assert_eq!(queries.code_bits(), 16);

    // Indexing a code file validates and rewrites it unchanged; cutting it
    // to the role it already covers is also the identity.
    let idx = fx.path("db_txt.idx");
    assert_eq!(cv(&["index", "--codes", path_str(&db_txt), "--out", path_str(&idx)]), 0);
    assert_eq!(std::fs::read(&db_txt).unwrap(), std::fs::read(&idx).unwrap());
    let idx_role = fx.path("db_txt_role.idx");
    assert_eq!(
        cv(&[
            "index",
            "--codes",
            path_str(&db_txt),
            "--out",
            path_str(&idx_role),
            "--split",
            path_str(&fx.split),
            "--role",
            "database",
        ]),
        0
    );
    assert_eq!(std::fs::read(&db_txt).unwrap(), std::fs::read(&idx_role).unwrap());

    // Ranked retrieval: every query gets k hits with non-decreasing
    // distances.
    let hits_path = fx.path("hits.jsonl");
    assert_eq!(
        cv(&[
            "retrieve",
            "--index",
            path_str(&idx),
            "--queries",
            path_str(&q_img),
            "--k",
            "5",
            "--out",
            path_str(&hits_path),
        ]),
        0
    );
    let hit_records = jsonl(&hits_path);
    assert_eq!(hit_records.len(), 60);
    for r in &hit_records {
        let hits = r["hits"].as_array().unwrap();
        assert_eq!(hits.len(), 5);
        let distances: Vec<u64> =
            hits.iter().map(|h| h["distance"].as_u64().unwrap()).collect();
        assert!(distances.windows(2).all(|w| w[0] <= w[1]));
    }

    // Radius lookup returns ascending ids per query.
    let lookup_path = fx.path("lookup.jsonl");
    assert_eq!(
        cv(&[
            "retrieve",
            "--index",
            path_str(&idx),
            "--queries",
            path_str(&q_img),
            "--radius",
            "4",
            "--out",
            path_str(&lookup_path),
        ]),
        0
    );
    let lookup_records = jsonl(&lookup_path);
    assert_eq!(lookup_records.len(), 60);
    for r in &lookup_records {
        let ids: Vec<u64> =
            r["ids"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    // Cross-view mean average precision lands in (0, 1].
    let map_path = fx.path("map.json");
    assert_eq!(
        cv(&[
            "eval-map",
            "--queries",
            path_str(&q_img),
            "--database",
            path_str(&idx),
            "--corpus",
            path_str(&fx.corpus),
            "--out",
            path_str(&map_path),
        ]),
        0
    );
    let map_record = &jsonl(&map_path)[0];
    let map = map_record["map"].as_f64().unwrap();
    assert!(map > 0.0 && map <= 1.0, "map {map}");
    assert_eq!(map_record["queries"].as_u64().unwrap(), 60);
    assert_eq!(map_record["database"].as_u64().unwrap(), 240);
    assert_eq!(map_record["code_bits"].as_u64().unwrap(), 16);

    // Precision-recall curve: header plus one row per radius 0..=16.
    let pr_path = fx.path("pr.csv");
    assert_eq!(
        cv(&[
            "eval-pr",
            "--queries",
            path_str(&q_img),
            "--database",
            path_str(&idx),
            "--corpus",
            path_str(&fx.corpus),
            "--out",
            path_str(&pr_path),
        ]),
        0
    );
    let pr = std::fs::read_to_string(&pr_path).unwrap();
    let pr_lines: Vec<&str> = pr.lines().collect();
    assert_eq!(pr_lines[0], "radius,precision,recall,defined");
    assert_eq!(pr_lines.len(), 1 + 17);

    // Top-k annotation writes per-instance predictions.
    let pred_path = fx.path("predictions.jsonl");
    assert_eq!(
        cv(&[
            "annotate",
            "--corpus",
            path_str(&fx.corpus),
            "--glove",
            path_str(&pruned),
            "--split",
            path_str(&fx.split),
            "--role",
            "query",
            "--checkpoint",
            path_str(&ckpt),
            "--view",
            "image",
            "--k",
            "2",
            "--out",
            path_str(&pred_path),
        ]),
        0
    );
    let predictions = jsonl(&pred_path);
    assert_eq!(predictions.len(), 60);
    for p in &predictions {
        assert_eq!(p["predictions"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn sweep_covers_the_whole_lambda_grid() {
    let fx = Fixture::new(160, 40, 11);
    let mut run_config = RunConfig::load(&fx.config).unwrap();
    run_config.train.pretrain_iters_image = 40;
    run_config.train.pretrain_iters_text = 40;
    run_config.train.joint_iters = 80;
    run_config.save(&fx.config).unwrap();

    let out = fx.path("sweep.jsonl");
    assert_eq!(
        cv(&[
            "sweep-lambda",
            "--corpus",
            path_str(&fx.corpus),
            "--glove",
            path_str(&fx.glove),
            "--split",
            path_str(&fx.split),
            "--config",
            path_str(&fx.config),
            "--out",
            path_str(&out),
        ]),
        0
    );
    let records = jsonl(&out);
    assert_eq!(records.len(), LAMBDA_GRID.len());
    for (record, &lambda) in records.iter().zip(&LAMBDA_GRID) {
        assert_eq!(record["lambda"].as_f64().unwrap(), lambda);
        for key in ["map_i2t", "map_t2i", "map_i2i", "o_f1"] {
            let v = record[key].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v), "{key} = {v}");
        }
    }
}

#[test]
fn gradient_audit_command_passes() {
    assert_eq!(cv(&["grad-check"]), 0);
}

#[test]
fn usage_errors_exit_two() {
    // Unknown subcommand, missing required argument, and a retrieval mode
    // conflict are all usage errors.
    assert_eq!(cv(&["no-such-command"]), 2);
    assert_eq!(cv(&["gen-data"]), 2);
    assert_eq!(cv(&["retrieve", "--index", "x", "--queries", "y"]), 2);
    assert_eq!(
        cv(&["retrieve", "--index", "x", "--queries", "y", "--k", "3", "--radius", "2"]),
        2
    );
    // --out-split without --n-query violates the declared dependency.
    assert_eq!(
        cv(&["gen-data", "--out-corpus", "c", "--out-glove", "g", "--out-split", "s"]),
        2
    );
}

#[test]
fn contract_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let out = dir.path().join("out.bin");
    assert_eq!(
        cv(&["index", "--codes", path_str(&missing), "--out", path_str(&out)]),
        1
    );

    // Lambda outside (0, 1] fails configuration validation.
    let fx = Fixture::new(120, 30, 8);
    let ckpt = fx.path("model.ckpt");
    assert_eq!(
        cv(&[
            "train",
            "--corpus",
            path_str(&fx.corpus),
            "--glove",
            path_str(&fx.glove),
            "--config",
            path_str(&fx.config),
            "--out",
            path_str(&ckpt),
            "--lambda",
            "1.5",
        ]),
        1
    );
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cv(&["--help"]), 0);
    assert_eq!(cv(&["--version"]), 0);
}
