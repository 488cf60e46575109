use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use concept_parse::data::{domain_labels, DatasetRecord};
use concept_parse::model::{save_checkpoint, sidecar_path, ConceptIndex, ConceptSeq2Seq, ModelConfig, Vocab};
use concept_parse::parse::to_seqlogical;
use concept_parse::protocol::{vocab_words, RunManifest};
use concept_parse::synth::{alarm, music, weather, wiki_corpus, DISTANCE_ANNOTATION, DISTANCE_UTTERANCE};
use concept_parse::train::{train_known_domains, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const QUICK: &str = r#"
[model]
d_model = 16
encoder_layers = 1
encoder_heads = 2
decoder_layers = 1
decoder_heads = 2
concept_layers = 1
concept_heads = 2
max_source_len = 24
max_target_len = 40
ff_width = 32

[training]
batch_size = 8
epochs = 2
patience = 2
pretrain_epochs = 1
fewshot_epochs = 2
fewshot_eval_every = 1
learning_rate = 0.003

[protocol]
seeds = [1]
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_concept-parse"));
    c.env("CONCEPT_PARSE_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A TSV corpus with weather, alarm and music records, plus a quick config.
fn workspace() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut body = String::from("domain\tutterance\tsemantic_parse\n");
    for g in [weather(), alarm(), music()] {
        for r in g.sample(25, &mut rng).unwrap() {
            let parse = to_seqlogical(&r.tree, &r.utterance).unwrap();
            body.push_str(&format!("{}\t{}\t{parse}\n", r.domain, r.utterance.raw()));
        }
    }
    let data = dir.path().join("corpus.tsv");
    std::fs::write(&data, body).unwrap();
    let cfg = dir.path().join("quick.toml");
    std::fs::write(&cfg, QUICK).unwrap();
    (dir, data, cfg)
}

fn write_wiki(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("wiki.jsonl");
    let lines: Vec<String> = wiki_corpus(n, 4).iter().map(|e| serde_json::to_string(e).unwrap()).collect();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn help_lists_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("pretrain", &["--config", "--data", "--out", "--seed", "--precision"]),
        (
            "train",
            &["--config", "--data", "--hold-out", "--seeds", "--beam", "--no-pretrain", "--out", "--seed", "--precision"],
        ),
        ("finetune", &["--config", "--data", "--hold-out", "--spi", "--seeds", "--beam", "--checkpoint", "--out"]),
        ("eval", &["--config", "--data", "--hold-out", "--checkpoint", "--beam", "--out"]),
        ("report", &["--metric", "--out"]),
        ("inspect", &["--checkpoint", "--utterance", "--labels", "--beam", "--top"]),
    ];
    for (cmd, flags) in expected {
        let o = run(&[cmd, "--help"]);
        assert_eq!(code(&o), 0, "{cmd} --help");
        let text = stdout(&o);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn pretrain_writes_checkpoint_and_log() {
    let (dir, _, cfg) = workspace();
    let wiki = write_wiki(dir.path(), 24);
    let out = dir.path().join("pre");
    let o = run(&["pretrain", "--config", s(&cfg), "--data", s(&wiki), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("pretrain.ckpt").exists());
    assert!(sidecar_path(&out.join("pretrain.ckpt")).exists());
    let log = std::fs::read_to_string(out.join("pretrain.log.jsonl")).unwrap();
    assert!(!log.trim().is_empty());
}

#[test]
fn missing_data_and_bad_config_have_distinct_codes() {
    let (dir, _, cfg) = workspace();
    let missing = dir.path().join("nope.jsonl");
    let o = run(&["pretrain", "--config", s(&cfg), "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nope.jsonl"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nd_model = \"wide\"\n").unwrap();
    let wiki = write_wiki(dir.path(), 4);
    assert_eq!(code(&run(&["pretrain", "--config", s(&bad), "--data", s(&wiki)])), 2);
    std::fs::write(&bad, "[model]\nlayers = 3\n").unwrap();
    assert_eq!(code(&run(&["pretrain", "--config", s(&bad), "--data", s(&wiki)])), 2);
    std::fs::write(&bad, "[model]\nd_model = 15\n").unwrap();
    assert_eq!(code(&run(&["pretrain", "--config", s(&bad), "--data", s(&wiki)])), 2);
}

#[test]
fn train_finetune_eval_report() {
    let (dir, data, cfg) = workspace();
    let out = dir.path().join("runs");
    let train = |out: &Path| {
        run(&[
            "train", "--config", s(&cfg), "--data", s(&data), "--hold-out", "alarm", "--no-pretrain", "--out", s(out),
        ])
    };
    let o = train(&out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest_path = out.join("zero-shot-alarm-nopre.json");
    let first = std::fs::read(&manifest_path).unwrap();
    let m = RunManifest::read(&manifest_path).unwrap();
    assert!(!m.protocol.pretrained);
    assert!(m.is_clean());
    assert_eq!(m.config.model.d_model, 16);
    assert!(stdout(&o).contains("EM (%)"));

    // reruns reproduce every artifact byte for byte
    let ckpt = out.join("zero-shot-alarm-nopre-seed1.ckpt");
    let ckpt_bytes = std::fs::read(&ckpt).unwrap();
    assert_eq!(code(&train(&out)), 0);
    assert_eq!(std::fs::read(&manifest_path).unwrap(), first);
    assert_eq!(std::fs::read(&ckpt).unwrap(), ckpt_bytes);

    let o = run(&[
        "finetune", "--config", s(&cfg), "--data", s(&data), "--hold-out", "alarm", "--spi", "5", "--seeds", "1,2,3",
        "--checkpoint", s(&ckpt), "--no-pretrain", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let few = RunManifest::read(&out.join("few-shot-alarm-spi5-nopre.json")).unwrap();
    assert_eq!(few.runs.len(), 3);
    assert_eq!(few.protocol.spi, Some(5));
    let mean = few.runs.iter().map(|r| r.metrics.em).sum::<f64>() / 3.0;
    assert!((few.average.em - mean).abs() < 1e-9);

    let o = run(&["eval", "--data", s(&data), "--hold-out", "alarm", "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("eval-alarm.json").exists());

    let table_dir = dir.path().join("tables");
    let o = run(&["report", s(&out), "--out", s(&table_dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("alarm"));
    let csv = std::fs::read_to_string(table_dir.join("table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(code(&run(&["report", s(&dir.path().join("missing.json"))])), 3);
}

#[test]
fn eval_rejects_a_checkpoint_with_another_vocabulary() {
    let (dir, data, cfg) = workspace();
    let out = dir.path().join("runs");
    let o = run(&[
        "train", "--config", s(&cfg), "--data", s(&data), "--hold-out", "music", "--no-pretrain", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ckpt = out.join("zero-shot-music-nopre-seed1.ckpt");
    let eval = |ckpt: &Path| {
        run(&["eval", "--config", s(&cfg), "--data", s(&data), "--hold-out", "music", "--checkpoint", s(ckpt)])
    };

    // swap in the vocabulary of a model built from different words
    let side = sidecar_path(&ckpt);
    let mut meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&side).unwrap()).unwrap();
    let other = Vocab::build(["entirely", "different", "words"].map(String::from));
    meta["vocab"] = serde_json::to_value(&other).unwrap();
    std::fs::write(&side, serde_json::to_string(&meta).unwrap()).unwrap();
    assert_eq!(code(&eval(&ckpt)), 4);

    // an architecture mismatch against --config is also a compatibility error
    let o = run(&[
        "train", "--config", s(&cfg), "--data", s(&data), "--hold-out", "music", "--no-pretrain", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let wide = dir.path().join("wide.toml");
    std::fs::write(&wide, QUICK.replace("d_model = 16", "d_model = 32")).unwrap();
    let o = run(&["eval", "--config", s(&wide), "--data", s(&data), "--hold-out", "music", "--checkpoint", s(&ckpt)]);
    assert_eq!(code(&o), 4);

    std::fs::write(&ckpt, b"garbage").unwrap();
    assert_eq!(code(&eval(&ckpt)), 4);
}

/// Overfit the running example so inspect has a known answer.
fn overfit_checkpoint(dir: &Path) -> (PathBuf, DatasetRecord) {
    let record = DatasetRecord::from_annotation("navigation", DISTANCE_UTTERANCE, DISTANCE_ANNOTATION).unwrap();
    let records = vec![record.clone()];
    let index = ConceptIndex::for_labels(&domain_labels(&records)).unwrap();
    let vocab = Vocab::build(vocab_words(&records, index.tags(), &[]));
    let cfg = ModelConfig {
        max_source_len: 16,
        ..ModelConfig::tiny(32, 1)
    };
    let mut model = ConceptSeq2Seq::<f32>::new(cfg, vocab, 1).unwrap();
    let tc = TrainConfig {
        epochs: 400,
        patience: 400,
        learning_rate: 3e-3,
        warmup: 0.0,
        ..Default::default()
    };
    let out = train_known_domains(&mut model, &records, &records, &tc).unwrap();
    assert_eq!(out.best_valid, 100.0);
    let path = dir.join("toy.ckpt");
    save_checkpoint(&model, index.tags(), &path).unwrap();
    (path, record)
}

#[test]
fn inspect_prints_the_parse_and_ranked_steps() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, record) = overfit_checkpoint(dir.path());
    // greedy decoding reproduces gold once every teacher-forced step is right
    let o = run(&["inspect", "--checkpoint", s(&ckpt), "--utterance", DISTANCE_UTTERANCE, "--beam", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let gold = to_seqlogical(&record.tree, &record.utterance).unwrap();
    assert!(text.contains(&format!("parse      {gold}")), "{text}");

    let steps: Vec<&str> = text.lines().filter(|l| l.starts_with("step")).collect();
    assert_eq!(steps.len(), record.target.len());
    for line in steps {
        let probs: Vec<f64> = line
            .split_whitespace()
            .skip(2)
            .skip(1)
            .step_by(2)
            .map(|p| p.parse().unwrap())
            .collect();
        assert_eq!(probs.len(), 5, "{line}");
        assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(probs.windows(2).all(|w| w[0] >= w[1]), "{line}");
    }

    let o = run(&["inspect", "--checkpoint", s(&ckpt), "--utterance", "   "]);
    assert_eq!(code(&o), 2);
    let o = run(&["inspect", "--checkpoint", s(&dir.path().join("none.ckpt")), "--utterance", "hi"]);
    assert_eq!(code(&o), 3);
    let o = run(&["inspect", "--checkpoint", s(&ckpt), "--utterance", "how far", "--labels", "IN:GET_DISTANCE"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
