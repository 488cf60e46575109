//! End-to-end zero-shot and few-shot protocols with reproducible manifests.

mod config;
mod manifest;
mod report;

use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, MetricKind, ProtocolConfig};
pub use manifest::{Fingerprints, Hygiene, Metrics, Protocol, ProtocolKind, RunManifest, SeedRun};
pub use report::{report_tables, ResultTable};

use manifest::{count_leaks, count_unsupported, hash_set};

use crate::data::{
    build_leave_one_out, domain_labels, fingerprint_records, sample_spi, Corpus, DatasetRecord, DomainSplit,
    PretrainExample, SpiConfig,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_domain, EvalReport};
use crate::model::{ConceptIndex, ConceptSeq2Seq, Vocab};
use crate::parse::ConceptTag;
use crate::tensor::{checkpoint, Real};
use crate::train::{fewshot_finetune, pretrain_wikiwiki, train_known_domains, FewShotTask, MetricsLog};

/// Starting point of a zero-shot run.
#[derive(Clone, Copy, Debug)]
pub enum Init<'a, T: Real> {
    /// Random initialization, no pretraining.
    Fresh,
    /// Random initialization, then concept pretraining on these examples.
    Pretrain(&'a [PretrainExample]),
    /// Continue from an already pretrained model.
    Checkpoint(&'a ConceptSeq2Seq<T>),
}

/// Words for a source vocabulary: utterance tokens, tag descriptions and
/// pretraining text.
pub fn vocab_words<'a>(
    records: impl IntoIterator<Item = &'a DatasetRecord>,
    tags: &'a [ConceptTag],
    pretrain: &'a [PretrainExample],
) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for r in records {
        words.extend(r.utterance.tokens().iter().cloned());
    }
    for t in tags.iter().chain(pretrain.iter().flat_map(|p| &p.tags)) {
        words.extend(t.description.split_whitespace().map(str::to_owned));
    }
    for p in pretrain {
        words.extend(p.utterance.tokens().iter().cloned());
    }
    words
}

/// Hex SHA-256 over the pretraining examples' text and targets.
pub fn fingerprint_pretrain(examples: &[PretrainExample]) -> String {
    let mut h = Sha256::new();
    for e in examples {
        h.update(e.utterance.raw().as_bytes());
        h.update(b"\t");
        h.update(e.target.to_strings().join(" ").as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn fingerprint_params<T: Real>(model: &ConceptSeq2Seq<T>) -> String {
    hex(&Sha256::digest(checkpoint::encode_params(model.params())))
}

fn labels_index<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Result<ConceptIndex> {
    ConceptIndex::for_labels(&domain_labels(records))
}

fn split_fingerprints(split: &DomainSplit, vocab: &Vocab) -> Fingerprints {
    Fingerprints {
        known_train: fingerprint_records(&split.known_train),
        known_valid: fingerprint_records(&split.known_valid),
        held_out_train: fingerprint_records(&split.held_out_train),
        held_out_test: fingerprint_records(&split.held_out_test),
        few_shot: Default::default(),
        pretrain: None,
        vocab: vocab.fingerprint(),
    }
}

fn check_domains(corpus: &Corpus) -> Result<()> {
    let n = corpus.domains().len();
    if n < 2 {
        return Err(Error::NeedTwoDomains(n));
    }
    Ok(())
}

/// Every record of `domain` anywhere in the corpus, as content hashes.
fn domain_hashes(corpus: &Corpus, domain: &str) -> std::collections::BTreeSet<String> {
    let all: Vec<DatasetRecord> = corpus
        .train
        .iter()
        .chain(&corpus.test)
        .filter(|r| r.domain == domain)
        .cloned()
        .collect();
    hash_set(&all)
}

/// Models, reports and logs of a run, one entry per seed.
#[derive(Clone, Debug)]
pub struct RunOutput<T: Real> {
    pub manifest: RunManifest,
    pub models: Vec<ConceptSeq2Seq<T>>,
    pub reports: Vec<EvalReport>,
    pub logs: Vec<MetricsLog>,
    /// Tags the models were trained against.
    pub known_tags: Vec<ConceptTag>,
    /// Tags of the held-out domain, compiled for evaluation.
    pub held_out_tags: Vec<ConceptTag>,
}

/// Optional pretraining, known-domain training on the leave-one-out split
/// without unsupported utterances, then beam evaluation on the held-out
/// domain's compiled concepts. One model per configured seed.
pub fn run_zero_shot<T: Real>(
    corpus: &Corpus,
    held_out: &str,
    cfg: &ExperimentConfig,
    init: Init<'_, T>,
) -> Result<RunOutput<T>> {
    cfg.validate()?;
    check_domains(corpus)?;
    let split = build_leave_one_out(corpus, held_out, &cfg.split)?.without_unsupported();
    if split.held_out_test.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let known_index = labels_index(split.known_train.iter().chain(&split.known_valid))?;
    let held_index = labels_index(split.held_out_train.iter().chain(&split.held_out_test))?;
    let wiki: &[PretrainExample] = match init {
        Init::Pretrain(w) => w,
        _ => &[],
    };
    let words = vocab_words(split.known_train.iter().chain(&split.known_valid), known_index.tags(), wiki);

    let mut resolved = cfg.clone();
    let mut runs = Vec::new();
    let mut models = Vec::new();
    let mut reports = Vec::new();
    let mut logs = Vec::new();
    for &seed in &cfg.protocol.seeds {
        let tc = cfg.training_for(seed);
        let mut log = MetricsLog::default();
        let mut model = match init {
            Init::Checkpoint(base) => {
                let mut m = base.clone();
                m.extend_vocab(&words, seed)?;
                m
            }
            _ => ConceptSeq2Seq::new(cfg.model.clone(), Vocab::build(&words), seed)?,
        };
        if let Init::Pretrain(examples) = init {
            let pre = pretrain_wikiwiki(&mut model, examples, &tc)?;
            log.rows.extend(pre.log.rows);
        }
        let out = train_known_domains(&mut model, &split.known_train, &split.known_valid, &tc)?;
        log.rows.extend(out.log.rows);
        let domain = model.compile_domain(held_index.tags())?;
        let report = evaluate_domain(&model, &domain, &split.held_out_test, cfg.protocol.beam)?;
        log::info!("zero-shot {held_out} seed {seed}: EM {:.2} F1 {:.2}", report.em, report.f1);
        runs.push(SeedRun {
            seed,
            metrics: Metrics::from(&report),
            test_examples: report.examples,
            train_epochs: out.epochs_run,
            best_valid: out.best_valid,
            few_shot_size: None,
        });
        resolved.model = model.config().clone();
        models.push(model);
        reports.push(report);
        logs.push(log);
    }

    let mut fingerprints = split_fingerprints(&split, models[0].vocab());
    fingerprints.pretrain = match init {
        Init::Fresh => None,
        Init::Pretrain(w) => Some(fingerprint_pretrain(w)),
        Init::Checkpoint(base) => Some(format!("checkpoint:{}", fingerprint_params(base))),
    };
    let forbidden = domain_hashes(corpus, held_out);
    let known: Vec<DatasetRecord> = split.known_train.iter().chain(&split.known_valid).cloned().collect();
    let hygiene = Hygiene {
        held_out_in_training: count_leaks(&known, held_out, &forbidden),
        held_out_in_rehearsal: 0,
        test_in_few_shot: 0,
        unsupported_filtered: true,
        unsupported_in_train: count_unsupported(&known),
        unsupported_in_test: count_unsupported(&split.held_out_test),
    };
    let average = Metrics::mean(&runs.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>());
    let manifest = RunManifest {
        protocol: Protocol {
            kind: ProtocolKind::ZeroShot,
            held_out: held_out.to_owned(),
            spi: None,
            seeds: cfg.protocol.seeds.clone(),
            pretrained: !matches!(init, Init::Fresh),
        },
        metric: cfg.protocol.metric,
        config: resolved,
        fingerprints,
        hygiene,
        runs,
        average,
    };
    Ok(RunOutput {
        manifest,
        models,
        reports,
        logs,
        known_tags: known_index.tags().to_vec(),
        held_out_tags: held_index.tags().to_vec(),
    })
}

/// The pretrained and non-pretrained variants on the same split and seeds.
pub fn run_zero_shot_ablation<T: Real>(
    corpus: &Corpus,
    held_out: &str,
    cfg: &ExperimentConfig,
    pretrain: &[PretrainExample],
) -> Result<[RunOutput<T>; 2]> {
    Ok([
        run_zero_shot(corpus, held_out, cfg, Init::Pretrain(pretrain))?,
        run_zero_shot(corpus, held_out, cfg, Init::Fresh)?,
    ])
}

/// For each seed: sample `k` SPI from the held-out domain's training side,
/// fine-tune a copy of `base` with rehearsal, evaluate on the held-out test
/// records. Unsupported utterances are kept.
pub fn run_few_shot<T: Real>(
    corpus: &Corpus,
    held_out: &str,
    k: usize,
    cfg: &ExperimentConfig,
    base: &ConceptSeq2Seq<T>,
    base_pretrained: bool,
) -> Result<RunOutput<T>> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::Config("spi must be at least 1".into()));
    }
    check_domains(corpus)?;
    let split = build_leave_one_out(corpus, held_out, &cfg.split)?;
    if split.held_out_test.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let known_index = labels_index(split.known_train.iter().chain(&split.known_valid))?;
    let held_index = labels_index(split.held_out_train.iter().chain(&split.held_out_test))?;
    let test_hashes = hash_set(&split.held_out_test);

    let mut resolved = cfg.clone();
    resolved.protocol.spi = k;
    let mut runs = Vec::new();
    let mut models = Vec::new();
    let mut reports = Vec::new();
    let mut logs = Vec::new();
    let mut few_prints = std::collections::BTreeMap::new();
    let mut test_in_few = 0;
    let mut unsupported_few = 0;
    for &seed in &cfg.protocol.seeds {
        let few = sample_spi(&split.held_out_train, SpiConfig { k, seed });
        if few.is_empty() {
            return Err(Error::EmptyFewShot);
        }
        test_in_few += few.iter().filter(|r| test_hashes.contains(&fingerprint_records(std::iter::once(*r)))).count();
        unsupported_few += count_unsupported(&few);
        few_prints.insert(seed, fingerprint_records(&few));
        let mut model = base.clone();
        model.extend_vocab(vocab_words(&few, held_index.tags(), &[]), seed)?;
        let task = FewShotTask {
            few: &few,
            few_index: &held_index,
            known: &split.known_train,
            known_index: &known_index,
        };
        let tc = cfg.training_for(seed);
        let out = fewshot_finetune(&mut model, &task, &tc)?;
        let domain = model.compile_domain(held_index.tags())?;
        let report = evaluate_domain(&model, &domain, &split.held_out_test, cfg.protocol.beam)?;
        log::info!("few-shot {held_out} spi {k} seed {seed}: EM {:.2} F1 {:.2}", report.em, report.f1);
        runs.push(SeedRun {
            seed,
            metrics: Metrics::from(&report),
            test_examples: report.examples,
            train_epochs: out.epochs_run,
            best_valid: out.best_valid,
            few_shot_size: Some(few.len()),
        });
        resolved.model = model.config().clone();
        models.push(model);
        reports.push(report);
        logs.push(out.log);
    }

    let mut fingerprints = split_fingerprints(&split, base.vocab());
    fingerprints.few_shot = few_prints;
    fingerprints.pretrain = Some(format!("checkpoint:{}", fingerprint_params(base)));
    let forbidden = domain_hashes(corpus, held_out);
    let known: Vec<DatasetRecord> = split.known_train.iter().chain(&split.known_valid).cloned().collect();
    let hygiene = Hygiene {
        held_out_in_training: count_leaks(&known, held_out, &forbidden),
        held_out_in_rehearsal: count_leaks(&split.known_train, held_out, &forbidden),
        test_in_few_shot: test_in_few,
        unsupported_filtered: false,
        unsupported_in_train: count_unsupported(&known) + unsupported_few,
        unsupported_in_test: count_unsupported(&split.held_out_test),
    };
    let average = Metrics::mean(&runs.iter().map(|r| r.metrics.clone()).collect::<Vec<_>>());
    let manifest = RunManifest {
        protocol: Protocol {
            kind: ProtocolKind::FewShot,
            held_out: held_out.to_owned(),
            spi: Some(k),
            seeds: cfg.protocol.seeds.clone(),
            pretrained: base_pretrained,
        },
        metric: cfg.protocol.metric,
        config: resolved,
        fingerprints,
        hygiene,
        runs,
        average,
    };
    Ok(RunOutput {
        manifest,
        models,
        reports,
        logs,
        known_tags: known_index.tags().to_vec(),
        held_out_tags: held_index.tags().to_vec(),
    })
}
