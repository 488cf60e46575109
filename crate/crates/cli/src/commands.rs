use std::collections::HashSet;
use std::path::{Path, PathBuf};

use concept_parse::data::{
    build_leave_one_out, domain_labels, load_corpus, load_wiki_corpus, wikiwiki_to_parse_example, Corpus,
    DatasetRecord, PretrainExample,
};
use concept_parse::eval::{decode, evaluate_domain, EvalReport};
use concept_parse::io::{write_atomic, write_json, write_jsonl};
use concept_parse::model::{load_checkpoint, read_sidecar, save_checkpoint, ConceptIndex, ConceptSeq2Seq, Vocab};
use concept_parse::parse::{delinearize, to_seqlogical, tokenize_utterance, ConceptTag, Label};
use concept_parse::protocol::{
    report_tables, run_few_shot, run_zero_shot, vocab_words, ExperimentConfig, Init, RunManifest, RunOutput,
};
use concept_parse::tensor::{Precision, Real};

use crate::args::{Common, EvalArgs, Experiment, FinetuneArgs, InspectArgs, PretrainArgs, ReportArgs, TrainArgs};
use crate::fail::Fail;

type Out<T = ()> = Result<T, Fail>;

/// Config file values, then command-line overrides, validated.
fn resolve_config(common: &Common, exp: Option<&Experiment>) -> Out<ExperimentConfig> {
    let mut cfg = match &common.config {
        None => ExperimentConfig::default(),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| Fail::data(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Fail::config(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(seed) = common.seed {
        cfg.split.seed = seed;
        cfg.training.seed = seed;
    }
    if let Some(p) = common.precision {
        cfg.protocol.precision = p;
    }
    if let Some(exp) = exp {
        if let Some(seeds) = &exp.seeds {
            cfg.protocol.seeds = seeds.clone();
        }
        if let Some(b) = exp.beam {
            cfg.protocol.beam = b;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_pretrain_examples(path: &Path) -> Out<Vec<PretrainExample>> {
    let (wiki, report) = load_wiki_corpus(path)?;
    let mut examples = Vec::with_capacity(wiki.len());
    let mut dropped = 0;
    for w in &wiki {
        match wikiwiki_to_parse_example(w) {
            Ok(e) => examples.push(e),
            Err(e) => {
                dropped += 1;
                log::debug!("dropped pretraining example: {e}");
            }
        }
    }
    log::info!(
        "{}: {} lines, {} examples, {} malformed lines, {} unconvertible",
        path.display(),
        report.lines,
        examples.len(),
        report.malformed_lines,
        dropped
    );
    if examples.is_empty() {
        return Err(Fail::data(format!("{}: no usable pretraining examples", path.display())));
    }
    Ok(examples)
}

/// Load a checkpoint whose precision must equal `T`'s.
fn load_model<T: Real>(path: &Path) -> Out<(ConceptSeq2Seq<T>, Vec<ConceptTag>)> {
    let meta = read_sidecar(path)?;
    if meta.precision != T::PRECISION {
        return Err(Fail::compat(format!(
            "{} holds {:?} parameters but {:?} was requested",
            path.display(),
            meta.precision,
            T::PRECISION
        )));
    }
    let (model, meta) = load_checkpoint::<T>(path)?;
    Ok((model, meta.bank))
}

fn checkpoint_precision(path: &Path) -> Out<Precision> {
    Ok(read_sidecar(path)?.precision)
}

fn distinct_tags<'a>(tags: impl IntoIterator<Item = &'a ConceptTag>) -> Vec<ConceptTag> {
    let mut seen = HashSet::new();
    tags.into_iter().filter(|t| seen.insert(t.key.to_string())).cloned().collect()
}

pub fn pretrain(args: &PretrainArgs) -> Out {
    let cfg = resolve_config(&args.common, None)?;
    match cfg.protocol.precision {
        Precision::Single => pretrain_as::<f32>(args, &cfg),
        Precision::Double => pretrain_as::<f64>(args, &cfg),
    }
}

fn pretrain_as<T: Real>(args: &PretrainArgs, cfg: &ExperimentConfig) -> Out {
    let examples = load_pretrain_examples(&args.data)?;
    let vocab = Vocab::build(vocab_words(&[] as &[DatasetRecord], &[], &examples));
    let mut model = ConceptSeq2Seq::<T>::new(cfg.model.clone(), vocab, cfg.training.seed)?;
    let out = concept_parse::train::pretrain_wikiwiki(&mut model, &examples, &cfg.training)?;
    let tags = distinct_tags(examples.iter().flat_map(|e| &e.tags));
    let ckpt = args.common.out.join("pretrain.ckpt");
    save_checkpoint(&model, &tags, &ckpt)?;
    out.log.write(&args.common.out.join("pretrain.log.jsonl"))?;
    write_json(&args.common.out.join("pretrain.config.json"), cfg)?;
    println!(
        "pretrained on {} examples ({} over length limits) for {} epochs, {} steps",
        examples.len() - out.skipped,
        out.skipped,
        out.epochs_run,
        out.steps
    );
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

/// Write manifest, per-seed checkpoints, logs and predictions under `stem`.
fn write_run<T: Real>(out: &Path, stem: &str, run: &RunOutput<T>, bank: &[ConceptTag]) -> Out<PathBuf> {
    for (i, seed) in run.manifest.protocol.seeds.iter().enumerate() {
        let base = out.join(format!("{stem}-seed{seed}"));
        save_checkpoint(&run.models[i], bank, &with_suffix(&base, ".ckpt"))?;
        run.logs[i].write(&with_suffix(&base, ".log.jsonl"))?;
        write_jsonl(&with_suffix(&base, ".predictions.jsonl"), &run.reports[i].outcomes)?;
    }
    let path = out.join(format!("{stem}.json"));
    run.manifest.write(&path)?;
    Ok(path)
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn print_run(path: &Path, manifest: &RunManifest) -> Out {
    for r in &manifest.runs {
        println!(
            "seed {:>4}  EM {:6.2}  F1 {:6.2}  valid {:6.2}  ({} test examples, {} epochs)",
            r.seed, r.metrics.em, r.metrics.f1, r.metrics.validity, r.test_examples, r.train_epochs
        );
    }
    print!("{}", report_tables(std::slice::from_ref(manifest), None)?.to_text());
    if !manifest.is_clean() {
        log::warn!("hygiene counters are non-zero: {:?}", manifest.hygiene);
    }
    println!("manifest {}", path.display());
    Ok(())
}

pub fn train(args: &TrainArgs) -> Out {
    let mut cfg = resolve_config(&args.exp.common, Some(&args.exp))?;
    if args.no_pretrain {
        cfg.protocol.pretrain = false;
    }
    if let Some(init) = &args.init {
        let p = checkpoint_precision(init)?;
        if args.exp.common.precision.is_some_and(|q| q != p) {
            return Err(Fail::compat(format!("{} was saved at {p:?} precision", init.display())));
        }
        cfg.protocol.precision = p;
    }
    match cfg.protocol.precision {
        Precision::Single => train_as::<f32>(args, &cfg),
        Precision::Double => train_as::<f64>(args, &cfg),
    }
}

fn train_as<T: Real>(args: &TrainArgs, cfg: &ExperimentConfig) -> Out {
    let corpus = load_corpus(&args.exp.data, &cfg.split)?;
    let wiki;
    let base;
    let init: Init<'_, T> = if !cfg.protocol.pretrain {
        Init::Fresh
    } else if let Some(w) = &args.wiki {
        wiki = load_pretrain_examples(w)?;
        Init::Pretrain(&wiki)
    } else if let Some(c) = &args.init {
        base = load_model::<T>(c)?.0;
        Init::Checkpoint(&base)
    } else {
        log::warn!("no --wiki or --init given; training without pretraining");
        Init::Fresh
    };
    let run = run_zero_shot::<T>(&corpus, &args.exp.hold_out, cfg, init)?;
    let suffix = if run.manifest.protocol.pretrained { "" } else { "-nopre" };
    let stem = format!("zero-shot-{}{suffix}", args.exp.hold_out);
    let path = write_run(&args.exp.common.out, &stem, &run, &run.known_tags)?;
    print_run(&path, &run.manifest)
}

pub fn finetune(args: &FinetuneArgs) -> Out {
    let mut cfg = resolve_config(&args.exp.common, Some(&args.exp))?;
    if let Some(k) = args.spi {
        cfg.protocol.spi = k;
    }
    if args.no_pretrain {
        cfg.protocol.pretrain = false;
    }
    let p = checkpoint_precision(&args.checkpoint)?;
    if args.exp.common.precision.is_some_and(|q| q != p) {
        return Err(Fail::compat(format!("{} was saved at {p:?} precision", args.checkpoint.display())));
    }
    cfg.protocol.precision = p;
    cfg.validate()?;
    match p {
        Precision::Single => finetune_as::<f32>(args, &cfg),
        Precision::Double => finetune_as::<f64>(args, &cfg),
    }
}

fn finetune_as<T: Real>(args: &FinetuneArgs, cfg: &ExperimentConfig) -> Out {
    let (base, _) = load_model::<T>(&args.checkpoint)?;
    let corpus = load_corpus(&args.exp.data, &cfg.split)?;
    let k = cfg.protocol.spi;
    let run = run_few_shot(&corpus, &args.exp.hold_out, k, cfg, &base, cfg.protocol.pretrain)?;
    let suffix = if run.manifest.protocol.pretrained { "" } else { "-nopre" };
    let stem = format!("few-shot-{}-spi{k}{suffix}", args.exp.hold_out);
    let path = write_run(&args.exp.common.out, &stem, &run, &run.held_out_tags)?;
    print_run(&path, &run.manifest)
}

pub fn eval(args: &EvalArgs) -> Out {
    let cfg = resolve_config(&args.exp.common, Some(&args.exp))?;
    let meta = read_sidecar(&args.checkpoint)?;
    if args.exp.common.config.is_some() {
        let mut expected = cfg.model.clone();
        expected.vocab_size = meta.config.vocab_size;
        if expected != meta.config {
            return Err(Fail::compat(format!(
                "{}: model section of the config differs from the checkpoint's",
                args.checkpoint.display()
            )));
        }
    }
    match meta.precision {
        Precision::Single => eval_as::<f32>(args, &cfg),
        Precision::Double => eval_as::<f64>(args, &cfg),
    }
}

fn eval_as<T: Real>(args: &EvalArgs, cfg: &ExperimentConfig) -> Out {
    let (model, _) = load_model::<T>(&args.checkpoint)?;
    let corpus: Corpus = load_corpus(&args.exp.data, &cfg.split)?;
    let split = build_leave_one_out(&corpus, &args.exp.hold_out, &cfg.split)?.without_unsupported();
    let index = ConceptIndex::for_labels(&domain_labels(split.held_out_train.iter().chain(&split.held_out_test)))?;
    let domain = model.compile_domain(index.tags())?;
    let report: EvalReport = evaluate_domain(&model, &domain, &split.held_out_test, cfg.protocol.beam)?;
    let path = args.exp.common.out.join(format!("eval-{}.json", args.exp.hold_out));
    write_json(&path, &report)?;
    println!(
        "{}: {} examples  EM {:.2}  F1 {:.2}  valid {:.2}  (beam {})",
        args.exp.hold_out, report.examples, report.em, report.f1, report.validity, cfg.protocol.beam
    );
    println!("report {}", path.display());
    Ok(())
}

/// Manifest files named directly, or found one level inside directories.
fn manifest_paths(inputs: &[PathBuf]) -> Out<Vec<(PathBuf, bool)>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Fail::data(format!("cannot read {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    (name.starts_with("zero-shot-") || name.starts_with("few-shot-")) && name.ends_with(".json")
                        && !name.ends_with(".ckpt.json")
                })
                .collect();
            found.sort();
            out.extend(found.into_iter().map(|f| (f, false)));
        } else {
            out.push((p.clone(), true));
        }
    }
    Ok(out)
}

pub fn report(args: &ReportArgs) -> Out {
    let mut manifests = Vec::new();
    for (path, explicit) in manifest_paths(&args.manifests)? {
        match RunManifest::read(&path) {
            Ok(m) => manifests.push(m),
            Err(e) if explicit => return Err(e.into()),
            Err(e) => log::debug!("skipping {}: {e}", path.display()),
        }
    }
    if manifests.is_empty() {
        return Err(Fail::data("no run manifests found"));
    }
    let table = report_tables(&manifests, args.metric)?;
    let text = table.to_text();
    print!("{text}");
    if let Some(dir) = &args.out {
        write_atomic(&dir.join("table.csv"), table.to_csv().as_bytes())?;
        write_atomic(&dir.join("table.txt"), text.as_bytes())?;
    }
    Ok(())
}

pub fn inspect(args: &InspectArgs) -> Out {
    let utterance = tokenize_utterance(&args.utterance)?;
    if args.top == 0 || args.beam == 0 {
        return Err(Fail::config("--top and --beam must be at least 1"));
    }
    let tags = match &args.labels {
        Some(names) => {
            let labels: Vec<Label> = names.iter().map(|n| Label::new(n.trim())).collect();
            ConceptIndex::for_labels(&labels)?.tags().to_vec()
        }
        None => Vec::new(),
    };
    match checkpoint_precision(&args.checkpoint)? {
        Precision::Single => inspect_as::<f32>(args, &utterance, tags),
        Precision::Double => inspect_as::<f64>(args, &utterance, tags),
    }
}

fn inspect_as<T: Real>(args: &InspectArgs, utt: &concept_parse::parse::Utterance, tags: Vec<ConceptTag>) -> Out {
    let (model, bank) = load_model::<T>(&args.checkpoint)?;
    let tags = if tags.is_empty() { bank } else { tags };
    if tags.is_empty() {
        return Err(Fail::config("checkpoint has no concepts; pass --labels"));
    }
    let domain = model.compile_domain(&tags)?;
    let hyp = decode(&model, &domain, utt, args.beam)?;
    println!("utterance  {}", utt.raw());
    println!("target     {}", hyp.tokens.to_strings().join(" "));
    match delinearize(&hyp.tokens, utt) {
        Ok(tree) if hyp.valid => {
            println!("parse      {}", to_seqlogical(&tree, utt)?);
            println!("tree       {tree}");
        }
        _ => println!("parse      (not a well-formed tree)"),
    }
    println!("log prob   {:.4}", hyp.log_prob);

    let src = model.encode_source(utt)?;
    let mut state = model.start();
    let mut prev = None;
    for (step, &chosen) in hyp.indices.iter().enumerate() {
        let (dist, next) = model.decode_step_compiled(&state, prev.as_ref(), &src, &domain)?;
        let cells: Vec<String> = dist
            .top_k(args.top)
            .into_iter()
            .map(|(i, p)| {
                let mark = if i == chosen { "*" } else { " " };
                format!("{mark}{} {:.4}", domain.index().token(i), p.f64())
            })
            .collect();
        println!("step {:>3}  {}", step + 1, cells.join("  "));
        prev = Some(domain.index().token(chosen));
        state = next;
    }
    Ok(())
}
