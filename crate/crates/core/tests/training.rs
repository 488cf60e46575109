use concept_parse::data::{domain_labels, wikiwiki_to_parse_example, DatasetRecord, PretrainExample};
use concept_parse::model::{ConceptIndex, ConceptSeq2Seq, ModelConfig, Vocab};
use concept_parse::protocol::vocab_words;
use concept_parse::synth::{overfit_corpus, wiki_corpus};
use concept_parse::tensor::{AdamConfig, Graph, Schedule};
use concept_parse::train::{
    accumulate_batch_ce, batch_ce, fewshot_finetune, fewshot_loss, pretrain_step, pretrain_wikiwiki, sequence_nll,
    train_known_domains, FewShotTask, Pair, PretrainBatch, TrainConfig,
};
use concept_parse::Error;

fn wiki(n: usize) -> Vec<PretrainExample> {
    wiki_corpus(n, 11).iter().map(|e| wikiwiki_to_parse_example(e).unwrap()).collect()
}

fn model_for(records: &[DatasetRecord], pretrain: &[PretrainExample], d: usize) -> (ConceptSeq2Seq<f64>, Option<ConceptIndex>) {
    let index = ConceptIndex::for_labels(&domain_labels(records)).ok();
    let tags = index.as_ref().map(|i| i.tags().to_vec()).unwrap_or_default();
    let vocab = Vocab::build(vocab_words(records, &tags, pretrain));
    let model = ConceptSeq2Seq::new(ModelConfig::tiny(d, 1), vocab, 5).unwrap();
    (model, index)
}

fn small_records() -> Vec<DatasetRecord> {
    overfit_corpus(6, 2)
        .unwrap()
        .into_iter()
        .filter(|r| r.utterance.len() <= 16 && r.target.len() <= 24)
        .collect()
}

fn pairs(records: &[DatasetRecord]) -> Vec<Pair<'_>> {
    records.iter().map(|r| (&r.utterance, &r.target)).collect()
}

#[test]
fn batch_union_restricts_the_bank() {
    let ex = wiki(30);
    let two: Vec<PretrainExample> = ex.iter().filter(|e| e.tags.len() == 4).take(1).cloned().collect();
    let b = PretrainBatch::new(two).unwrap();
    assert_eq!(b.union.len(), 4);
    let one: Vec<PretrainExample> = ex.iter().filter(|e| e.tags.len() == 2).take(1).cloned().collect();
    assert_eq!(PretrainBatch::new(one).unwrap().union.len(), 2);
    for e in &ex[..8] {
        for k in e.target.concepts() {
            assert!(PretrainBatch::new(ex[..8].to_vec()).unwrap().union.contains(&k));
        }
    }
}

#[test]
fn pretrain_step_loss_equals_restricted_full_ce() {
    let ex = wiki(24);
    let (mut model, _) = model_for(&[], &ex, 8);
    let adam = AdamConfig::default();
    let sched = Schedule::new(1e-3, 0.0, 10);
    for (t, chunk) in ex.chunks(6).enumerate() {
        let batch = PretrainBatch::new(chunk.to_vec()).unwrap();
        let bank = model.encode_concepts(batch.union.tags()).unwrap();
        let expected = batch_ce(&model, &batch.pairs(), &bank).unwrap();
        let got = pretrain_step(&mut model, &batch, &adam, &sched, t as u64).unwrap();
        assert_eq!(got.to_bits(), expected.to_bits());
    }
}

#[test]
fn rehearsal_loss_is_affine_in_lambda() {
    let recs = small_records();
    let (few, known) = recs.split_at(4);
    let (model, _) = model_for(&recs, &[], 8);
    let few_index = ConceptIndex::for_labels(&domain_labels(few)).unwrap();
    let known_index = ConceptIndex::for_labels(&domain_labels(known)).unwrap();
    let task = FewShotTask {
        few,
        few_index: &few_index,
        known,
        known_index: &known_index,
    };
    let fb = model.encode_index(few_index.clone()).unwrap();
    let kb = model.encode_index(known_index.clone()).unwrap();
    let ce_few = batch_ce(&model, &pairs(few), &fb).unwrap();
    let ce_known = batch_ce(&model, &pairs(known), &kb).unwrap();
    for lambda in [0.0, 0.1, 1.0] {
        let l = fewshot_loss(&model, &pairs(few), &pairs(known), &task, lambda).unwrap();
        assert!((l - (ce_few + lambda * ce_known)).abs() < 1e-9);
    }
    assert_eq!(fewshot_loss(&model, &pairs(few), &pairs(known), &task, 0.0).unwrap(), ce_few);
}

#[test]
fn concept_encoder_receives_gradient() {
    let recs = small_records();
    let (mut model, index) = model_for(&recs, &[], 8);
    let index = index.unwrap();
    accumulate_batch_ce(&mut model, &pairs(&recs[..3]), &index, 1.0).unwrap();
    let norm: f64 = model
        .params()
        .iter()
        .filter(|(_, p)| p.name.starts_with("con."))
        .map(|(_, p)| p.grad.data().iter().map(|g| g * g).sum::<f64>())
        .sum();
    assert!(norm > 0.0);
}

#[test]
fn accumulated_loss_matches_forward_ce() {
    let recs = small_records();
    let (mut model, index) = model_for(&recs, &[], 8);
    let index = index.unwrap();
    let bank = model.encode_index(index.clone()).unwrap();
    let forward = batch_ce(&model, &pairs(&recs), &bank).unwrap();
    let graph = accumulate_batch_ce(&mut model, &pairs(&recs), &index, 1.0).unwrap();
    assert_eq!(forward.to_bits(), graph.to_bits());
    // the per-example sum agrees with a single graph built by hand
    let mut g = Graph::new(model.params());
    let c = model.graph_concepts(&mut g, &index).unwrap();
    let (nll, _) = model.graph_nll(&mut g, &recs[0].utterance, &recs[0].target, c, &index).unwrap();
    let src = model.encode_source(&recs[0].utterance).unwrap();
    let dists = model.forward_teacher_forced(&src, &recs[0].target, &bank).unwrap();
    let (_, gold) = index.teacher_rows(&recs[0].target, recs[0].utterance.len(), 16).unwrap();
    assert_eq!(g.value(nll).item(), sequence_nll(&dists, &gold).unwrap());
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs: 4,
        patience: 5,
        learning_rate: 3e-3,
        warmup: 0.0,
        ..Default::default()
    }
}

#[test]
fn frozen_learning_rate_stops_after_one_flat_epoch() {
    let recs = small_records();
    let (mut model, _) = model_for(&recs, &[], 8);
    let cfg = TrainConfig {
        patience: 1,
        learning_rate: 0.0,
        weight_decay: 0.0,
        epochs: 10,
        ..quick_cfg()
    };
    let out = train_known_domains(&mut model, &recs, &recs, &cfg).unwrap();
    assert_eq!(out.epochs_run, 2);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn training_is_bit_reproducible_and_keeps_the_best_epoch() {
    let recs = small_records();
    let run = || {
        let (mut model, index) = model_for(&recs, &[], 8);
        let out = train_known_domains(&mut model, &recs, &recs, &quick_cfg()).unwrap();
        let bank = model.encode_index(index.unwrap()).unwrap();
        let score = concept_parse::eval::teacher_forced_accuracy(&model, &recs, &bank).unwrap();
        (out, model.params().values(), score)
    };
    let (a, pa, score) = run();
    let (b, pb, _) = run();
    assert_eq!(a.log.losses("train"), b.log.losses("train"));
    assert_eq!(pa, pb);
    let max = a.valid_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.best_valid, max);
    assert_eq!(score, max);
}

#[test]
fn pretraining_honors_the_epoch_cap() {
    let ex = wiki(20);
    let (mut model, _) = model_for(&[], &ex, 8);
    let cfg = TrainConfig {
        batch_size: 8,
        ..Default::default()
    };
    let out = pretrain_wikiwiki(&mut model, &ex, &cfg).unwrap();
    assert_eq!(out.epochs_run, 2);
    assert_eq!(out.steps, 2 * 3);
    assert_eq!(out.log.losses("pretrain").len(), 6);

    let before = model.params().values();
    let empty = pretrain_wikiwiki(&mut model, &[], &cfg).unwrap();
    assert_eq!(empty.steps, 0);
    assert_eq!(model.params().values(), before);
}

#[test]
fn fewshot_finetune_learns_and_rejects_empty_subsets() {
    let recs = small_records();
    let (mut model, _) = model_for(&recs, &[], 8);
    let (few, known) = recs.split_at(2);
    let few_index = ConceptIndex::for_labels(&domain_labels(few)).unwrap();
    let known_index = ConceptIndex::for_labels(&domain_labels(known)).unwrap();
    let task = FewShotTask {
        few,
        few_index: &few_index,
        known,
        known_index: &known_index,
    };
    let cfg = TrainConfig {
        fewshot_epochs: 30,
        fewshot_eval_every: 10,
        learning_rate: 3e-3,
        warmup: 0.0,
        ..Default::default()
    };
    let initial = model.params().values();
    let out = fewshot_finetune(&mut model, &task, &cfg).unwrap();
    let losses = out.log.losses("finetune");
    assert!(losses.last().unwrap() < losses.first().unwrap());
    assert_ne!(model.params().values(), initial);
    assert!(out.best_epoch % 10 == 0);

    let empty = FewShotTask { few: &[], ..task };
    assert!(matches!(fewshot_finetune(&mut model, &empty, &cfg), Err(Error::EmptyFewShot)));
}
