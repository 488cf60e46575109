use std::hint::black_box;

use concept_parse::data::domain_labels;
use concept_parse::model::{ConceptIndex, ConceptSeq2Seq, ModelConfig, Vocab};
use concept_parse::parse::{delinearize, linearize};
use concept_parse::protocol::vocab_words;
use concept_parse::synth::{fixture_corpus, overfit_corpus};
use concept_parse::train::{accumulate_batch_ce, batch_ce, Pair};
use criterion::{criterion_group, criterion_main, Criterion};

fn model_and_data() -> (ConceptSeq2Seq<f32>, Vec<concept_parse::data::DatasetRecord>, ConceptIndex) {
    let records = overfit_corpus(8, 1).unwrap();
    let index = ConceptIndex::for_labels(&domain_labels(&records)).unwrap();
    let vocab = Vocab::build(vocab_words(&records, index.tags(), &[]));
    let cfg = ModelConfig {
        max_source_len: 32,
        max_target_len: 48,
        ..ModelConfig::tiny(64, 2)
    };
    (ConceptSeq2Seq::new(cfg, vocab, 1).unwrap(), records, index)
}

fn decode_step(c: &mut Criterion) {
    let (model, records, index) = model_and_data();
    let domain = model.compile_domain(index.tags()).unwrap();
    let src = model.encode_source(&records[0].utterance).unwrap();
    let (_, state) = model.decode_step_compiled(&model.start(), None, &src, &domain).unwrap();
    let prev = records[0].target.tokens()[0].clone();
    c.bench_function("decode_step d64 L2", |b| {
        b.iter(|| model.decode_step_compiled(black_box(&state), Some(&prev), &src, &domain).unwrap())
    });
}

fn batch_loss(c: &mut Criterion) {
    let (mut model, records, index) = model_and_data();
    let pairs: Vec<Pair<'_>> = records.iter().take(16).map(|r| (&r.utterance, &r.target)).collect();
    let bank = model.encode_index(index.clone()).unwrap();
    c.bench_function("batch_ce 16 forward", |b| b.iter(|| batch_ce(&model, black_box(&pairs), &bank).unwrap()));
    c.bench_function("batch_ce 16 forward+backward", |b| {
        b.iter(|| {
            model.params_mut().zero_grad();
            accumulate_batch_ce(&mut model, black_box(&pairs), &index, 1.0).unwrap()
        })
    });
}

fn linearization(c: &mut Criterion) {
    let records = fixture_corpus(100, 7).unwrap();
    c.bench_function("linearize+delinearize 500", |b| {
        b.iter(|| {
            for r in &records {
                let s = linearize(black_box(&r.tree), &r.utterance).unwrap();
                black_box(delinearize(&s, &r.utterance).unwrap());
            }
        })
    });
}

criterion_group!(benches, decode_step, batch_loss, linearization);
criterion_main!(benches);
