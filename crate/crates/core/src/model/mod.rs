//! The concept-augmented pointer seq2seq network.

mod bank;
mod config;
pub(crate) mod network;
mod sidecar;
mod vocab;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use bank::{CompiledDomain, ConceptBank, ConceptIndex};
pub use config::ModelConfig;
pub use sidecar::{load_checkpoint, read_sidecar, save_checkpoint, sidecar_path, Sidecar};
pub use vocab::{Vocab, CLS, UNK};

use network::{build_params, Ids, Memory, Net};

use crate::error::{Error, Result};
use crate::parse::{ConceptTag, TargetSequence, TargetToken, Utterance};
use crate::tensor::{kernels, truncated_normal, Graph, ParamStore, Real, Tensor, Var};

/// Encoder output for one utterance, with the decoder's cross-attention
/// keys and values precomputed.
#[derive(Clone, Debug)]
pub struct SourceEncoding<T> {
    pub states: Tensor<T>,
    keys: Vec<Tensor<T>>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> SourceEncoding<T> {
    pub fn n(&self) -> usize {
        self.states.rows()
    }

    fn memory(&self, g: &mut Graph<'_, T>) -> Memory {
        Memory {
            states: g.constant(self.states.clone()),
            keys: self.keys.iter().map(|k| g.constant(k.clone())).collect(),
            values: self.values.iter().map(|v| g.constant(v.clone())).collect(),
        }
    }
}

/// Incremental decoding state: self-attention caches for steps `0..t`.
#[derive(Clone, Debug)]
pub struct DecoderState<T> {
    pub t: usize,
    cache: Vec<(Tensor<T>, Tensor<T>)>,
    /// Decoder output at the last step (zeros before the first step).
    pub d_t: Tensor<T>,
}

/// One step's output distribution over `m` concepts then `n` pointers.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution<T> {
    pub m: usize,
    pub n: usize,
    pub concept_scores: Vec<T>,
    pub pointer_scores: Vec<T>,
    pub probs: Vec<T>,
    pub log_probs: Vec<T>,
}

impl<T: Real> StepDistribution<T> {
    fn from_logits(row: &[T], m: usize) -> Self {
        let mut probs = row.to_vec();
        kernels::softmax_in_place(&mut probs);
        let mut log_probs = row.to_vec();
        kernels::log_softmax_in_place(&mut log_probs);
        StepDistribution {
            m,
            n: row.len() - m,
            concept_scores: row[..m].to_vec(),
            pointer_scores: row[m..].to_vec(),
            probs,
            log_probs,
        }
    }

    pub fn support(&self) -> usize {
        self.probs.len()
    }

    /// Highest-probability index, first on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.log_probs.iter().enumerate() {
            if p > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    /// `k` most probable indices, descending.
    pub fn top_k(&self, k: usize) -> Vec<(usize, T)> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].partial_cmp(&self.probs[a]).unwrap().then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| (i, self.probs[i])).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ConceptSeq2Seq<T: Real> {
    config: ModelConfig,
    vocab: Vocab,
    params: ParamStore<T>,
    ids: Ids,
}

impl<T: Real> ConceptSeq2Seq<T> {
    /// Fresh model; `config.vocab_size` is taken from `vocab`.
    pub fn new(mut config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.len();
        config.validate()?;
        let (params, ids) = build_params(&config, seed);
        Ok(ConceptSeq2Seq {
            config,
            vocab,
            params,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub(crate) fn net(&self) -> Net<'_> {
        Net {
            cfg: &self.config,
            ids: &self.ids,
            vocab: &self.vocab,
        }
    }

    /// Add unseen words to the vocabulary, growing the embedding table with
    /// freshly initialized rows. Returns the number of words added.
    pub fn extend_vocab<I, S>(&mut self, words: I, seed: u64) -> Result<usize>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let added = self.vocab.extend(words);
        if added > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = truncated_normal(vec![added, self.config.d_model], self.config.init_std, &mut rng);
            self.params.grow_rows(self.ids.word, rows)?;
            self.config.vocab_size = self.vocab.len();
        }
        Ok(added)
    }

    pub fn encode_source(&self, utt: &Utterance) -> Result<SourceEncoding<T>> {
        let net = self.net();
        let mut g = Graph::new(&self.params);
        let states = net.source(&mut g, utt)?;
        let mem = net.memory(&mut g, states)?;
        Ok(SourceEncoding {
            states: g.value(states).clone(),
            keys: mem.keys.iter().map(|&k| g.value(k).clone()).collect(),
            values: mem.values.iter().map(|&v| g.value(v).clone()).collect(),
        })
    }

    pub fn encode_concepts(&self, tags: &[ConceptTag]) -> Result<ConceptBank<T>> {
        let index = ConceptIndex::new(tags.to_vec())?;
        self.encode_index(index)
    }

    pub fn encode_index(&self, index: ConceptIndex) -> Result<ConceptBank<T>> {
        let mut g = Graph::new(&self.params);
        let v = self.net().concepts(&mut g, index.tags())?;
        Ok(ConceptBank {
            vectors: g.value(v).clone(),
            index,
        })
    }

    /// Decoder input embedding of a target token (position term excluded).
    pub fn target_embed(&self, tok: &TargetToken, bank: &ConceptBank<T>) -> Result<Tensor<T>> {
        let row = bank.index.input_index(tok, self.config.max_source_len)?;
        self.input_table(bank).slice_rows(row, 1).reshape(vec![self.config.d_model])
    }

    fn input_table(&self, bank: &ConceptBank<T>) -> Tensor<T> {
        let mut g = Graph::new(&self.params);
        let b = g.constant(bank.vectors.clone());
        let t = self.net().input_table(&mut g, b).expect("bank width matches d_model");
        g.value(t).clone()
    }

    pub fn compile_domain(&self, tags: &[ConceptTag]) -> Result<CompiledDomain<T>> {
        let bank = self.encode_concepts(tags)?;
        Ok(self.compile_bank(bank))
    }

    pub fn compile_bank(&self, bank: ConceptBank<T>) -> CompiledDomain<T> {
        let table = self.input_table(&bank);
        CompiledDomain { bank, table }
    }

    pub fn start(&self) -> DecoderState<T> {
        DecoderState {
            t: 0,
            cache: Vec::new(),
            d_t: Tensor::zeros(vec![self.config.d_model]),
        }
    }

    /// One incremental step. `prev` is the token emitted at the previous
    /// step (`None` at the first step, meaning BOS).
    pub fn decode_step(
        &self,
        state: &DecoderState<T>,
        prev: Option<&TargetToken>,
        src: &SourceEncoding<T>,
        bank: &ConceptBank<T>,
    ) -> Result<(StepDistribution<T>, DecoderState<T>)> {
        self.step_inner(state, prev, src, bank, None)
    }

    pub fn decode_step_compiled(
        &self,
        state: &DecoderState<T>,
        prev: Option<&TargetToken>,
        src: &SourceEncoding<T>,
        domain: &CompiledDomain<T>,
    ) -> Result<(StepDistribution<T>, DecoderState<T>)> {
        self.step_inner(state, prev, src, &domain.bank, Some(&domain.table))
    }

    fn step_inner(
        &self,
        state: &DecoderState<T>,
        prev: Option<&TargetToken>,
        src: &SourceEncoding<T>,
        bank: &ConceptBank<T>,
        table: Option<&Tensor<T>>,
    ) -> Result<(StepDistribution<T>, DecoderState<T>)> {
        let t = state.t;
        if t >= self.config.max_target_len {
            return Err(Error::LengthExceeded {
                len: t + 1,
                limit: self.config.max_target_len,
            });
        }
        let row = match prev {
            None => 0,
            Some(tok) => bank.index.input_index(tok, self.config.max_source_len)?,
        };
        let net = self.net();
        let mut g = Graph::new(&self.params);
        let bank_v = g.constant(bank.vectors.clone());
        let table = match table {
            Some(tab) => g.constant(tab.clone()),
            None => net.input_table(&mut g, bank_v)?,
        };
        let x = net.inputs(&mut g, table, &[row], t)?;
        let mem = src.memory(&mut g);
        let past: Vec<(Var, Var)> = state
            .cache
            .iter()
            .map(|(k, v)| (g.constant(k.clone()), g.constant(v.clone())))
            .collect();
        let (h, kv) = net.decoder(&mut g, x, t, &mem, (t > 0).then_some(past.as_slice()))?;
        let logits = net.scores(&mut g, h, bank_v, mem.states)?;
        let dist = StepDistribution::from_logits(g.value(logits).row(0), bank.m());
        let next = DecoderState {
            t: t + 1,
            cache: kv.iter().map(|&(k, v)| (g.value(k).clone(), g.value(v).clone())).collect(),
            d_t: g.value(h).clone().reshape(vec![self.config.d_model])?,
        };
        Ok((dist, next))
    }

    /// One distribution per target position, each conditioned on the gold
    /// prefix, computed in a single batched pass.
    pub fn forward_teacher_forced(
        &self,
        src: &SourceEncoding<T>,
        target: &TargetSequence,
        bank: &ConceptBank<T>,
    ) -> Result<Vec<StepDistribution<T>>> {
        let (inputs, _) = bank.index.teacher_rows(target, src.n(), self.config.max_source_len)?;
        let net = self.net();
        let mut g = Graph::new(&self.params);
        let bank_v = g.constant(bank.vectors.clone());
        let table = net.input_table(&mut g, bank_v)?;
        let x = net.inputs(&mut g, table, &inputs, 0)?;
        let mem = src.memory(&mut g);
        let (h, _) = net.decoder(&mut g, x, 0, &mem, None)?;
        let logits = net.scores(&mut g, h, bank_v, mem.states)?;
        let lv = g.value(logits);
        Ok((0..lv.rows())
            .map(|i| StepDistribution::from_logits(lv.row(i), bank.m()))
            .collect())
    }

    /// Summed negative log-likelihood of `target` given `utt`, built on `g`
    /// with concept vectors `bank` (a `[m, d]` node laid out by `index`).
    /// Returns the loss node and the number of target tokens.
    pub fn graph_nll(
        &self,
        g: &mut Graph<'_, T>,
        utt: &Utterance,
        target: &TargetSequence,
        bank: Var,
        index: &ConceptIndex,
    ) -> Result<(Var, usize)> {
        let net = self.net();
        let (inputs, gold) = index.teacher_rows(target, utt.len(), self.config.max_source_len)?;
        let src = net.source(g, utt)?;
        let mem = net.memory(g, src)?;
        let table = net.input_table(g, bank)?;
        let x = net.inputs(g, table, &inputs, 0)?;
        let (h, _) = net.decoder(g, x, 0, &mem, None)?;
        let logits = net.scores(g, h, bank, src)?;
        let logp = g.log_softmax(logits)?;
        Ok((g.nll_sum(logp, &gold)?, gold.len()))
    }

    /// Concept vectors for `index` as a graph node.
    pub fn graph_concepts(&self, g: &mut Graph<'_, T>, index: &ConceptIndex) -> Result<Var> {
        self.net().concepts(g, index.tags())
    }

    pub(crate) fn from_parts(config: ModelConfig, vocab: Vocab, params: ParamStore<T>, ids: Ids) -> Self {
        ConceptSeq2Seq {
            config,
            vocab,
            params,
            ids,
        }
    }
}
