//! Parameter layout and graph construction for the encoder, concept encoder
//! and pointer decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::vocab::{Vocab, CLS};
use crate::error::{Error, Result};
use crate::parse::{ConceptTag, Utterance};
use crate::tensor::{identity, truncated_normal, Graph, ParamId, ParamStore, Real, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Attn {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncLayer {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecLayer {
    ln1: Norm,
    self_attn: Attn,
    ln2: Norm,
    cross: Attn,
    ln3: Norm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Clone, Debug)]
pub(crate) struct Ids {
    pub word: ParamId,
    src_pos: ParamId,
    enc: Vec<EncLayer>,
    enc_ln: Norm,
    con_pos: ParamId,
    con: Vec<EncLayer>,
    con_ln: Norm,
    adapter: Linear,
    bos: ParamId,
    ptr: ParamId,
    tgt_pos: ParamId,
    dec: Vec<DecLayer>,
    dec_ln: Norm,
    head_concept: Linear,
    head_pointer: Linear,
}

struct Init<'a, T: Real> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
    std: f64,
}

impl<T: Real> Init<'_, T> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let t = truncated_normal(vec![rows, cols], self.std, &mut self.rng);
        self.store.add(name, t)
    }

    fn zeros(&mut self, name: String, n: usize) -> ParamId {
        self.store.add(name, Tensor::zeros(vec![n]))
    }

    fn linear(&mut self, name: &str, i: usize, o: usize) -> Linear {
        Linear {
            w: self.weight(format!("{name}.w"), i, o),
            b: self.zeros(format!("{name}.b"), o),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            g: self.store.add(format!("{name}.g"), Tensor::ones(vec![d])),
            b: self.zeros(format!("{name}.b"), d),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> Attn {
        Attn {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }

    fn enc_layer(&mut self, name: &str, d: usize, ff: usize) -> EncLayer {
        EncLayer {
            ln1: self.norm(&format!("{name}.ln1"), d),
            attn: self.attn(&format!("{name}.attn"), d),
            ln2: self.norm(&format!("{name}.ln2"), d),
            ff1: self.linear(&format!("{name}.ff1"), d, ff),
            ff2: self.linear(&format!("{name}.ff2"), ff, d),
        }
    }

    fn dec_layer(&mut self, name: &str, d: usize, ff: usize) -> DecLayer {
        DecLayer {
            ln1: self.norm(&format!("{name}.ln1"), d),
            self_attn: self.attn(&format!("{name}.self"), d),
            ln2: self.norm(&format!("{name}.ln2"), d),
            cross: self.attn(&format!("{name}.cross"), d),
            ln3: self.norm(&format!("{name}.ln3"), d),
            ff1: self.linear(&format!("{name}.ff1"), d, ff),
            ff2: self.linear(&format!("{name}.ff2"), ff, d),
        }
    }
}

/// Register every parameter in a fixed order and return their ids.
pub(crate) fn build_params<T: Real>(cfg: &ModelConfig, seed: u64) -> (ParamStore<T>, Ids) {
    let mut store = ParamStore::new();
    let (d, ff) = (cfg.d_model, cfg.ff_width);
    let mut init = Init {
        store: &mut store,
        rng: ChaCha8Rng::seed_from_u64(seed),
        std: cfg.init_std,
    };
    let word = init.weight("emb.word".into(), cfg.vocab_size, d);
    let src_pos = init.weight("enc.pos".into(), cfg.max_source_len, d);
    let enc = (0..cfg.encoder_layers)
        .map(|i| init.enc_layer(&format!("enc.{i}"), d, ff))
        .collect();
    let enc_ln = init.norm("enc.ln", d);
    let con_pos = init.weight("con.pos".into(), cfg.max_description_len + 1, d);
    let con = (0..cfg.concept_layers)
        .map(|i| init.enc_layer(&format!("con.{i}"), d, ff))
        .collect();
    let con_ln = init.norm("con.ln", d);
    let adapter = Linear {
        w: init.store.add("con.adapter.w", identity(d)),
        b: init.zeros("con.adapter.b".into(), d),
    };
    let bos = init.weight("dec.bos".into(), 1, d);
    let ptr = init.weight("dec.ptr".into(), cfg.max_source_len, d);
    let tgt_pos = init.weight("dec.pos".into(), cfg.max_target_len, d);
    let dec = (0..cfg.decoder_layers)
        .map(|i| init.dec_layer(&format!("dec.{i}"), d, ff))
        .collect();
    let dec_ln = init.norm("dec.ln", d);
    let head_concept = init.linear("head.concept", d, d);
    let head_pointer = init.linear("head.pointer", d, d);
    let ids = Ids {
        word,
        src_pos,
        enc,
        enc_ln,
        con_pos,
        con,
        con_ln,
        adapter,
        bos,
        ptr,
        tgt_pos,
        dec,
        dec_ln,
        head_concept,
        head_pointer,
    };
    (store, ids)
}

/// Source-side tensors the decoder attends to: encoder states plus the
/// per-layer cross-attention keys and values.
pub(crate) struct Memory {
    pub states: Var,
    pub keys: Vec<Var>,
    pub values: Vec<Var>,
}

/// Graph-building view of a model: config plus parameter ids.
pub(crate) struct Net<'a> {
    pub cfg: &'a ModelConfig,
    pub ids: &'a Ids,
    pub vocab: &'a Vocab,
}

impl Net<'_> {
    fn linear<T: Real>(&self, g: &mut Graph<'_, T>, l: Linear, x: Var) -> Result<Var> {
        let (w, b) = (g.param(l.w), g.param(l.b));
        g.affine(x, w, b)
    }

    fn norm<T: Real>(&self, g: &mut Graph<'_, T>, n: Norm, x: Var) -> Result<Var> {
        let (gain, bias) = (g.param(n.g), g.param(n.b));
        g.layer_norm(x, gain, bias)
    }

    fn feed_forward<T: Real>(&self, g: &mut Graph<'_, T>, ff1: Linear, ff2: Linear, x: Var) -> Result<Var> {
        let h = self.linear(g, ff1, x)?;
        let h = g.gelu(h)?;
        self.linear(g, ff2, h)
    }

    fn encoder<T: Real>(&self, g: &mut Graph<'_, T>, layers: &[EncLayer], ln: Norm, heads: usize, mut x: Var) -> Result<Var> {
        for l in layers {
            let h = self.norm(g, l.ln1, x)?;
            let q = self.linear(g, l.attn.q, h)?;
            let k = self.linear(g, l.attn.k, h)?;
            let v = self.linear(g, l.attn.v, h)?;
            let a = g.attention(q, k, v, heads, None)?;
            let a = self.linear(g, l.attn.o, a)?;
            x = g.add(x, a)?;
            let h = self.norm(g, l.ln2, x)?;
            let f = self.feed_forward(g, l.ff1, l.ff2, h)?;
            x = g.add(x, f)?;
        }
        self.norm(g, ln, x)
    }

    fn embed_words<T: Real>(&self, g: &mut Graph<'_, T>, ids: &[usize], pos: ParamId) -> Result<Var> {
        let table = g.param(self.ids.word);
        let w = g.gather(table, ids)?;
        let pos = g.param(pos);
        let p = g.slice_rows(pos, 0, ids.len())?;
        g.add(w, p)
    }

    pub fn source_ids(&self, utt: &Utterance) -> Result<Vec<usize>> {
        let n = utt.len();
        if n == 0 {
            return Err(Error::EmptyUtterance);
        }
        if n > self.cfg.max_source_len {
            return Err(Error::LengthExceeded {
                len: n,
                limit: self.cfg.max_source_len,
            });
        }
        Ok(utt.tokens().iter().map(|w| self.vocab.id(w)).collect())
    }

    /// Encoder states `[n, d]`.
    pub fn source<T: Real>(&self, g: &mut Graph<'_, T>, utt: &Utterance) -> Result<Var> {
        let ids = self.source_ids(utt)?;
        let x = self.embed_words(g, &ids, self.ids.src_pos)?;
        self.encoder(g, &self.ids.enc, self.ids.enc_ln, self.cfg.encoder_heads, x)
    }

    pub fn description_ids(&self, tag: &ConceptTag) -> Result<Vec<usize>> {
        let words: Vec<&str> = tag.description.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::EmptyDescription);
        }
        let mut ids = Vec::with_capacity(words.len().min(self.cfg.max_description_len) + 1);
        ids.push(CLS);
        ids.extend(words.iter().take(self.cfg.max_description_len).map(|w| self.vocab.id(w)));
        Ok(ids)
    }

    /// Concept vectors `[m, d]`, one encoder pass per tag.
    pub fn concepts<T: Real>(&self, g: &mut Graph<'_, T>, tags: &[ConceptTag]) -> Result<Var> {
        if tags.is_empty() {
            return Err(Error::EmptyDescription);
        }
        let mut rows = Vec::with_capacity(tags.len());
        for tag in tags {
            let ids = self.description_ids(tag)?;
            let x = self.embed_words(g, &ids, self.ids.con_pos)?;
            let h = self.encoder(g, &self.ids.con, self.ids.con_ln, self.cfg.concept_heads, x)?;
            rows.push(g.slice_rows(h, 0, 1)?);
        }
        let pooled = if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows)? };
        self.linear(g, self.ids.adapter, pooled)
    }

    pub fn memory<T: Real>(&self, g: &mut Graph<'_, T>, states: Var) -> Result<Memory> {
        let mut keys = Vec::with_capacity(self.ids.dec.len());
        let mut values = Vec::with_capacity(self.ids.dec.len());
        for l in &self.ids.dec {
            keys.push(self.linear(g, l.cross.k, states)?);
            values.push(self.linear(g, l.cross.v, states)?);
        }
        Ok(Memory { states, keys, values })
    }

    /// Decoder input table: BOS row, pointer rows, then concept rows.
    pub fn input_table<T: Real>(&self, g: &mut Graph<'_, T>, bank: Var) -> Result<Var> {
        let bos = g.param(self.ids.bos);
        let ptr = g.param(self.ids.ptr);
        g.concat_rows(&[bos, ptr, bank])
    }

    /// Decoder inputs for positions `offset..offset+len(rows)`.
    pub fn inputs<T: Real>(&self, g: &mut Graph<'_, T>, table: Var, rows: &[usize], offset: usize) -> Result<Var> {
        if offset + rows.len() > self.cfg.max_target_len {
            return Err(Error::LengthExceeded {
                len: offset + rows.len(),
                limit: self.cfg.max_target_len,
            });
        }
        let x = g.gather(table, rows)?;
        let pos = g.param(self.ids.tgt_pos);
        let p = g.slice_rows(pos, offset, rows.len())?;
        g.add(x, p)
    }

    /// Run the decoder stack on rows at `offset..`; `past` holds self-attention
    /// keys/values for earlier positions. Returns final states and the full
    /// per-layer key/value rows.
    pub fn decoder<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        mut x: Var,
        offset: usize,
        mem: &Memory,
        past: Option<&[(Var, Var)]>,
    ) -> Result<(Var, Vec<(Var, Var)>)> {
        let heads = self.cfg.decoder_heads;
        let mut kv = Vec::with_capacity(self.ids.dec.len());
        for (i, l) in self.ids.dec.iter().enumerate() {
            let h = self.norm(g, l.ln1, x)?;
            let q = self.linear(g, l.self_attn.q, h)?;
            let mut k = self.linear(g, l.self_attn.k, h)?;
            let mut v = self.linear(g, l.self_attn.v, h)?;
            if let Some(past) = past {
                k = g.concat_rows(&[past[i].0, k])?;
                v = g.concat_rows(&[past[i].1, v])?;
            }
            let a = g.attention(q, k, v, heads, Some(offset))?;
            let a = self.linear(g, l.self_attn.o, a)?;
            x = g.add(x, a)?;
            let h = self.norm(g, l.ln2, x)?;
            let q = self.linear(g, l.cross.q, h)?;
            let a = g.attention(q, mem.keys[i], mem.values[i], heads, None)?;
            let a = self.linear(g, l.cross.o, a)?;
            x = g.add(x, a)?;
            let h = self.norm(g, l.ln3, x)?;
            let f = self.feed_forward(g, l.ff1, l.ff2, h)?;
            x = g.add(x, f)?;
            kv.push((k, v));
        }
        Ok((self.norm(g, self.ids.dec_ln, x)?, kv))
    }

    /// Unnormalized scores `[rows, m + n]`: concepts first, then pointers.
    pub fn scores<T: Real>(&self, g: &mut Graph<'_, T>, states: Var, bank: Var, src: Var) -> Result<Var> {
        let scale = T::one() / T::c(self.cfg.d_model as f64).sqrt();
        let pc = self.linear(g, self.ids.head_concept, states)?;
        let s = g.matmul_bt(pc, bank)?;
        let s = g.scale(s, scale)?;
        let pp = self.linear(g, self.ids.head_pointer, states)?;
        let a = g.matmul_bt(pp, src)?;
        let a = g.scale(a, scale)?;
        g.concat_cols(s, a)
    }
}
