use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::topv2::open_text;
use crate::error::{Error, Result};
use crate::parse::{
    naturalize_key, tokenize_utterance, ConceptKey, ConceptTag, Label, TargetSequence, TargetToken, Utterance,
};

/// A typed mention; offsets are character positions, `end` exclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiMention {
    pub start: usize,
    pub end: usize,
    pub entity: String,
    #[serde(rename = "type")]
    pub type_name: String,
    /// Optional identifier of the type; used as the tag name when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_id: Option<String>,
}

impl WikiMention {
    fn len(&self) -> usize {
        self.end - self.start
    }

    fn overlaps(&self, other: &WikiMention) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn tag_name(&self) -> String {
        let raw = self.type_id.as_deref().unwrap_or(&self.entity);
        raw.chars()
            .map(|c| if c.is_whitespace() || c == '[' || c == ']' { '_' } else { c })
            .collect()
    }
}

/// One sentence with its (non-overlapping, sorted) mentions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiExample {
    pub context: String,
    pub mentions: Vec<WikiMention>,
}

#[derive(Deserialize)]
struct Line {
    context: String,
    #[serde(default)]
    mentions: Vec<WikiMention>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WikiLoadReport {
    pub lines: usize,
    pub examples: usize,
    pub malformed_lines: usize,
    pub crossing_mentions: usize,
    pub overlapping_mentions: usize,
}

/// Character ranges of sentences: a sentence ends at `.`, `!` or `?`
/// followed by whitespace. Leading whitespace is excluded.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = None;
    for i in 0..chars.len() {
        if start.is_none() && !chars[i].is_whitespace() {
            start = Some(i);
        }
        let boundary = matches!(chars[i], '.' | '!' | '?') && chars.get(i + 1).is_some_and(|c| c.is_whitespace());
        if boundary {
            if let Some(s) = start.take() {
                out.push((s, i + 1));
            }
        }
    }
    if let Some(s) = start {
        let mut e = chars.len();
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        out.push((s, e));
    }
    out
}

fn split_line(line: Line, report: &mut WikiLoadReport) -> Vec<WikiExample> {
    let chars: Vec<char> = line.context.chars().collect();
    let sentences = split_sentences(&line.context);
    let mut buckets: Vec<Vec<WikiMention>> = vec![Vec::new(); sentences.len()];
    for m in line.mentions {
        match sentences.iter().position(|&(s, e)| m.start >= s && m.end <= e && m.start < m.end) {
            Some(i) => {
                let s = sentences[i].0;
                buckets[i].push(WikiMention {
                    start: m.start - s,
                    end: m.end - s,
                    ..m
                });
            }
            None => report.crossing_mentions += 1,
        }
    }
    sentences
        .iter()
        .zip(buckets)
        .map(|(&(s, e), mut ms)| {
            // longest first, earlier start on ties
            ms.sort_by(|a, b| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)));
            let mut kept: Vec<WikiMention> = Vec::new();
            for m in ms {
                if kept.iter().any(|k| k.overlaps(&m)) {
                    report.overlapping_mentions += 1;
                } else {
                    kept.push(m);
                }
            }
            kept.sort_by_key(|m| m.start);
            WikiExample {
                context: chars[s..e].iter().collect(),
                mentions: kept,
            }
        })
        .collect()
}

/// Read `{"context", "mentions"}` JSON lines and split them into sentences.
pub fn load_wikiwiki_jsonl(path: &Path) -> Result<(Vec<WikiExample>, WikiLoadReport)> {
    let reader = open_text(path)?;
    let mut report = WikiLoadReport::default();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match serde_json::from_str::<Line>(&line) {
            Ok(l) => out.extend(split_line(l, &mut report)),
            Err(e) => {
                report.malformed_lines += 1;
                log::warn!("{}:{}: skipped malformed line: {e}", path.display(), i + 1);
            }
        }
    }
    report.examples = out.len();
    Ok((out, report))
}

/// Load one `.jsonl[.gz]` file, or every such file in a directory.
pub fn load_wiki_corpus(path: &Path) -> Result<(Vec<WikiExample>, WikiLoadReport)> {
    if !path.is_dir() {
        return load_wikiwiki_jsonl(path);
    }
    let mut files: Vec<_> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".jsonl") || n.ends_with(".jsonl.gz"))
        })
        .collect();
    files.sort();
    let mut all = Vec::new();
    let mut total = WikiLoadReport::default();
    for f in files {
        let (ex, r) = load_wikiwiki_jsonl(&f)?;
        all.extend(ex);
        total.lines += r.lines;
        total.examples += r.examples;
        total.malformed_lines += r.malformed_lines;
        total.crossing_mentions += r.crossing_mentions;
        total.overlapping_mentions += r.overlapping_mentions;
    }
    Ok((all, total))
}

/// A flat tagging example for concept pretraining.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainExample {
    pub utterance: Utterance,
    pub target: TargetSequence,
    /// Begin/end tags of every type in `target`, with descriptions.
    pub tags: Vec<ConceptTag>,
}

/// Character span of each whitespace token.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    let mut count = 0;
    for (i, c) in text.chars().enumerate() {
        count = i + 1;
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, count));
    }
    spans
}

/// Plain tokens become top-level pointers; each mention becomes a
/// begin-type token, its pointers, and an end-type token.
pub fn wikiwiki_to_parse_example(ex: &WikiExample) -> Result<PretrainExample> {
    let utterance = tokenize_utterance(&ex.context)?;
    let spans = token_spans(&ex.context);
    let mut tokens = Vec::with_capacity(spans.len() + 2 * ex.mentions.len());
    let mut types: BTreeMap<String, String> = BTreeMap::new();
    let mut i = 0;
    for m in &ex.mentions {
        let first = spans.iter().position(|&(s, _)| s == m.start);
        let last = spans.iter().position(|&(_, e)| e == m.end);
        let (first, last) = match (first, last) {
            (Some(f), Some(l)) if f <= l && f >= i => (f, l),
            _ => {
                return Err(Error::SpanAlignment {
                    start: m.start,
                    end: m.end,
                })
            }
        };
        tokens.extend((i..first).map(TargetToken::Pointer));
        let label = Label::new(m.tag_name());
        tokens.push(TargetToken::Concept(label.begin()));
        tokens.extend((first..=last).map(TargetToken::Pointer));
        tokens.push(TargetToken::Concept(label.end()));
        types.entry(label.name).or_insert_with(|| m.type_name.clone());
        i = last + 1;
    }
    tokens.extend((i..spans.len()).map(TargetToken::Pointer));
    let mut tags = Vec::with_capacity(2 * types.len());
    for (name, type_name) in types {
        let label = Label::new(name);
        for key in [label.begin(), label.end()] {
            tags.push(describe(key, &type_name)?);
        }
    }
    Ok(PretrainExample {
        utterance,
        target: TargetSequence(tokens),
        tags,
    })
}

fn describe(key: ConceptKey, type_name: &str) -> Result<ConceptTag> {
    let description = naturalize_key(&key, Some(type_name))?;
    Ok(ConceptTag { key, description })
}
