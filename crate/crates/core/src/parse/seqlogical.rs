//! Bracketed "seqlogical" annotations with words inline, e.g.
//! `[IN:GET_DISTANCE How far is [SL:DESTINATION ... ] ]`.

use super::token::{Label, Utterance};
use super::tree::{Child, ParseTree};
use crate::error::{Error, Result};

/// Parse an annotation against the utterance it annotates.
///
/// Words must match the utterance tokens one by one; every utterance token
/// must be consumed and the annotation must consist of a single root bracket.
pub fn parse_seqlogical(annotation: &str, utterance: &Utterance) -> Result<ParseTree> {
    let bad = |msg: String| Error::MalformedAnnotation(msg);
    let mut stack: Vec<ParseTree> = Vec::new();
    let mut root: Option<ParseTree> = None;
    let mut next_word = 0usize;

    for piece in annotation.split_whitespace() {
        if root.is_some() {
            return Err(bad(format!("content after root closed: {piece:?}")));
        }
        if let Some(name) = piece.strip_prefix('[') {
            if name.is_empty() || name.contains(['[', ']']) {
                return Err(bad(format!("bad tag {piece:?}")));
            }
            stack.push(ParseTree {
                label: Label::new(name),
                children: Vec::new(),
            });
        } else if piece == "]" {
            let node = stack
                .pop()
                .ok_or_else(|| bad("unbalanced closing bracket".into()))?;
            match stack.last_mut() {
                Some(parent) => parent.children.push(Child::Node(node)),
                None => root = Some(node),
            }
        } else {
            let parent = stack
                .last_mut()
                .ok_or_else(|| bad(format!("word {piece:?} outside any bracket")))?;
            match utterance.tokens().get(next_word) {
                Some(w) if w == piece => {
                    parent.children.push(Child::Token(next_word));
                    next_word += 1;
                }
                Some(w) => {
                    return Err(bad(format!(
                        "word {piece:?} does not match utterance token {w:?} at {next_word}"
                    )))
                }
                None => return Err(bad(format!("word {piece:?} beyond end of utterance"))),
            }
        }
    }
    if !stack.is_empty() {
        return Err(bad(format!("{} unclosed bracket(s)", stack.len())));
    }
    let root = root.ok_or_else(|| bad("no root bracket".into()))?;
    if next_word != utterance.len() {
        return Err(bad(format!(
            "annotation covers {next_word} of {} utterance tokens",
            utterance.len()
        )));
    }
    Ok(root)
}

/// Render a tree back into seqlogical form.
pub fn to_seqlogical(tree: &ParseTree, utterance: &Utterance) -> Result<String> {
    let mut out = Vec::new();
    render(tree, utterance, &mut out)?;
    Ok(out.join(" "))
}

fn render(tree: &ParseTree, utterance: &Utterance, out: &mut Vec<String>) -> Result<()> {
    out.push(format!("[{}", tree.label.name));
    for c in &tree.children {
        match c {
            Child::Token(i) => out.push(
                utterance
                    .tokens()
                    .get(*i)
                    .ok_or(Error::PointerRange {
                        index: *i,
                        len: utterance.len(),
                    })?
                    .clone(),
            ),
            Child::Node(t) => render(t, utterance, out)?,
        }
    }
    out.push("]".into());
    Ok(())
}
