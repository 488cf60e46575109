use std::fmt;

use serde::{Deserialize, Serialize};

use super::token::Label;

/// Labeled tree of intents and slots over utterance token positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParseTree {
    pub label: Label,
    pub children: Vec<Child>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Child {
    Node(ParseTree),
    Token(usize),
}

/// A node's label with the inclusive token span it covers; `None` for nodes
/// whose subtree holds no tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledSpan {
    pub label: String,
    pub span: Option<(usize, usize)>,
}

impl ParseTree {
    pub fn new(label: impl Into<String>, children: Vec<Child>) -> Self {
        ParseTree {
            label: Label::new(label),
            children,
        }
    }

    /// Token leaves in left-to-right tree order.
    pub fn token_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens(&self, out: &mut Vec<usize>) {
        for c in &self.children {
            match c {
                Child::Token(i) => out.push(*i),
                Child::Node(t) => t.collect_tokens(out),
            }
        }
    }

    /// Labels of every node, preorder.
    pub fn labels(&self) -> Vec<&Label> {
        let mut out = vec![&self.label];
        for c in &self.children {
            if let Child::Node(t) = c {
                out.extend(t.labels());
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children
            .iter()
            .filter_map(|c| match c {
                Child::Node(t) => Some(t.depth()),
                Child::Token(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Token leaves strictly increase and stay below `n`.
    pub fn is_well_formed(&self, n: usize) -> bool {
        let idx = self.token_indices();
        idx.windows(2).all(|w| w[0] < w[1]) && idx.iter().all(|&i| i < n)
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.label.name)?;
        for (i, c) in self.children.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match c {
                Child::Token(t) => write!(f, "{t}")?,
                Child::Node(n) => n.fmt(f)?,
            }
        }
        f.write_str("}")
    }
}

/// One entry per node, preorder, spanning the min/max token leaf of its subtree.
pub fn extract_labeled_spans(tree: &ParseTree) -> Vec<LabeledSpan> {
    let mut out = Vec::new();
    walk_spans(tree, &mut out);
    out
}

fn walk_spans(tree: &ParseTree, out: &mut Vec<LabeledSpan>) -> Option<(usize, usize)> {
    let slot = out.len();
    out.push(LabeledSpan {
        label: tree.label.name.clone(),
        span: None,
    });
    let mut span: Option<(usize, usize)> = None;
    let mut widen = |s: (usize, usize)| {
        span = Some(match span {
            None => s,
            Some((lo, hi)) => (lo.min(s.0), hi.max(s.1)),
        });
    };
    for c in &tree.children {
        match c {
            Child::Token(i) => widen((*i, *i)),
            Child::Node(t) => {
                if let Some(s) = walk_spans(t, out) {
                    widen(s);
                }
            }
        }
    }
    out[slot].span = span;
    span
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn span(label: &str, lo: usize, hi: usize) -> LabeledSpan {
        LabeledSpan {
            label: label.into(),
            span: Some((lo, hi)),
        }
    }

    #[test]
    fn spans_of_distance_tree() {
        let spans = extract_labeled_spans(&distance_tree());
        assert_eq!(
            spans,
            vec![
                span("IN:GET_DISTANCE", 0, 5),
                span("SL:DESTINATION", 3, 5),
                span("IN:GET_RESTAURANT_LOCATION", 3, 5),
                span("SL:TYPE_FOOD", 4, 4),
            ]
        );
    }

    #[test]
    fn spans_small_trees() {
        let t = ParseTree::new("IN:A", vec![Child::Token(0)]);
        assert_eq!(extract_labeled_spans(&t), vec![span("IN:A", 0, 0)]);
        assert_eq!(
            extract_labeled_spans(&a_b_tree()),
            vec![span("IN:A", 0, 1), span("SL:B", 0, 0)]
        );
    }

    #[test]
    fn empty_node_gets_sentinel() {
        let t = ParseTree::new(
            "IN:A",
            vec![Child::Node(ParseTree::new("SL:B", vec![])), Child::Token(2)],
        );
        let spans = extract_labeled_spans(&t);
        assert_eq!(spans[1].span, None);
        assert_eq!(spans[0].span, Some((2, 2)));
    }

    #[test]
    fn tree_helpers() {
        let t = distance_tree();
        assert_eq!(t.depth(), 4);
        assert_eq!(t.token_indices(), vec![0, 1, 2, 3, 4, 5]);
        assert!(t.is_well_formed(6));
        assert!(!t.is_well_formed(5));
        assert_eq!(a_b_tree().to_string(), "IN:A{SL:B{0},1}");
    }
}
