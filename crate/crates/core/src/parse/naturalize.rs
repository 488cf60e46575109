//! Rule-based concept descriptions.
//!
//! `[IN:GET_DISTANCE` becomes "begin get distance intent": boundary word,
//! lowercased name with underscores as spaces, then the kind word. Open-type
//! concepts (entity types) carry their own type text and get no kind word.

use super::token::{Boundary, ConceptKey, ConceptKind};
use crate::error::{Error, Result};

fn boundary_word(b: Boundary) -> &'static str {
    match b {
        Boundary::Begin => "begin",
        Boundary::End => "end",
    }
}

/// Describe an intent/slot tag token such as `[IN:GET_DISTANCE` or `SL:DESTINATION]`.
pub fn naturalize_tag(token: &str) -> Result<String> {
    let key: ConceptKey = token.parse()?;
    if key.kind == ConceptKind::OpenType {
        return Err(Error::UnknownTagFormat(token.to_owned()));
    }
    naturalize_key(&key, None)
}

/// Describe `key`; open-type keys require `type_text`.
pub fn naturalize_key(key: &ConceptKey, type_text: Option<&str>) -> Result<String> {
    let boundary = boundary_word(key.boundary);
    match key.kind {
        ConceptKind::Intent | ConceptKind::Slot => {
            let bare = &key.name[3..];
            let words: Vec<String> = bare
                .split('_')
                .filter(|w| !w.is_empty())
                .map(str::to_lowercase)
                .collect();
            if words.is_empty() {
                return Err(Error::UnknownTagFormat(key.to_string()));
            }
            let kind = if key.kind == ConceptKind::Intent {
                "intent"
            } else {
                "slot"
            };
            Ok(format!("{boundary} {} {kind}", words.join(" ")))
        }
        ConceptKind::OpenType => {
            let text = type_text
                .map(|t| t.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
                .filter(|t| !t.is_empty())
                .ok_or_else(|| Error::UnknownTagFormat(key.to_string()))?;
            Ok(format!("{boundary} {text}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::Label;

    #[test]
    fn naturalize_examples() {
        assert_eq!(
            naturalize_tag("[IN:GET_DISTANCE").unwrap(),
            "begin get distance intent"
        );
        assert_eq!(
            naturalize_tag("SL:DESTINATION]").unwrap(),
            "end destination slot"
        );
        assert_eq!(
            naturalize_tag("[SL:TYPE_FOOD").unwrap(),
            "begin type food slot"
        );
    }

    #[test]
    fn naturalize_rejects_bad_shapes() {
        for bad in ["IN:GET_DISTANCE", "GET_DISTANCE", "[Q215380", "[IN:", "[IN:__"] {
            assert!(
                matches!(naturalize_tag(bad), Err(Error::UnknownTagFormat(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn open_type_uses_type_text() {
        let key: ConceptKey = "[Q215380".parse().unwrap();
        assert_eq!(
            naturalize_key(&key, Some("Musical  Group")).unwrap(),
            "begin musical group"
        );
        assert!(naturalize_key(&key, None).is_err());
        assert!(naturalize_key(&key, Some("  ")).is_err());
    }

    #[test]
    fn injective_over_tag_set() {
        let names = ["IN:GET_DISTANCE", "SL:GET_DISTANCE", "IN:GET", "SL:DISTANCE"];
        let mut seen = std::collections::HashSet::new();
        for n in names {
            let l = Label::new(n);
            for k in [l.begin(), l.end()] {
                assert!(seen.insert(naturalize_key(&k, None).unwrap()));
            }
        }
    }
}
