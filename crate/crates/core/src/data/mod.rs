//! Corpus loading, leave-one-out splits, few-shot sampling and WikiWiki
//! pretraining examples.

mod record;
mod spi;
mod split;
mod topv2;
mod wiki;

pub use record::{domain_labels, filter_unsupported, fingerprint_records, DatasetRecord};
pub use spi::{sample_spi, SpiConfig};
pub use split::{build_leave_one_out, load_corpus, Corpus, DomainSplit, SplitConfig};
pub use topv2::{load_topv2_tsv, open_text, LoadReport};
pub use wiki::{
    load_wiki_corpus, load_wikiwiki_jsonl, split_sentences, wikiwiki_to_parse_example, PretrainExample,
    WikiExample, WikiLoadReport, WikiMention,
};
