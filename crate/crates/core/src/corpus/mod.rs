//! Comment dumps, post trees and example extraction.

mod dump;
mod extract;
mod stats;
mod tree;

pub use dump::{parse_dump, strip_kind_prefix, Comment, ParsedDump, Post, DELETED, REMOVED};
pub use extract::{
    extract_corpus, extract_examples, load_examples, partition_of, sample_negatives, save_examples, split_examples,
    tree_messages, with_negatives, Example, ExtractConfig, Extraction, Label, Message, Partition, Split, SplitRatios,
};
pub use stats::{dataset_stats, Cdf, DatasetStats};
pub use tree::{build_trees, read_trees, write_trees, Forest, PostTree};
