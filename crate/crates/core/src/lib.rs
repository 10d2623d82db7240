//! Hierarchy-aware retrieval over collections of structurally similar documents.
//!
//! The pipeline turns source text into numbered markdown chapters
//! ([`formatter`]), prefixes each chapter with its root-to-node title path
//! ([`hca`]), indexes the augmented text for vector, BM25 and keyword
//! retrieval ([`index`]), fuses the three routes into one full ranking
//! ([`retriever`]) and scores rankings with the log-rank index ([`evalkit`]).

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod formatter;
pub mod hca;
pub mod index;
pub mod plugin;
pub mod retriever;
pub mod synthetic;
pub mod text;

pub use corpus::{load_corpus, segment_key, DocumentRecord, ImageAsset, Segment, SegmentKind};
pub use error::{Error, Result, Warning};
pub use evalkit::{evaluate_dataset, evaluate_query, log_rank_score, EvalQuery, EvalReport};
pub use index::{build_indices, load_index, save_index, Embedder, HashingEmbedder, IndexSet, KeywordExtractor};
pub use retriever::{RankedResult, Retrieval, RetrievalConfig, Retriever};
