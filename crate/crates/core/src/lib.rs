//! Interaction Grammar parsing: polarized tree descriptions, node merging,
//! polarity-counting selection filters and two deep-parsing engines.

pub mod error;
pub mod feature;
pub mod filter;
pub mod grammar;
pub mod model;
pub mod notation;
pub mod parser;
pub mod ptd;
pub mod report;
pub mod selection;
pub mod token;
pub mod tree;

pub use error::{Error, Result};
pub use feature::{
    compatible, globally_saturated, intersect_values, is_active, AtomicFeatureStructure,
    CorefTag, FeatureSignature, FilteringFeatureStructure, Intersection, Polarity,
    PolarityCounts, PolarizedFeature, PolarizedFeatureStructure, ValueSet,
};
pub use grammar::{Grammar, Lexicon, Template};
pub use model::{check_model, check_ptd_model, find_interpretations, ConditionTag, Interpretation, ModelVerdict};
pub use parser::{parse, Engine, ParseOptions, ParseResult};
pub use ptd::{ClashKind, DescNode, EdgePos, Iptd, MergeError, NodeId, NodeType, Origin, Ptd, Relation};
pub use selection::SelectionGraph;
pub use token::TokenGraph;
pub use tree::{SyntacticTree, TreeNodeId};
