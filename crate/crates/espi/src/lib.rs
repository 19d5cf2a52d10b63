//! Security patch identification from commit structure.
//!
//! Two encoders over a commit: contextual AST paths over the changed code fed
//! to a BiLSTM, and a dependency graph over the commit message fed to a gated
//! graph network. Their vectors are ensembled into a binary classifier.

pub mod ast;
pub mod checkpoint;
pub mod dataset;
pub mod diff;
pub mod fixture;
pub mod model;
pub mod msg;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;
