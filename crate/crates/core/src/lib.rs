//! Subtree-attention program analysis for short Java-style methods.
//!
//! The pipeline: parse a method into a spanned AST, enumerate its rooted
//! subtrees, embed each subtree two ways (as a vocabulary token and as a
//! pooled sequence of node symbols), pool subtree vectors with independent
//! sigmoid attention into a single code vector, and train a correctness
//! classifier with an entropy-regularized loss. High-attention subtrees of
//! programs predicted incorrect are reported as suspected logical errors,
//! mapped back to source spans. Code vectors also feed two student models:
//! next-attempt knowledge tracing and final-grade regression.

pub mod ast;
pub mod checks;
pub mod corpus;
pub mod localize;
pub mod model;
pub mod nn;
pub mod subtree;

pub mod seed;
pub mod student;
