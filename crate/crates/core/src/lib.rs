//! Adversarial co-evolution harness for code and unit-test generation.

pub mod assertion;
pub mod cli;
pub mod evalkit;
pub mod fixtures;
pub mod grpo;
mod lex;
pub mod mistake_book;
pub mod rewards;
pub mod rollout;
pub mod sandbox;
pub mod script;
