use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// A generated candidate input program and its lineage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestProgram {
    pub id: String,
    pub opt_id: String,
    pub code: String,
    pub iteration: u32,
    /// Feedback examples in the prompt that produced this program; empty
    /// for programs from the initial prompt.
    pub parent_example_ids: Vec<String>,
    pub source_prompt_hash: String,
}

impl TestProgram {
    /// A program with no lineage, e.g. one loaded from disk.
    pub fn standalone(id: impl Into<String>, code: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            opt_id: String::new(),
            code: code.into(),
            iteration: 0,
            parent_example_ids: Vec::new(),
            source_prompt_hash: String::new(),
        }
    }
}
