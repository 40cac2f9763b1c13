pub mod clause;
pub mod ec;
pub mod node;
pub mod protocol;
pub mod scoring;
pub mod data;
pub mod runtime;
pub mod experiment;
