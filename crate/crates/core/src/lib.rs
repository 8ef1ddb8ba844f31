//! Bilingual speech recognition workbench built around the SplitHead with
//! Attention acoustic model.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod lang;
pub mod lexicon;
pub mod lm;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod seed;
pub mod tensor;
pub mod trainer;
pub mod translit;

pub use error::{Error, Result};
pub use lang::{Lang, UttLang};
pub use tensor::Tensor;
