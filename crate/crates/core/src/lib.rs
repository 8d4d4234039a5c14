pub mod augment;
pub mod bpe;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod fbank;
pub mod frontend;
pub mod harness;
pub mod numerics;
pub mod rnnt;
pub mod transducer;
pub mod tokenizer;

pub use error::{Error, Result};
