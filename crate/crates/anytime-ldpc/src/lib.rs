//! Anytime-reliable LDPC convolutional codes for networked control:
//! protograph construction and lifting, streaming belief-propagation
//! decoding, SNR-evolution analysis, channel models with joint soft
//! demodulation, and a closed-loop plant/controller simulation.

pub mod channel;
pub mod codec;
pub mod gf2;
pub mod harness;
pub mod jfun;
pub mod pexit;
pub mod plant;
pub mod protograph;
pub mod stats;
