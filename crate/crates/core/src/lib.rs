//! Detection building blocks: tabular loading, random and isolation
//! forests, an LSTM sequence classifier, flow features from packet
//! captures, web-log windowing, malware static analysis, evaluation
//! metrics and the operational pieces (alerts, model files).

pub mod evalkit;
pub mod forest;
pub mod isoforest;
pub mod malwarelab;
pub mod matrix;
pub mod netflow;
pub mod opsd;
pub mod rng;
pub mod seqnet;
pub mod synth;
pub mod tabular;
pub mod weblog;
