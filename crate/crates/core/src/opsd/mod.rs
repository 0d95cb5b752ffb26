//! Operational plumbing shared by the command-line tools: alerts, model
//! files, key=value configuration and a polling directory watcher.

pub mod alert;
pub mod config;
pub mod container;
pub mod watch;

pub use alert::{
    Alert, AlertHub, AlertSink, AlertSource, JsonlSink, MemorySink, NullSink, Severity, SinkError, StdoutSink,
};
pub use container::{decode_model, encode_model, load_kind, load_model, save_model, ContainerError, Model, ModelKind};
