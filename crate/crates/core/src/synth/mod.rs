//! Seeded generators for test fixtures and demos: web logs, PE corpora
//! and packet traces.

pub mod malware;
pub mod traffic;
pub mod weblog;
