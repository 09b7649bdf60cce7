//! Core library: a hashed-embedding vector memory, diversity metrics, a
//! model-collapse laboratory, an autonomous agent loop with simulated social
//! and chain connectors, and the self-dialogue experiment.

pub mod agent;
pub mod backrooms;
pub mod chain;
pub mod clock;
pub mod collapse;
pub mod config;
pub mod diversity;
pub mod embedding;
pub mod generator;
pub mod hashing;
pub mod journal;
pub mod memory;
pub mod platforms;
pub mod sentiment;
