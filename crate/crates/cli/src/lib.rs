//! Command line and HTTP front ends for the meme generator.

pub mod commands;
pub mod service;
