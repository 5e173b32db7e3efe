#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod catalog;
pub mod cooccur;
pub mod diagnostics;
pub mod embedding;
pub mod eval;
pub mod matrix;
pub mod objectives;
pub mod seed;
pub mod synthesis;
pub mod text;
pub mod toyworld;
pub mod types;
