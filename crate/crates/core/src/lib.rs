//! Core of an optimization-pass fuzzer: the MiniLang reference compiler,
//! source extraction, prompt rendering, the stub model, trigger accounting,
//! the Thompson-sampling example scheduler and the test oracles.
//!
//! Everything here is `no_std` + `alloc`; IO, subprocesses, HTTP and the
//! campaign driver live in the `optfuzz` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bandit;
pub mod bytes_text;
pub mod catalog;
pub mod extract;
pub mod hash;
pub mod minilang;
pub mod model;
pub mod oracle;
pub mod program;
pub mod prompt;
pub mod sut;
pub mod trigger;
