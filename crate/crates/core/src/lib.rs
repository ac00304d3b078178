//! Behavioral and cost model of ROM-based compute-in-memory (CiM) inference.
//!
//! The crate is split along the path a network takes from a description to a
//! system-level number:
//!
//! * [`quant`], [`graph`] and [`reference`]: integer tensors, network graphs and
//!   the bit-exact digital reference every hardware result is checked against.
//! * [`cim`]: the bit-sliced, bit-serial macro model with ADC digitization.
//! * [`rebranch`]: graph transforms that attach small trainable SRAM branches to
//!   frozen ROM layers, plus parameter/area accounting.
//! * [`train`]: a small float engine to fine-tune the trainable parts.
//! * [`mapper`]: tiling of weight matrices onto subarrays and plan evaluation.
//! * [`sysmodel`]: energy, latency and area of hybrid ROM+SRAM, single-chip SRAM
//!   and SRAM chiplet systems.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod cim;
pub mod error;
pub mod graph;
pub mod mapper;
pub mod quant;
pub mod rebranch;
pub mod reference;
pub mod rng;
pub mod sysmodel;
pub mod tensor;
pub mod train;
pub mod workloads;

pub use error::{Error, Result};
