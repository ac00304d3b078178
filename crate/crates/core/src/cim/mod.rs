//! Behavioral model of a compute-in-memory macro.
//!
//! Weights are stored bit-sliced: a signed `weight_bits` weight occupies that
//! many adjacent physical columns, one two's-complement bit per column.
//! Activations are applied bit-serially in chunks of `act_chunk_bits`; a chunk
//! of value `v` becomes `v` unary pulses on the row's wordline. Each pulse step
//! activates at most `rows_per_step` rows, every used column's bitline count is
//! digitized by a shared ADC, and the digital periphery recombines the codes
//! with shift-and-add.
//!
//! The analog behavior is reduced to "number of turned-on cells on a bitline",
//! optionally perturbed by Gaussian count noise.

mod config;
mod image;
mod mvm;

pub use config::{AdcCode, CellKind, MacroConfig, MacroStats, SRAM_TO_ROM_CELL_RATIO};
pub use image::{BitSlice, LogicalColumn, MacroImage, WeightMatrix};
pub use mvm::{latency_cycles, MvmJob, MvmRun, TraceEvent};
