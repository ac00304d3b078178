use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::config::MacroConfig;
use super::image::MacroImage;
use crate::error::{Error, Result};
use crate::rng::derived;

/// One ADC conversion in a matrix-vector product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Global pulse-step index.
    pub step: u64,
    pub chunk: u8,
    pub row_start: usize,
    /// Exclusive.
    pub row_end: usize,
    /// Rows whose wordline was pulsed in this step.
    pub pulses: u32,
    pub column: usize,
    pub count: u32,
    pub code: u32,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MvmRun {
    pub outputs: Vec<i64>,
    /// Pulse steps, each followed by one conversion of every used column.
    pub steps: u64,
    pub conversions: u64,
    pub clipped: u64,
    pub cycles: u64,
}

/// The schedule-relevant shape of one matrix-vector product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MvmJob {
    pub rows_used: usize,
    /// Physical columns read out.
    pub cols_used: usize,
    /// Largest chunk value (pulse count) of each activation chunk, LSB first.
    pub chunk_pulses: Vec<u32>,
}

impl MvmJob {
    pub fn from_activations(activations: &[u8], cols_used: usize, config: &MacroConfig) -> Self {
        let cb = config.act_chunk_bits;
        let mask = (1u32 << cb) - 1;
        let chunk_pulses = (0..config.chunks())
            .map(|k| activations.iter().map(|&a| (a as u32 >> (k as u8 * cb)) & mask).max().unwrap_or(0))
            .collect();
        Self { rows_used: activations.len(), cols_used, chunk_pulses }
    }

    /// Every chunk at full scale, the schedule used for data-independent
    /// estimates.
    pub fn worst_case(rows_used: usize, cols_used: usize, config: &MacroConfig) -> Self {
        let full = (1u32 << config.act_chunk_bits) - 1;
        Self { rows_used, cols_used, chunk_pulses: vec![full; config.chunks()] }
    }

    /// Pulse steps per row group; an empty chunk still occupies one step.
    pub fn steps_per_group(&self) -> u64 {
        self.chunk_pulses.iter().map(|&p| p.max(1) as u64).sum()
    }

    /// `row_groups × Σ_chunks max(1, pulses) × ceil(cols_used / adc_count)`.
    pub fn cycles(&self, config: &MacroConfig) -> u64 {
        config.row_groups(self.rows_used) as u64 * self.steps_per_group() * config.conversion_slots(self.cols_used) as u64
    }

    pub fn conversions(&self, config: &MacroConfig) -> u64 {
        config.row_groups(self.rows_used) as u64 * self.steps_per_group() * self.cols_used as u64
    }
}

/// Cycles for `job` on `image`'s configuration. The schedule: chunks are
/// processed LSB first; within a chunk every row group is stepped through the
/// same number of pulse steps (the chunk's largest value, at least one); each
/// step converts every used column through the shared ADCs.
pub fn latency_cycles(image: &MacroImage, job: &MvmJob) -> u64 {
    job.cycles(image.config())
}

impl MacroImage {
    /// Bit-serial matrix-vector product `Wᵀa` through the bitline/ADC path.
    /// Exact whenever no conversion clips and noise is off.
    pub fn mac_mvm(&self, activations: &[u8]) -> Result<Vec<i64>> {
        Ok(self.run_mvm(activations, None)?.outputs)
    }

    pub fn run_mvm(&self, activations: &[u8], mut trace: Option<&mut Vec<TraceEvent>>) -> Result<MvmRun> {
        let cfg = self.config();
        let rows = self.programmed_rows();
        if activations.len() != rows {
            return Err(Error::Shape(format!("{} activations for {rows} programmed rows", activations.len())));
        }
        let act_max = (1u32 << cfg.act_bits) - 1;
        if let Some(&a) = activations.iter().find(|&&a| a as u32 > act_max) {
            return Err(Error::BitWidth { value: a as i64, bits: cfg.act_bits, signed: false });
        }
        let cols_used = self.cols_used();
        let job = MvmJob::from_activations(activations, cols_used, cfg);
        let cb = cfg.act_chunk_bits;
        let chunk_mask = (1u32 << cb) - 1;
        let nwords = rows.div_ceil(64).max(1);
        let mut rng = (cfg.noise_sigma > 0.0).then(|| derived(cfg.noise_seed, "bitline-noise"));

        // Signed weight of each physical column at recombination.
        let mut significance = vec![0i64; cols_used];
        let mut logical_of = vec![0usize; cols_used];
        for (c, col) in self.column_map().iter().enumerate() {
            for s in &col.slices {
                significance[s.physical] = s.significance;
                logical_of[s.physical] = c;
            }
        }

        let mut outputs = vec![0i64; self.logical_cols()];
        let mut step: u64 = 0;
        let mut conversions: u64 = 0;
        let mut clipped: u64 = 0;
        let mut mask = vec![0u64; nwords];
        for (chunk, &pulses) in job.chunk_pulses.iter().enumerate() {
            let shift = chunk as u32 * cb as u32;
            let chunk_values: Vec<u32> = activations.iter().map(|&a| (a as u32 >> shift) & chunk_mask).collect();
            for group_start in (0..rows).step_by(cfg.rows_per_step) {
                let group_end = (group_start + cfg.rows_per_step).min(rows);
                for p in 0..pulses.max(1) {
                    mask.iter_mut().for_each(|w| *w = 0);
                    let mut pulsed = 0u32;
                    for r in group_start..group_end {
                        if chunk_values[r] > p {
                            mask[r / 64] |= 1 << (r % 64);
                            pulsed += 1;
                        }
                    }
                    for col in 0..cols_used {
                        let words = self.column_words(col);
                        let raw: u32 = words.iter().zip(&mask).map(|(a, b)| (a & b).count_ones()).sum();
                        let count = self.perturb(raw, group_end - group_start, rng.as_mut());
                        let code = cfg.adc_quantize(count);
                        conversions += 1;
                        clipped += code.clipped as u64;
                        outputs[logical_of[col]] += (code.code as i64 * significance[col]) << shift;
                        if let Some(t) = trace.as_deref_mut() {
                            t.push(TraceEvent {
                                step,
                                chunk: chunk as u8,
                                row_start: group_start,
                                row_end: group_end,
                                pulses: pulsed,
                                column: col,
                                count,
                                code: code.code,
                                clipped: code.clipped,
                            });
                        }
                    }
                    step += 1;
                }
            }
        }
        Ok(MvmRun { outputs, steps: step, conversions, clipped, cycles: job.cycles(cfg) })
    }
}
