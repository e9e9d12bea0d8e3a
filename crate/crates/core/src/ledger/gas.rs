//! Gas schedule and primitive-count metering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown gas key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{value}` is not an unsigned integer")]
    BadValue { line: usize, value: String },
}

/// Per-primitive costs. Immutable for the duration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasSchedule {
    pub tx_base: u64,
    pub storage_write_new: u64,
    pub storage_write_update: u64,
    pub storage_read: u64,
    pub log_base: u64,
    pub log_topic: u64,
    pub log_data_byte: u64,
    pub hash_base: u64,
    pub hash_word: u64,
    pub loop_iteration: u64,
    pub call_overhead: u64,
}

impl Default for GasSchedule {
    /// Public fee-schedule values plus two calibrated constants. With
    /// `loop_iteration = 64`, `call_overhead` is chosen so that the first
    /// `approve` of the canonical scenario (one existing admin) meters 61613.
    fn default() -> Self {
        Self {
            tx_base: 21000,
            storage_write_new: 20000,
            storage_write_update: 5000,
            storage_read: 2100,
            log_base: 375,
            log_topic: 375,
            log_data_byte: 8,
            hash_base: 30,
            hash_word: 6,
            loop_iteration: 64,
            call_overhead: 5585,
        }
    }
}

impl GasSchedule {
    const KEYS: [&'static str; 11] = [
        "tx_base",
        "storage_write_new",
        "storage_write_update",
        "storage_read",
        "log_base",
        "log_topic",
        "log_data_byte",
        "hash_base",
        "hash_word",
        "loop_iteration",
        "call_overhead",
    ];

    fn slot(&mut self, key: &str) -> Option<&mut u64> {
        Some(match key {
            "tx_base" => &mut self.tx_base,
            "storage_write_new" => &mut self.storage_write_new,
            "storage_write_update" => &mut self.storage_write_update,
            "storage_read" => &mut self.storage_read,
            "log_base" => &mut self.log_base,
            "log_topic" => &mut self.log_topic,
            "log_data_byte" => &mut self.log_data_byte,
            "hash_base" => &mut self.hash_base,
            "hash_word" => &mut self.hash_word,
            "loop_iteration" => &mut self.loop_iteration,
            "call_overhead" => &mut self.call_overhead,
            _ => return None,
        })
    }

    fn get(&self, key: &str) -> u64 {
        let mut copy = *self;
        *copy.slot(key).expect("known key")
    }

    /// Gas for one invocation's primitive trace. Read-only calls use the
    /// same formula for their reported execution cost.
    pub fn meter(&self, trace: &OpTrace) -> u64 {
        self.tx_base
            + self.call_overhead * trace.invocations
            + self.storage_write_new * trace.storage_writes_new
            + self.storage_write_update * trace.storage_writes_update
            + self.storage_read * trace.storage_reads
            + self.log_base * trace.logs
            + self.log_topic * trace.log_topics
            + self.log_data_byte * trace.log_data_bytes
            + self.hash_base * trace.hashes
            + self.hash_word * trace.hash_words
            + self.loop_iteration * trace.loop_iterations
    }
}

/// Flat `key = value` text, `#` comments. Keys left out keep their default.
impl FromStr for GasSchedule {
    type Err = ScheduleError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut schedule = GasSchedule::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ScheduleError::Syntax { line })?;
            let key = key.trim();
            let value = value.trim();
            let slot = schedule
                .slot(key)
                .ok_or_else(|| ScheduleError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
            *slot = value.parse().map_err(|_| ScheduleError::BadValue {
                line,
                value: value.to_string(),
            })?;
        }
        Ok(schedule)
    }
}

impl fmt::Display for GasSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for key in Self::KEYS {
            writeln!(f, "{key} = {}", self.get(key))?;
        }
        Ok(())
    }
}

/// Counts of metered primitives touched by one contract invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpTrace {
    pub invocations: u64,
    pub storage_reads: u64,
    pub storage_writes_new: u64,
    pub storage_writes_update: u64,
    pub logs: u64,
    pub log_topics: u64,
    pub log_data_bytes: u64,
    pub hashes: u64,
    pub hash_words: u64,
    pub loop_iterations: u64,
}

impl OpTrace {
    pub fn read(&mut self, n: u64) {
        self.storage_reads += n;
    }

    /// Storage write to a slot that was zero (`fresh`) or already populated.
    pub fn write(&mut self, fresh: bool) {
        if fresh {
            self.storage_writes_new += 1;
        } else {
            self.storage_writes_update += 1;
        }
    }

    pub fn log(&mut self, topics: u64, data_bytes: u64) {
        self.logs += 1;
        self.log_topics += topics;
        self.log_data_bytes += data_bytes;
    }

    pub fn hash(&mut self, input_len: usize) {
        self.hashes += 1;
        self.hash_words += crate::crypto::word_count(input_len);
    }

    pub fn iterate(&mut self) {
        self.loop_iterations += 1;
    }
}
