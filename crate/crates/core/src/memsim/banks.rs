use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankMode {
    /// A whole feature vector lives in one bank.
    FeatureMajor,
    /// Channel `c` of every vertex lives in bank `c mod B`.
    ChannelMajor,
}

/// Placement of a block's `vertices × channels` fp16 words across banks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BankLayout {
    pub mode: BankMode,
    pub banks: usize,
    /// Words (one channel value each) per bank.
    pub bank_words: usize,
    pub channels: usize,
    pub vertices: usize,
}

impl BankLayout {
    pub fn new(mode: BankMode, banks: usize, bank_words: usize, channels: usize, vertices: usize) -> Result<Self> {
        if banks == 0 || channels == 0 {
            return Err(Error::config("bank layout needs at least one bank and one channel"));
        }
        let l = BankLayout { mode, banks, bank_words, channels, vertices };
        if l.rows_needed() > bank_words {
            return Err(Error::config(format!("{vertices} vertices x {channels} channels do not fit {banks} banks of {bank_words} words")));
        }
        Ok(l)
    }

    fn rows_needed(&self) -> usize {
        match self.mode {
            BankMode::FeatureMajor => self.vertices.div_ceil(self.banks) * self.channels,
            BankMode::ChannelMajor => self.channels.div_ceil(self.banks) * self.vertices,
        }
    }

    /// `(bank, row)` of channel `c` of block vertex `v`.
    pub fn map(&self, v: usize, c: usize) -> (usize, usize) {
        let b = self.banks;
        match self.mode {
            BankMode::FeatureMajor => (v % b, (v / b) * self.channels + c),
            BankMode::ChannelMajor => (c % b, (c / b) * self.vertices + v),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConflictStats {
    pub requests: usize,
    /// Requests that found their bank's ports already taken that cycle.
    pub conflicting: usize,
    pub stall_cycles: usize,
    pub cycles: usize,
    pub conflict_rate: f64,
}

fn issue(cycle: &[usize], banks: usize, ports: usize, stats: &mut ConflictStats) {
    let mut load = vec![0usize; banks];
    for &b in cycle {
        load[b] += 1;
    }
    stats.requests += cycle.len();
    stats.conflicting += load.iter().map(|&n| n.saturating_sub(ports)).sum::<usize>();
    let serial = load.iter().map(|&n| n.div_ceil(ports)).max().unwrap_or(0);
    stats.cycles += serial.max(1);
    stats.stall_cycles += serial.saturating_sub(1);
}

/// Replays gather batches (a batch is the block vertex each lane needs) and
/// counts port conflicts.
///
/// Feature-major: each lane requests its vertex's home bank in the same
/// cycle. Channel-major: `ports` vertices are served per step and lane `k`
/// reads channel `k` (then `k + lanes`, ...) of each, one bank per lane.
pub fn simulate_bank_conflicts(batches: &[Vec<usize>], layout: &BankLayout, lanes: usize, ports: usize) -> Result<ConflictStats> {
    if ports == 0 || lanes == 0 {
        return Err(Error::config("need at least one lane and one port"));
    }
    if layout.mode == BankMode::ChannelMajor && lanes > layout.banks {
        return Err(Error::config(format!("{lanes} lanes exceed {} banks in channel-major mode", layout.banks)));
    }
    let mut stats = ConflictStats::default();
    for batch in batches {
        if batch.len() > lanes {
            return Err(Error::input(format!("batch of {} requests for {lanes} lanes", batch.len())));
        }
        match layout.mode {
            BankMode::FeatureMajor => {
                let cycle: Vec<usize> = batch.iter().map(|&v| layout.map(v, 0).0).collect();
                issue(&cycle, layout.banks, ports, &mut stats);
            }
            BankMode::ChannelMajor => {
                for group in batch.chunks(ports) {
                    for pass in (0..layout.channels).step_by(lanes) {
                        let cycle: Vec<usize> = group
                            .iter()
                            .flat_map(|&v| (pass..(pass + lanes).min(layout.channels)).map(move |c| layout.map(v, c).0))
                            .collect();
                        issue(&cycle, layout.banks, ports, &mut stats);
                    }
                }
            }
        }
    }
    stats.conflict_rate = if stats.requests == 0 { 0.0 } else { stats.conflicting as f64 / stats.requests as f64 };
    Ok(stats)
}
