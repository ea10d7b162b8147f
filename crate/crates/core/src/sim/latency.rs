use serde::{Deserialize, Serialize};

use super::topology::SpeedClass;

/// Cycle costs of the NoC primitives. All values are in slow-core cycles,
/// the single global time base of the simulation.
///
/// Defaults: one-way message = 17 + 2 cycles per hop, so a nearest-neighbour
/// round trip costs 38 cycles and a 21-hop round trip 118; a DMA starts in 24
/// cycles; runtime code on slow cores runs 7.5x slower than on fast cores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub msg_base_cycles: u64,
    pub msg_per_hop_cycles: u64,
    pub dma_startup_cycles: u64,
    pub dma_bytes_per_cycle: u64,
    /// Fixed software cost of draining one message from a peer buffer.
    pub msg_process_cycles: u64,
    pub slow_core_factor: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            msg_base_cycles: 17,
            msg_per_hop_cycles: 2,
            dma_startup_cycles: 24,
            dma_bytes_per_cycle: 4,
            msg_process_cycles: 450,
            slow_core_factor: 7.5,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        let ints = [
            ("msg_base_cycles", self.msg_base_cycles),
            ("msg_per_hop_cycles", self.msg_per_hop_cycles),
            ("dma_startup_cycles", self.dma_startup_cycles),
            ("dma_bytes_per_cycle", self.dma_bytes_per_cycle),
            ("msg_process_cycles", self.msg_process_cycles),
        ];
        for (name, v) in ints {
            if v == 0 {
                return Err(format!("latency.{name} must be positive"));
            }
        }
        if !(self.slow_core_factor.is_finite() && self.slow_core_factor > 0.0) {
            return Err("latency.slow_core_factor must be positive".into());
        }
        Ok(())
    }

    pub fn message_latency(&self, hops: u32) -> u64 {
        self.msg_base_cycles + self.msg_per_hop_cycles * u64::from(hops)
    }

    pub fn dma_latency(&self, bytes: u64, hops: u32) -> u64 {
        self.dma_startup_cycles + bytes.div_ceil(self.dma_bytes_per_cycle) + self.msg_per_hop_cycles * u64::from(hops)
    }

    /// Scale a runtime-code cost (given for a fast core) by the core's class.
    pub fn runtime_cost(&self, cycles: u64, class: SpeedClass) -> u64 {
        match class {
            SpeedClass::Fast => cycles,
            SpeedClass::Slow => (cycles as f64 * self.slow_core_factor).round() as u64,
        }
    }
}

/// Message-layer parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NocConfig {
    /// Fixed message size in bytes; longer runtime messages are fragmented.
    pub msg_size: usize,
    /// Slots per peer buffer (credits a sender starts with).
    pub buffer_slots: u32,
    /// Upper bound of a seeded random delay added to message delivery.
    /// Per-link FIFO order is preserved regardless.
    pub jitter_cycles: u64,
}

impl Default for NocConfig {
    fn default() -> Self {
        NocConfig {
            msg_size: 64,
            buffer_slots: 8,
            jitter_cycles: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_span_window() {
        let l = LatencyModel::default();
        assert_eq!(2 * l.message_latency(1), 38);
        let far = 2 * l.message_latency(21);
        assert!((38..=131).contains(&far));
    }

    #[test]
    fn latency_non_decreasing_in_hops() {
        let l = LatencyModel::default();
        for h in 0..40 {
            assert!(l.message_latency(h) <= l.message_latency(h + 1));
        }
    }

    #[test]
    fn slow_cores_scale_runtime_cost() {
        let l = LatencyModel::default();
        assert_eq!(l.runtime_cost(100, SpeedClass::Fast), 100);
        assert_eq!(l.runtime_cost(100, SpeedClass::Slow), 750);
    }

    #[test]
    fn zero_fields_rejected() {
        let l = LatencyModel {
            dma_bytes_per_cycle: 0,
            ..Default::default()
        };
        assert!(l.validate().is_err());
    }
}
