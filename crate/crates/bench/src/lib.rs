//! Shared fixtures for the benchmarks.

use telapart_core::diagnose::daily_schedule;
use telapart_core::synth::generate;
use telapart_core::{DetectionThresholds, Direction, HyperParams, MetricThreshold, PreparedFNode, SynthConfig, SynthOutput};

/// Synthetic network of `n_fnodes` nodes with `devices` devices each over
/// one week.
pub fn network(n_fnodes: usize, devices: usize) -> SynthOutput {
    let cfg = SynthConfig {
        seed: 17,
        n_fnodes,
        devices_per_fnode: devices,
        duration_days: 7.0,
        ..SynthConfig::default()
    };
    generate(&cfg).expect("valid synthetic configuration")
}

/// Defaults for the synthetic interval with an SNR rule, so detection and
/// flagging do real work.
pub fn hyper() -> HyperParams {
    let mut h = HyperParams::new(4.0, 3);
    h.detection = DetectionThresholds {
        snr: Some(MetricThreshold {
            value: 33.0,
            direction: Direction::Below,
        }),
        ..DetectionThresholds::default()
    };
    h
}

pub fn prepared(out: &SynthOutput, hyper: &HyperParams) -> Vec<PreparedFNode> {
    out.datasets
        .iter()
        .map(|d| PreparedFNode::from_hyper(d, hyper).expect("prepare"))
        .collect()
}

/// Daily diagnosis times spanning the prepared nodes.
pub fn schedule(prepared: &[PreparedFNode], hyper: &HyperParams) -> Vec<f64> {
    let (lo, hi) = prepared
        .iter()
        .filter_map(PreparedFNode::bounds)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, h)| (a.min(l), b.max(h)));
    daily_schedule(lo, hi, hyper.lookback_days)
}
