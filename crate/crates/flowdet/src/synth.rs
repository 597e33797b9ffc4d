//! Synthetic flow traffic for demos and tests.
//!
//! Generates NetFlow-layout CSVs with an exact benign/malicious mix and
//! behaviourally distinct attack families (DDoS, DoS, reconnaissance, data
//! theft), plus pre-normalized spike windows for quick separability checks.
//! Everything is deterministic under a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::preprocess::SequenceWindow;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub rows: usize,
    /// Fraction of benign rows; the generated count is the rounded product.
    pub benign_fraction: f64,
    pub seed: u64,
}

const HEADER: &str = "IPV4_SRC_ADDR,L4_SRC_PORT,IPV4_DST_ADDR,L4_DST_PORT,PROTOCOL,L7_PROTO,IN_BYTES,OUT_BYTES,IN_PKTS,OUT_PKTS,TCP_FLAGS,FLOW_DURATION_MILLISECONDS,Label,Attack";

fn ip(rng: &mut ChaCha8Rng, prefix: &str) -> String {
    format!(
        "{prefix}.{}.{}",
        rng.random_range(0..256),
        rng.random_range(1..255)
    )
}

fn benign_row(rng: &mut ChaCha8Rng) -> String {
    let src = ip(rng, "192.168");
    let dst = ip(rng, "10.0");
    let src_port = rng.random_range(1024..65536);
    let dst_port = *[80, 443, 53, 22, 123, 8080]
        .get(rng.random_range(0..6))
        .unwrap();
    let (proto, l7, flags) = if dst_port == 53 || dst_port == 123 {
        (17, 5.0, 0)
    } else {
        (
            6,
            7.0,
            [24, 27, 30].get(rng.random_range(0..3)).copied().unwrap(),
        )
    };
    let in_pkts = rng.random_range(3..60);
    let out_pkts = rng.random_range(3..80);
    let in_bytes = in_pkts * rng.random_range(80..900);
    let out_bytes = out_pkts * rng.random_range(100..1200);
    let duration = rng.random_range(50..30000);
    format!(
        "{src},{src_port},{dst},{dst_port},{proto},{l7},{in_bytes},{out_bytes},{in_pkts},{out_pkts},{flags},{duration},0,Benign"
    )
}

fn attack_row(rng: &mut ChaCha8Rng) -> String {
    let src = ip(rng, "172.16");
    let dst = ip(rng, "10.0");
    let src_port = rng.random_range(1024..65536);
    let family = rng.random_range(0..10);
    let (attack, dst_port, proto, l7, in_bytes, out_bytes, in_pkts, out_pkts, flags, duration) =
        if family < 4 {
            // volumetric flood: tiny one-way SYN flows
            (
                "DDoS",
                80,
                6,
                0.0,
                rng.random_range(40..120),
                0,
                rng.random_range(1..3),
                0,
                2,
                rng.random_range(0..5),
            )
        } else if family < 7 {
            (
                "DoS",
                *[80, 443].get(rng.random_range(0..2)).unwrap(),
                6,
                0.0,
                rng.random_range(60..400),
                rng.random_range(0..60),
                rng.random_range(1..5),
                rng.random_range(0..2),
                2,
                rng.random_range(0..20),
            )
        } else if family < 9 {
            // port scan probes
            (
                "Reconnaissance",
                rng.random_range(1..1024),
                6,
                0.0,
                rng.random_range(40..80),
                rng.random_range(0..40),
                1,
                rng.random_range(0..2),
                2,
                rng.random_range(0..10),
            )
        } else {
            // exfiltration: long, heavily outbound flows
            (
                "Theft",
                *[21, 22].get(rng.random_range(0..2)).unwrap(),
                6,
                1.0,
                rng.random_range(100..1000),
                rng.random_range(100_000..5_000_000),
                rng.random_range(10..100),
                rng.random_range(100..4000),
                24,
                rng.random_range(10_000..120_000),
            )
        };
    format!(
        "{src},{src_port},{dst},{dst_port},{proto},{l7},{in_bytes},{out_bytes},{in_pkts},{out_pkts},{flags},{duration},1,{attack}"
    )
}

/// Generate a full CSV document (header + rows). The benign row count is
/// exactly `round(rows * benign_fraction)`, placed at seeded-random stream
/// positions.
pub fn generate_flows(cfg: &SynthConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let benign_count = (cfg.rows as f64 * cfg.benign_fraction).round() as usize;
    let mut is_benign = vec![false; cfg.rows];
    for slot in is_benign.iter_mut().take(benign_count) {
        *slot = true;
    }
    // Fisher-Yates placement of the benign slots
    for i in (1..cfg.rows).rev() {
        let j = rng.random_range(0..i + 1);
        is_benign.swap(i, j);
    }
    let mut out = String::with_capacity(cfg.rows * 96);
    out.push_str(HEADER);
    out.push('\n');
    for &benign in &is_benign {
        let row = if benign {
            benign_row(&mut rng)
        } else {
            attack_row(&mut rng)
        };
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Write [`generate_flows`] output to a file.
pub fn write_flows_csv(path: impl AsRef<Path>, cfg: &SynthConfig) -> Result<()> {
    std::fs::write(path, generate_flows(cfg))?;
    Ok(())
}

/// Pre-normalized windows for a separability benchmark: every window is
/// low-amplitude noise, and class-1 windows carry a two-step spike on the
/// first features at a random interior position. Values stay in [0, 1].
pub fn spike_windows(
    count: usize,
    window_len: usize,
    arity: usize,
    seed: u64,
) -> Vec<SequenceWindow> {
    assert!(window_len >= 3, "spike needs an interior position");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spiked = arity.min(2);
    (0..count)
        .map(|i| {
            let label = (i % 2) as u8;
            let mut x: Vec<f64> = (0..window_len * arity)
                .map(|_| 0.05 + rng.random::<f64>() * 0.3)
                .collect();
            if label == 1 {
                let start = rng.random_range(1..window_len - 1);
                for t in start..(start + 2).min(window_len) {
                    for j in 0..spiked {
                        x[t * arity + j] = (x[t * arity + j] + 0.55).min(1.0);
                    }
                }
            }
            SequenceWindow {
                x,
                window_len,
                arity,
                label,
                origin_index: i,
            }
        })
        .collect()
}
