//! Generate a synthetic NetFlow-layout CSV for quick experiments:
//!
//! ```text
//! cargo run -p flowdet --example synth_data -- flows.csv 600 0.3 7
//! ```
//!
//! Arguments: output path, row count, benign fraction, seed.

use flowdet::synth::{write_flows_csv, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 5 {
        eprintln!("usage: synth_data <out.csv> <rows> <benign_fraction> <seed>");
        std::process::exit(1);
    }
    let cfg = SynthConfig {
        rows: args[2].parse().expect("rows"),
        benign_fraction: args[3].parse().expect("benign_fraction"),
        seed: args[4].parse().expect("seed"),
    };
    write_flows_csv(&args[1], &cfg).expect("write csv");
    println!("wrote {} rows to {}", cfg.rows, args[1]);
}
