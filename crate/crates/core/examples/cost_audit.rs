//! FLOPs and parameter counts for the standard variants at 1024 → 512
//! features, 120 instances per bag.
//!
//!     cargo run --example cost_audit -- 240

use milr::models::{count_flops, count_params, format_kilo, format_mega, standard_variants};

fn main() {
    let bag: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(120);
    println!("{:<18} {:>12} {:>12}", "model", format!("FLOPs@{bag}"), "size");
    for cfg in standard_variants() {
        println!(
            "{:<18} {:>12} {:>12}",
            cfg.name(),
            format_mega(count_flops(&cfg, bag)),
            format_kilo(count_params(&cfg))
        );
    }
}
