//! Every variant on two-moons with a 30° rotated target, side by side.
//!
//! ```text
//! cargo run --release -p sga --example rotated_moons -- [seeds] [epochs]
//! ```
//!
//! 129 epochs of 62 steps is the 8000-iteration budget of the default
//! configuration, spent on a 1000-point dataset.

use std::time::Instant;

use sga::data::DatasetSpec;
use sga::harness::{compare_variants, DataSource, TrainConfig, Variant};

fn main() -> sga::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(5, |s| s.parse().expect("seed count"));
    let epochs: usize = args.next().map_or(129, |s| s.parse().expect("epochs"));

    let data = DataSource::Spec(DatasetSpec::two_moons(1000, 30.0, 0.1, 7));
    let configs: Vec<TrainConfig> = Variant::ALL
        .iter()
        .map(|&v| TrainConfig {
            epochs,
            ..TrainConfig::new(data.clone(), v)
        })
        .collect();
    let seeds: Vec<u64> = (0..seeds).collect();
    let start = Instant::now();
    let cmp = compare_variants(&configs, &seeds)?;
    print!("{}", cmp.to_table());
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
