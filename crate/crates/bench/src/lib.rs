//! Benchmarks live in `benches/`; run them with `cargo bench -p tim-dcop-bench`.

use tim_dcop::scenarios::{NetworkConfig, Scenario};

/// Default scenario on a `side` x `side` grid with `incidents` requests per stage.
pub fn scenario(side: usize, incidents: usize, ervs: usize) -> Scenario {
    Scenario {
        seed: 1,
        network: NetworkConfig { rows: side, cols: side, ..Default::default() },
        schedule: vec![incidents; 5],
        ervs,
        ..Default::default()
    }
}
