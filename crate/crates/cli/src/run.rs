use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use tim_dcop::scenarios::{write_stages_csv, Policy, RunResult};
use tim_dcop::uav::write_assimilation_csv;
use tim_dcop::{Error, Result};

use crate::manifest::RunManifest;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn execute(m: &RunManifest, out: &Path) -> Result<()> {
    let world = m.scenario.materialize()?;
    let results = m
        .policies
        .par_iter()
        .map(|&p| m.scenario.run_world(&world, p))
        .collect::<Result<Vec<RunResult>>>()?;

    fs::create_dir_all(out.join("traces"))?;
    m.write(out)?;
    let mut json = serde_json::to_string_pretty(&results)?;
    json.push('\n');
    fs::write(out.join("results.json"), json)?;
    write_stages_csv(&results, BufWriter::new(File::create(out.join("stages.csv"))?))?;
    write_comparison(&results, out)?;
    let records: Vec<_> = results.iter().flat_map(|r| r.assimilation.iter().cloned()).collect();
    write_assimilation_csv(&records, BufWriter::new(File::create(out.join("assimilation.csv"))?))?;
    for r in &results {
        write_traces(r, &out.join("traces").join(format!("{}.csv", r.policy.label())))?;
    }
    Ok(())
}

/// One row per policy, with its delay rank and relative gaps.
fn write_comparison(results: &[RunResult], out: &Path) -> Result<()> {
    let best = results.iter().map(|r| r.total_delay).fold(f64::INFINITY, f64::min);
    let conv = results.iter().find(|r| r.policy == Policy::Conventional).map(|r| r.total_delay);
    let mut w = csv::Writer::from_path(out.join("comparison.csv")).map_err(csv_err)?;
    w.write_record([
        "policy",
        "incidents",
        "total_delay",
        "total_response_min",
        "total_uav_utility",
        "rank",
        "gap_to_best_pct",
        "improvement_vs_conventional_pct",
    ])
    .map_err(csv_err)?;
    let pct = |num: f64, den: f64| if den > 0.0 { (100.0 * num / den).to_string() } else { String::new() };
    for r in results {
        let rank = 1 + results.iter().filter(|o| o.total_delay < r.total_delay).count();
        w.write_record([
            r.policy.label().to_string(),
            r.incidents.len().to_string(),
            r.total_delay.to_string(),
            r.total_response_min.to_string(),
            r.total_uav_utility.to_string(),
            rank.to_string(),
            pct(r.total_delay - best, best),
            conv.map(|c| pct(c - r.total_delay, c)).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-round solver progress for every stage solve of one policy.
fn write_traces(r: &RunResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["solve", "variant", "iteration", "best_cost", "current_cost", "moves", "messages"])
        .map_err(csv_err)?;
    for (k, t) in r.traces.iter().enumerate() {
        for i in 0..t.iterations() {
            w.write_record([
                k.to_string(),
                t.variant.clone(),
                (i + 1).to_string(),
                t.best_cost[i].to_string(),
                t.current_cost[i].to_string(),
                t.moves[i].to_string(),
                t.messages_per_round[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
