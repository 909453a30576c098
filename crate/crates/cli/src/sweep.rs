use std::fs;
use std::path::Path;

use rayon::prelude::*;
use tim_dcop::scenarios::{with_seed, Scenario};
use tim_dcop::stats::Summary;
use tim_dcop::{Error, Result};

use crate::manifest::RunManifest;

/// Every combination of axis values, first axis varying slowest.
fn grid(m: &RunManifest) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for a in &m.axes {
        points = points
            .iter()
            .flat_map(|p| {
                a.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

fn scenario_at(m: &RunManifest, point: &[f64], trial: usize) -> Result<Scenario> {
    let mut sc = with_seed(&m.scenario, m.seed.wrapping_add(trial as u64));
    for (a, &v) in m.axes.iter().zip(point) {
        a.axis.apply(&mut sc, v)?;
    }
    sc.validate()?;
    Ok(sc)
}

/// Delay, response and UAV utility per policy for one trial.
type Trial = Vec<[f64; 3]>;

pub fn execute(m: &RunManifest, out: &Path) -> Result<()> {
    let trials = m.trials.unwrap_or(1);
    if m.axes.is_empty() || trials == 0 {
        return Err(Error::InvalidInput("a sweep needs an axis and at least one trial".into()));
    }
    let points = grid(m);
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..trials).map(move |t| (p, t))).collect();
    // collect keeps job order, so the aggregate does not depend on scheduling
    let runs = jobs
        .par_iter()
        .map(|&(p, t)| -> Result<Trial> {
            let sc = scenario_at(m, &points[p], t)?;
            let world = sc.materialize()?;
            m.policies
                .iter()
                .map(|&pol| {
                    let r = sc.run_world(&world, pol)?;
                    Ok([r.total_delay, r.total_response_min, r.total_uav_utility])
                })
                .collect()
        })
        .collect::<Result<Vec<Trial>>>()?;

    fs::create_dir_all(out)?;
    m.write(out)?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv")).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut header: Vec<String> = m.axes.iter().map(|a| a.axis.name().to_string()).collect();
    header.extend(
        ["policy", "trials", "delay_mean", "delay_se", "response_min_mean", "response_min_se", "uav_utility_mean", "uav_utility_se"]
            .map(String::from),
    );
    w.write_record(&header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (p, point) in points.iter().enumerate() {
        let block = &runs[p * trials..(p + 1) * trials];
        for (k, pol) in m.policies.iter().enumerate() {
            let mut row: Vec<String> = point.iter().map(|v| v.to_string()).collect();
            row.push(pol.label().to_string());
            row.push(trials.to_string());
            for metric in 0..3 {
                let s = Summary::of(&block.iter().map(|t| t[k][metric]).collect::<Vec<_>>());
                row.push(s.mean.to_string());
                row.push(s.se.to_string());
            }
            w.write_record(&row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    w.flush()?;
    Ok(())
}
