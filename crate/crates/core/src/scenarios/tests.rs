use super::*;
use crate::incidents::TrafficParams;

fn small(seed: u64) -> Scenario {
    Scenario { seed, network: NetworkConfig { rows: 5, cols: 5, ..Default::default() }, ..Default::default() }
}

fn fixed_grid() -> NetworkConfig {
    NetworkConfig { rows: 3, cols: 3, range: TimeRange::new(0.25, 0.25), seed: Some(0) }
}

fn params(clearance: f64) -> TrafficParams {
    TrafficParams { s: 1800.0, s1_mean: 1100.0, s1_sd: 200.0, q: 1500.0, r_var: 0.04, clearance }
}

fn record(id: u32, cell: u32, t: f64, clearance: f64) -> IncidentRecord {
    IncidentRecord {
        id,
        severity: 3,
        cell: CellId(cell),
        report_time_h: t,
        params: Some(params(clearance)),
        hazard: Some(5),
        sparsity: Some(3),
    }
}

#[test]
fn runs_every_policy() {
    let sc = small(1);
    for p in Policy::ALL {
        let r = sc.run(p).unwrap();
        assert_eq!(r.incidents.len(), 5);
        assert!(r.total_delay >= 0.0);
        let sum: f64 = r.incidents.iter().map(|o| o.delay).sum();
        assert_eq!(r.total_delay, sum);
    }
}

#[test]
fn single_incident_single_erv_is_policy_independent() {
    let sc = Scenario {
        network: fixed_grid(),
        incidents: vec![record(0, 8, 0.0, 0.5)],
        ervs: 1,
        erv_cells: Some(vec![CellId(0)]),
        ..Default::default()
    };
    let delays: Vec<f64> = Policy::ALL.iter().map(|&p| sc.run(p).unwrap().total_delay).collect();
    let expect = crate::incidents::expected_delay(&params(0.5), 1.0).unwrap();
    for d in delays {
        assert!((d - expect).abs() < 1e-9 * expect);
    }
}

#[test]
fn busy_erv_is_left_out() {
    let sc = Scenario {
        network: fixed_grid(),
        incidents: vec![record(0, 2, 0.0, 1.0), record(1, 6, 1.0, 0.5)],
        ervs: 1,
        erv_cells: Some(vec![CellId(0)]),
        ..Default::default()
    };
    let r = sc.run(Policy::Pdronetim).unwrap();
    let at_one = r.stages.iter().find(|s| s.time_h == 1.0).unwrap();
    assert!(at_one.free_ervs.is_empty());
    let second = &r.incidents[1];
    assert_eq!(second.dispatch_time_h, 1.5);
    // waits 0.5 h, then four 0.25 h edges from cell 2
    assert!((second.response_h - 1.5).abs() < 1e-12);
}

#[test]
fn quiet_scenario_only_relocates() {
    let sc = Scenario { schedule: vec![0, 0, 0], ..small(4) };
    let r = sc.run(Policy::Pdronetim).unwrap();
    assert_eq!(r.total_delay, 0.0);
    assert!(r.incidents.is_empty());
    assert_eq!(r.stages.len(), 3);
    assert!(r.stages.iter().all(|s| s.dispatched.is_empty()));
    assert!(r.stages[0].relocated > 0);
}

#[test]
fn optimum_bounds_both_online_policies() {
    for seed in 0..10 {
        let sc = small(seed);
        let w = sc.materialize().unwrap();
        let opt = sc.run_world(&w, Policy::Opt).unwrap().total_delay;
        for p in [Policy::Conventional, Policy::Pdronetim] {
            let d = sc.run_world(&w, p).unwrap().total_delay;
            assert!(opt <= d * (1.0 + 1e-12), "seed {seed}: OPT {opt} > {p:?} {d}");
        }
    }
}

#[test]
fn runtime_example_ordering() {
    let sc = Scenario { seed: 0, ervs: 2, ..Default::default() };
    let w = sc.materialize().unwrap();
    let d: Vec<f64> = Policy::ALL.iter().map(|&p| sc.run_world(&w, p).unwrap().total_delay).collect();
    let (conv, pd, opt) = (d[0], d[1], d[2]);
    assert!(opt <= pd && pd <= conv, "{opt} {pd} {conv}");
}

#[test]
fn optimum_refuses_above_cap() {
    let sc = Scenario { opt_cap: 5, ..small(2) };
    match sc.run(Policy::Opt) {
        Err(Error::CapExceeded { cap, .. }) => assert_eq!(cap, 5),
        other => panic!("expected cap error, got {other:?}"),
    }
}

#[test]
fn cooperation_never_hurts() {
    for seed in 0..5 {
        let on = Scenario { uavs: 3, cooperation: true, ..small(seed) };
        let off = Scenario { cooperation: false, ..on.clone() };
        let a = on.run(Policy::Pdronetim).unwrap();
        let b = off.run(Policy::Pdronetim).unwrap();
        assert!(a.total_delay <= b.total_delay);
        for (x, y) in a.incidents.iter().zip(&b.incidents) {
            assert_eq!((x.id, x.erv, x.dispatch_time_h, x.uav), (y.id, y.erv, y.dispatch_time_h, y.uav));
        }
    }
}

#[test]
fn uav_observations_are_logged() {
    let sc = Scenario { uavs: 2, schedule: vec![2, 1, 1], ..small(6) };
    let r = sc.run(Policy::Pdronetim).unwrap();
    assert!(!r.assimilation.is_empty());
    for a in &r.assimilation {
        assert!(a.post_var < a.prior_var);
        let o = r.incidents.iter().find(|o| o.id == a.incident).unwrap();
        assert!(o.uav.is_some());
        assert_eq!(o.posterior.unwrap().variance, a.post_var);
    }
}

#[test]
fn identical_scenarios_give_identical_bytes() {
    let sc = Scenario { uavs: 2, ..small(9) };
    let a = serde_json::to_string(&sc.run(Policy::Pdronetim).unwrap()).unwrap();
    let b = serde_json::to_string(&sc.run(Policy::Pdronetim).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scenario_json_defaults_and_rejects_unknown_fields() {
    let sc = Scenario::from_json(r#"{"seed": 3, "ervs": 2}"#).unwrap();
    assert_eq!((sc.seed, sc.ervs, sc.stage_gap), (3, 2, 0.5));
    assert!(Scenario::from_json(r#"{"seeds": 3}"#).is_err());
    assert!(Scenario::from_json(r#"{"ervs": 0}"#).is_err());
    assert!(Scenario::from_json("{").is_err());
}

#[test]
fn scheduled_cells_are_distinct() {
    let sc = Scenario { schedule: vec![5, 5, 5], ..small(11) };
    let w = sc.materialize().unwrap();
    let mut cells: Vec<_> = w.incidents.iter().map(|i| i.location).collect();
    cells.sort();
    cells.dedup();
    assert_eq!(cells.len(), 15);
    assert_eq!(w.stage_times, vec![0.0, 0.5, 1.0]);
}

#[test]
fn stages_csv_has_one_row_per_stage() {
    let sc = small(3);
    let rs: Vec<RunResult> = Policy::ALL.iter().map(|&p| sc.run(p).unwrap()).collect();
    let mut buf = Vec::new();
    write_stages_csv(&rs, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows = rs.iter().map(|r| r.stages.len()).sum::<usize>();
    assert_eq!(text.lines().count(), rows + 1);
    assert!(text.starts_with("policy,epoch,time_h,stage,"));
}
