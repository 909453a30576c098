use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use tim_dcop::erv::{build_erv_problem, ErvConfig, StageContext};
use tim_dcop::scenarios::Policy;
use tim_dcop::{solve, SolverConfig};
use tim_dcop_bench::scenario;

fn stage_problem(c: &mut Criterion) {
    let sc = scenario(10, 3, 5);
    let world = sc.materialize().unwrap();
    let incidents: Vec<_> = world.incidents.iter().filter(|i| i.report_time == 0.0).cloned().collect();

    c.bench_function("build_erv_problem/10x10/5 ervs", |b| {
        b.iter(|| {
            let mut ctx = StageContext::new(&world.net, &world.forecast, 0.0, 0);
            ctx.incidents = incidents.clone();
            build_erv_problem(&mut ctx, &world.ervs, &ErvConfig::default()).unwrap()
        })
    });

    let mut ctx = StageContext::new(&world.net, &world.forecast, 0.0, 0);
    ctx.incidents = incidents.clone();
    let ep = build_erv_problem(&mut ctx, &world.ervs, &ErvConfig::default()).unwrap();
    let mut g = c.benchmark_group("solve");
    for (name, cfg) in [("MGM", SolverConfig::mgm(45, 0)), ("DSA-B 0.9", SolverConfig::dsa(0.9, 45, 0))] {
        g.bench_function(name, |b| b.iter(|| solve(black_box(&ep.problem), &cfg).unwrap()));
    }
    g.finish();
}

fn scenario_run(c: &mut Criterion) {
    let mut g = c.benchmark_group("scenario");
    g.sample_size(20);
    for policy in Policy::ALL {
        let sc = scenario(10, 2, 3);
        let world = sc.materialize().unwrap();
        g.bench_with_input(BenchmarkId::new("run", policy.label()), &policy, |b, &p| {
            b.iter(|| sc.run_world(&world, p).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, stage_problem, scenario_run);
criterion_main!(benches);
