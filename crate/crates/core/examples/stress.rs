use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use stratalloc::solvers::{solve, Formulation, ProblemSpec};
use stratalloc::strata::{summarize, CovarianceConvention, RawStratumData, SurveyFrame};

fn main() {
    let mut rng = StdRng::seed_from_u64(99);
    let mut strata = Vec::new();
    let sizes = [11_000u64, 65_000, 100_000, 72_000, 78_000, 51_000, 24_000, 46_000, 100_000];
    for (h, &n_pop) in sizes.iter().enumerate() {
        // moderate pilot data standing in for the population
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                let a: f64 = rng.gen_range(-3.0..3.0) * (1.0 + h as f64);
                let b: f64 = a * 0.4 + rng.gen_range(-5.0..5.0) * (2.0 + h as f64);
                vec![a, b]
            })
            .collect();
        let slices: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let raw = RawStratumData::from_rows(&slices).unwrap();
        let mut s = summarize(&raw, 4000, 0.0, CovarianceConvention::Population).unwrap();
        s.population_size = n_pop;
        s.unit_cost = [2.5, 3.0, 1.5, 2.5, 2.0, 2.0, 2.5, 3.0, 3.5][h];
        strata.push(s);
    }
    let frame = SurveyFrame::new(strata, 0.0, None).unwrap();

    for (name, formulation) in [
        ("trace det", Formulation::TraceDeterministic { tau: 0.5 }),
        ("trace chance p0=0.9", Formulation::TraceChance { tau: 0.5, p0: 0.9 }),
        ("trace chance p0=0.99", Formulation::TraceChance { tau: 0.5, p0: 0.99 }),
        ("prekopa p0=0.9", Formulation::PrekopaChance { v0: vec![0.05, 0.5], p0: 0.9 }),
        ("trace chance + total", Formulation::TraceChance { tau: 0.5, p0: 0.9 }),
    ] {
        let total = if name.contains("total") { Some(9000) } else { None };
        let spec = ProblemSpec { formulation, total_n: total };
        let t0 = std::time::Instant::now();
        let rep = solve(&spec, &frame).unwrap();
        println!(
            "{name}: feasible={} cost={:?} nodes={} bound={:?} proven={} wall={:.3}s",
            rep.feasible,
            rep.objective_cost,
            rep.nodes_explored,
            rep.relaxation_bound,
            rep.proven_optimal,
            t0.elapsed().as_secs_f64()
        );
    }
}
