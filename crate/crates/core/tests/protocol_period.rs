use powertalk::experiments::{reference_scenario, run_reference_period};
use powertalk::protocol::{monte_carlo, trial_rng, Execution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn same_seed_same_trace() {
    let s = reference_scenario();
    let a = run_reference_period(&s, 42).unwrap();
    let b = run_reference_period(&s, 42).unwrap();
    assert_eq!(a, b);
    let c = run_reference_period(&s, 43).unwrap();
    assert_ne!(a.ders, c.ders);
}

#[test]
fn trace_has_one_slot_per_bit_and_type() {
    let s = reference_scenario();
    let trace = run_reference_period(&s, 1).unwrap();
    assert_eq!(trace.slots.len(), s.protocol.num_slots());
    for slot in &trace.slots {
        let types = s.config.der_type();
        for (u, d) in slot.deviations.iter().enumerate() {
            if types[u] == slot.subphase {
                assert_eq!(d.abs(), trace.amplitude);
            } else {
                assert_eq!(*d, 0.0);
            }
        }
        // every DER of type at least the sub-phase listens
        let listeners = types.iter().filter(|&&g| g >= slot.subphase).count();
        assert_eq!(slot.detections.len(), listeners);
    }
}

#[test]
fn later_types_cannot_influence_earlier_decisions() {
    let s = reference_scenario();
    let ctx = s.context(&s.protocol).unwrap();
    let mut rng = trial_rng(5, 0);
    let capacities = s.capacity.sample(s.config.num_ders(), &mut rng);
    let mut altered = capacities.clone();
    for (u, &g) in s.config.der_type().iter().enumerate() {
        if g == 3 {
            altered[u] = 2000.0 - altered[u];
        }
    }
    let a = ctx.simulate(&capacities, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = ctx.simulate(&altered, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    for (da, db) in a.ders.iter().zip(&b.ders) {
        if da.der_type < 3 {
            assert_eq!(da.believed_aggregates, db.believed_aggregates);
            assert_eq!(da.policy, db.policy);
        }
    }
}

#[test]
fn noiseless_period_recovers_quantized_aggregates() {
    let s = reference_scenario();
    let ctx = s.noiseless_context(&s.protocol).unwrap();
    let mut rng = trial_rng(77, 0);
    let capacities = s.capacity.sample(s.config.num_ders(), &mut rng);
    let trace = ctx.simulate(&capacities, &mut rng).unwrap();
    assert_eq!(trace.detection_errors(), 0);
    let types = s.config.der_type();
    for d in &trace.ders {
        for (g, believed) in d.believed_aggregates.iter().enumerate() {
            let expected: f64 = trace.ders.iter().filter(|o| types[o.der] == g).map(|o| o.quantized).sum();
            assert!((believed - expected).abs() < 1e-9, "DER {} type {g}", d.der);
        }
    }
}

#[test]
fn sequential_and_parallel_reports_are_identical() {
    let s = reference_scenario();
    let ctx = s.context(&s.protocol).unwrap();
    let seq = monte_carlo(&ctx, 64, s.capacity, 123, Execution::Sequential).unwrap();
    let par = monte_carlo(&ctx, 64, s.capacity, 123, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq.stats.period_cost.mean.to_bits(), par.stats.period_cost.mean.to_bits());
}

#[test]
fn single_trial_equals_reference_period() {
    let s = reference_scenario();
    let ctx = s.context(&s.protocol).unwrap();
    let report = monte_carlo(&ctx, 1, s.capacity, 99, Execution::Sequential).unwrap();
    let trace = run_reference_period(&s, 99).unwrap();
    assert_eq!(report.trials[0].period_cost, trace.period_cost);
    assert_eq!(report.trials[0].omega, trace.outcome.omega);
    assert_eq!(report.trials[0].detection_errors, trace.detection_errors());
}

#[test]
fn confidence_interval_shrinks_with_trials() {
    let s = reference_scenario();
    let ctx = s.context(&s.protocol).unwrap();
    let small = monte_carlo(&ctx, 100, s.capacity, 8, Execution::Parallel).unwrap();
    let large = monte_carlo(&ctx, 1600, s.capacity, 8, Execution::Parallel).unwrap();
    let ratio = small.stats.period_cost.ci95() / large.stats.period_cost.ci95();
    // sqrt(1600 / 100) = 4, up to sampling noise in the standard deviation
    assert!((2.5..6.0).contains(&ratio), "ratio {ratio}");
    let gap = (small.stats.period_cost.mean - large.stats.period_cost.mean).abs();
    assert!(gap < 4.0 * small.stats.period_cost.std_error);
}

#[test]
fn amplitude_respects_budget_and_guard() {
    let s = reference_scenario();
    let ctx = s.context(&s.protocol).unwrap();
    let phi = ctx.channel().power_sensitivity();
    let guard = 0.01 * s.droop.reference_voltages.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(ctx.amplitude() <= guard);
    for g in 0..s.config.num_types() {
        let grp = s.config.group(g);
        for u in 0..s.config.num_ders() {
            let spread: f64 = grp.iter().map(|&l| (ctx.amplitude() * phi[(u, l)]).powi(2)).sum::<f64>().sqrt();
            assert!(spread <= s.protocol.power_budget * (1.0 + 1e-12));
        }
    }
}
