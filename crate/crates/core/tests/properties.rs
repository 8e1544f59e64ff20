use burstsim_core::accounting::{
    billed_seconds, cost_micros, round_sig, trapezoid_hours, waste_fraction,
};
use burstsim_core::market::{
    spot_price, Capacity, InstanceType, PreemptionRate, Provider, RateStep,
};
use burstsim_core::pool::{NewJob, Pool, SlotState};
use burstsim_core::provisioner::{detect_plateau, largest_remainder};
use burstsim_core::rng::RngStream;
use burstsim_core::workload::{aggregate_input_throughput, sample_fetch_time, FetchModel};
use proptest::prelude::*;

fn instance(provider: Provider, price: f64, fraction: f64) -> InstanceType {
    InstanceType {
        id: "x".into(),
        provider,
        gpu_model: "T4".into(),
        gpus_per_instance: 1,
        ondemand_price: price,
        spot_fraction: fraction,
    }
}

#[derive(Debug, Clone)]
enum Op {
    AddSlot,
    Submit(u8),
    Match,
    Run(usize),
    Complete(usize),
    Preempt(usize),
    Kill(usize),
    Drain(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::AddSlot),
        (1u8..5).prop_map(Op::Submit),
        Just(Op::Match),
        (0usize..16).prop_map(Op::Run),
        (0usize..16).prop_map(Op::Complete),
        (0usize..16).prop_map(Op::Preempt),
        (0usize..16).prop_map(Op::Kill),
        (0usize..16).prop_map(Op::Drain),
    ]
}

fn check_pool(pool: &Pool, t: f64) {
    let queued = pool.queue_depth();
    assert_eq!(
        queued + pool.fetching() + pool.running() + pool.completed(),
        pool.total_jobs()
    );
    let busy = pool
        .slots()
        .iter()
        .filter(|s| s.state == SlotState::Busy)
        .count();
    assert_eq!(busy, pool.fetching() + pool.running());
    let job_waste: f64 = pool.jobs().iter().map(|j| j.wasted_s()).sum();
    let slot_waste: f64 = pool.slots().iter().map(|s| s.wasted_s).sum();
    assert!((job_waste - slot_waste).abs() < 1e-9);
    for j in pool.jobs() {
        assert!(j.attempts.iter().filter(|a| a.end.is_none()).count() <= 1);
    }
    for s in pool.slots() {
        let end = s.terminated.unwrap_or(t);
        let open_busy = s
            .current
            .and_then(|j| pool.job(j).current_attempt())
            .map_or(0.0, |a| t - a.start);
        let accounted = s.busy_s + pool.slot_idle_s(s.id, end) + open_busy;
        assert!(
            (accounted - (end - s.created)).abs() < 1e-9,
            "slot {} accounted {accounted}",
            s.id
        );
    }
}

proptest! {
    #[test]
    fn spot_price_is_discounted_and_monotone(price in 0.0f64..50.0, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let a = spot_price(&instance(Provider::GCP, price, lo));
        let b = spot_price(&instance(Provider::GCP, price, hi));
        prop_assert!(a <= b && b <= price);
        prop_assert_eq!(spot_price(&instance(Provider::OnPrem, price, hi)), 0.0);
    }

    #[test]
    fn largest_remainder_is_exact_and_fair(total in 0u64..100_000, weights in prop::collection::vec(0.01f64..10.0, 1..8)) {
        let out = largest_remainder(total, &weights);
        prop_assert_eq!(out.iter().sum::<u64>(), total);
        let sum: f64 = weights.iter().sum();
        for (n, w) in out.iter().zip(&weights) {
            let quota = total as f64 * w / sum;
            prop_assert!((*n as f64 - quota).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn capacity_never_overcommits(cap in 0u64..1000, reqs in prop::collection::vec((0u64..300, 0u64..300), 0..30)) {
        let mut c = Capacity::new(cap);
        for (req, rel) in reqs {
            let granted = c.grant(req);
            prop_assert!(granted <= req);
            prop_assert!(c.in_use <= cap);
            c.release(rel.min(c.in_use));
        }
    }

    #[test]
    fn fetch_shares_respect_both_caps(n in 1u64..100_000, mb in 1.0f64..500.0) {
        let fm = FetchModel { file_mb: mb, ..FetchModel::default() };
        prop_assert!(aggregate_input_throughput(n, &fm) <= fm.server_gbps_cap + 1e-9);
        prop_assert!(fm.per_fetch_mbps(n) <= fm.per_client_mbps_cap);
        prop_assert!(sample_fetch_time(n, &fm) <= sample_fetch_time(n + 1, &fm));
        prop_assert!(sample_fetch_time(n, &fm) >= fm.overhead_s + fm.file_mbit() / fm.per_client_mbps_cap - 1e-12);
    }

    #[test]
    fn billing_is_whole_seconds_and_additive(d in 0.0f64..1e6, price in 0.0f64..40.0) {
        let s = billed_seconds(d);
        prop_assert!(s as f64 >= d - 1e-6 && (s as f64) < d + 1.0);
        let whole = cost_micros(price, s);
        let parts = cost_micros(price, s / 2) + cost_micros(price, s - s / 2);
        prop_assert!((whole - parts).abs() <= 1);
        prop_assert!(whole >= 0);
    }

    #[test]
    fn waste_fraction_is_a_fraction(w in 0.0f64..1e6, i in 0.0f64..1e6, extra in 0.0f64..1e6) {
        let (f, flagged) = waste_fraction(w, i, w + i + extra);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(flagged, w + i + extra == 0.0);
    }

    #[test]
    fn round_sig_keeps_three_figures(x in 1e-6f64..1e9) {
        let r = round_sig(x, 3);
        prop_assert!(((r - x) / x).abs() <= 0.005 + 1e-12);
        prop_assert_eq!(round_sig(r, 3), r);
    }

    #[test]
    fn trapezoid_of_constant_is_area(v in 0.0f64..1e4, n in 2usize..200, dt in 1.0f64..600.0) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * dt, v)).collect();
        let want = v * (n - 1) as f64 * dt / 3600.0;
        prop_assert!((trapezoid_hours(&pts) - want).abs() <= 1e-9 * want.max(1.0));
    }

    #[test]
    fn plateau_rule_is_scale_free(v in 10.0f64..1e5, k in 1.0f64..100.0, growth in 0.0f64..0.2) {
        let series: Vec<(f64, f64)> = (0..=120).map(|i| (i as f64 * 60.0, v * (1.0 + growth * i as f64 / 30.0))).collect();
        let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, x)| (t, x * k)).collect();
        prop_assert_eq!(detect_plateau(&series, 1800.0, 0.02), detect_plateau(&scaled, 1800.0, 0.02));
    }

    #[test]
    fn preemption_never_precedes_start(start in 0.0f64..1e5, seed in any::<u64>(), r1 in 0.0f64..5.0, r2 in 0.01f64..5.0) {
        let rate = PreemptionRate::Steps(vec![
            RateStep { from_s: 0.0, rate_per_hour: r1 },
            RateStep { from_s: 3.0e4, rate_per_hour: r2 },
        ]);
        let mut rng = RngStream::new(seed, "preempt/p");
        let t = rate.next_preemption(start, &mut rng).expect("positive tail rate");
        prop_assert!(t >= start);
    }

    #[test]
    fn rng_draws_are_unit_interval(seed in any::<u64>(), idx in any::<u64>()) {
        let mut r = RngStream::indexed(seed, "p", idx);
        for _ in 0..8 {
            let u = r.draw();
            prop_assert!((0.0..1.0).contains(&u));
            let v = r.draw_open_low();
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn pool_conserves_jobs_and_time(ops in prop::collection::vec(op(), 1..80)) {
        let mut pool = Pool::new();
        let mut next_id = 0u64;
        let mut t = 0.0;
        for op in ops {
            t += 1.5;
            let busy: Vec<usize> = pool.slots().iter().filter(|s| s.state == SlotState::Busy).map(|s| s.id).collect();
            let pick = |i: usize| (!busy.is_empty()).then(|| busy[i % busy.len()]);
            match op {
                Op::AddSlot => {
                    pool.add_slot(next_id, 0, t);
                }
                Op::Submit(n) => {
                    let batch: Vec<NewJob> = (0..n as u64).map(|k| NewJob { id: next_id + k, submit_time: t }).collect();
                    next_id += n as u64;
                    pool.submit(&batch).unwrap();
                }
                Op::Match => {
                    pool.match_jobs(t);
                }
                Op::Run(i) => {
                    if let Some(s) = pick(i) {
                        let j = pool.slot(s).current.unwrap();
                        if pool.fetching() > 0 && pool.job(j).state == burstsim_core::pool::JobState::Fetching {
                            pool.start_running(j, 10.0);
                        }
                    }
                }
                Op::Complete(i) => {
                    if let Some(s) = pick(i) {
                        pool.on_complete(s, t).unwrap();
                    }
                }
                Op::Preempt(i) => {
                    if let Some(s) = pick(i) {
                        prop_assert!(pool.on_preempt(s, t).unwrap().is_some());
                    }
                }
                Op::Kill(i) => {
                    if !pool.slots().is_empty() {
                        pool.kill(i % pool.slots().len(), t).unwrap();
                    }
                }
                Op::Drain(i) => {
                    if !pool.slots().is_empty() {
                        pool.drain(i % pool.slots().len(), t);
                    }
                }
            }
            check_pool(&pool, t);
        }
    }
}
