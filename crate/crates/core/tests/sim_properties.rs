use ctrace_core::encounter::ChannelModel;
use ctrace_core::sim::{run_scenario, ForgeryKind, ForgeryPlan, Scenario, Simulation};
use proptest::prelude::*;

fn crowd(seed: u64, sigma: f64) -> Scenario {
    Scenario {
        n_agents: 20,
        world_width_m: 40.0,
        world_height_m: 40.0,
        initial_infectious: 3,
        duration_s: 6 * 3600,
        diagnosis_delay_s: 2 * 3600,
        channel: ChannelModel {
            path_loss_exponent: 3.0,
            shadowing_sigma_db: sigma,
            ..ChannelModel::default()
        },
        rng_seed: seed,
        ..Scenario::default()
    }
}

#[test]
fn missed_exposures_grow_with_shadowing() {
    const SEEDS: u64 = 24;
    let sigmas = [0.0, 2.0, 4.0, 8.0];
    let means: Vec<f64> = sigmas
        .iter()
        .map(|&sigma| {
            let total: usize = (0..SEEDS).map(|seed| run_scenario(crowd(seed, sigma)).unwrap().metrics.missed).sum();
            total as f64 / SEEDS as f64
        })
        .collect();
    println!("mean missed by sigma {sigmas:?}: {means:?}");
    assert_eq!(means[0], 0.0, "noiseless runs must miss nothing");
    for w in means.windows(2) {
        assert!(w[1] >= w[0], "mean missed fell as noise grew: {means:?}");
    }
    assert!(means[3] > 0.0, "heavy shadowing should cost something: {means:?}");
}

#[test]
fn ground_truth_ignores_the_radio() {
    let quiet = run_scenario(crowd(5, 0.0)).unwrap().metrics;
    let noisy = run_scenario(crowd(5, 8.0)).unwrap().metrics;
    assert_eq!(quiet.true_exposures, noisy.true_exposures);
    assert_eq!(quiet.infections, noisy.infections);
}

fn kind() -> impl Strategy<Value = Option<ForgeryKind>> {
    prop_oneof![
        Just(None),
        Just(Some(ForgeryKind::FakeContactClaim)),
        Just(Some(ForgeryKind::PidSwap)),
        Just(Some(ForgeryKind::BogusCertificate)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_message_has_exactly_one_fate(
        seed in any::<u64>(),
        sigma in prop_oneof![Just(0.0), 0.5f64..8.0],
        block in prop_oneof![Just(0.0), 0.0f64..0.5],
        rotation in prop_oneof![Just(0i64), 600i64..7200],
        forgery in kind(),
        split in 1i64..(3 * 3600),
    ) {
        let s = Scenario {
            n_agents: 12,
            world_width_m: 25.0,
            world_height_m: 25.0,
            initial_infectious: 2,
            duration_s: 3 * 3600,
            diagnosis_delay_s: 3600,
            channel: ChannelModel {
                path_loss_exponent: 3.0,
                shadowing_sigma_db: sigma,
                body_shadow_db: 6.0,
                ..ChannelModel::default()
            },
            body_block_prob: block,
            pid_rotation_s: rotation,
            forgery: forgery.map(|kind| ForgeryPlan { kind, count: 10, at_s: 2 * 3600 }),
            rng_seed: seed,
            ..Scenario::default()
        };
        let mut sim = Simulation::new(s.clone()).unwrap();
        sim.step_world(split);
        prop_assert!(sim.metrics().is_conserved(), "mid-run: {}", sim.metrics().to_text());
        sim.step_world(s.duration_s - split + 1);
        sim.finish();
        let m = sim.metrics();
        prop_assert!(m.is_conserved(), "{}", m.to_text());
        prop_assert_eq!(m.pending, 0);
        prop_assert_eq!(m.rejected_forgeries + m.accepted_forgeries, m.forgeries_injected);
        prop_assert_eq!(m.accepted_forgeries, 0);
        prop_assert_eq!(m.notified_true + m.missed, m.true_exposures);
    }
}
