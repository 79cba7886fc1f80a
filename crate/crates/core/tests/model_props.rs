use otrl_core::{decision_cost, local_cost, reward, upload_rate, CostBreakdown, OffloadDecision, SystemParams, Task};
use proptest::prelude::*;

fn task() -> impl Strategy<Value = Task> {
    (1e6f64..1e11, 1e4f64..1e8).prop_map(|(c, s)| Task::new(0, c, s).unwrap())
}

fn weights() -> impl Strategy<Value = SystemParams> {
    (0.0f64..=1.0).prop_map(|w| SystemParams {
        weight_delay: w,
        weight_energy: 1.0 - w,
        ..SystemParams::default()
    })
}

proptest! {
    #[test]
    fn reward_is_one_minus_cost(t in task(), p in weights(), r_u in 1e5f64..1e9) {
        let local = local_cost(&t, &p);
        for d in OffloadDecision::ALL {
            let c = decision_cost(&t, d, &p, r_u).unwrap();
            let r = reward(&local, &c, &p).unwrap();
            prop_assert!((r - (1.0 - c.normalized_cost)).abs() < 1e-12, "{:?}: {} vs {}", d, r, c.normalized_cost);
        }
    }

    #[test]
    fn rate_monotone(count in 1usize..500, pu in 1e-3f64..1.0, g in 1e-6f64..1.0, v in 1e-22f64..1e-18) {
        let p = SystemParams { tx_power_w: pu, channel_gain: g, noise_psd_w_per_hz: v, ..SystemParams::default() };
        let r = upload_rate(&p, count).unwrap();
        prop_assert!(upload_rate(&p, count + 1).unwrap() < r);
        let louder = SystemParams { tx_power_w: pu * 1.5, ..p };
        prop_assert!(upload_rate(&louder, count).unwrap() > r);
    }

    #[test]
    fn delay_energy_nonnegative_and_linear(t in task(), k in 0.1f64..10.0, r_u in 1e5f64..1e9) {
        let p = SystemParams::default();
        for d in OffloadDecision::ALL {
            let base = decision_cost(&t, d, &p, r_u).unwrap();
            prop_assert!(base.delay_s >= 0.0 && base.energy_j >= 0.0);
            // Affine in each size: f(kc) = f(c) + (k-1)(f(2c) - f(c)).
            let twice_c = decision_cost(&Task::new(0, 2.0 * t.cycles_required, t.data_size_bits).unwrap(), d, &p, r_u).unwrap();
            let scaled_c = decision_cost(&Task::new(0, k * t.cycles_required, t.data_size_bits).unwrap(), d, &p, r_u).unwrap();
            let expect = base.delay_s + (k - 1.0) * (twice_c.delay_s - base.delay_s);
            prop_assert!((scaled_c.delay_s - expect).abs() <= 1e-9 * expect.max(1e-12));
            let expect = base.energy_j + (k - 1.0) * (twice_c.energy_j - base.energy_j);
            prop_assert!((scaled_c.energy_j - expect).abs() <= 1e-9 * expect.max(1e-12));

            let twice_s = decision_cost(&Task::new(0, t.cycles_required, 2.0 * t.data_size_bits).unwrap(), d, &p, r_u).unwrap();
            let scaled_s = decision_cost(&Task::new(0, t.cycles_required, k * t.data_size_bits).unwrap(), d, &p, r_u).unwrap();
            let expect = base.delay_s + (k - 1.0) * (twice_s.delay_s - base.delay_s);
            prop_assert!((scaled_s.delay_s - expect).abs() <= 1e-9 * expect.max(1e-12));
            let expect = base.energy_j + (k - 1.0) * (twice_s.energy_j - base.energy_j);
            prop_assert!((scaled_s.energy_j - expect).abs() <= 1e-9 * expect.max(1e-12));
        }
    }

    #[test]
    fn reward_scale_invariant(
        tl in 0.1f64..100.0, to in 0.0f64..100.0, el in 0.1f64..10.0, eo in 0.0f64..10.0,
        k in 1e-3f64..1e3, m in 1e-3f64..1e3, p in weights(),
    ) {
        let mk = |d, e| CostBreakdown { delay_s: d, energy_j: e, normalized_cost: f64::NAN };
        let r = reward(&mk(tl, el), &mk(to, eo), &p).unwrap();
        let rs = reward(&mk(k * tl, m * el), &mk(k * to, m * eo), &p).unwrap();
        prop_assert!((r - rs).abs() <= 1e-12 * r.abs().max(1.0));
    }
}
