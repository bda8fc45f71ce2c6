use proptest::prelude::*;

use rydswitch::eit::{correlation_time_prediction, eit_transmission, transparency_width, EitSpectrumParams};
use rydswitch::montecarlo::{run_cycles, Scenario};
use rydswitch::presets::Preset;
use rydswitch::propagation::{bin_mean_series, evolve_bin, BinDistribution, MediumParams};
use rydswitch::special::exponential_integral_e1;
use rydswitch::storage_switch::{extinction_vs_ng_raw, stored_mean_before_switchoff, StorageMode, StorageParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn master_equation_conserves_probability(
        od in 0.5f64..12.0,
        od_eit in 0.0f64..2.0,
        mu0 in 0.0f64..5.0,
        z in 0.0f64..1.0,
    ) {
        let m = MediumParams::normalized(od, od_eit).unwrap();
        let init = BinDistribution::poisson(mu0, BinDistribution::default_nmax(mu0));
        let d = evolve_bin(&init, &m, z, 1e-3).unwrap();
        prop_assert!((d.total() - init.total()).abs() <= 1e-9);
        prop_assert!(d.probs.iter().all(|p| *p >= -1e-12));
    }

    #[test]
    fn bin_mean_never_grows_with_depth(
        od in 0.5f64..12.0,
        od_eit in 0.0f64..2.0,
        mu0 in 0.01f64..5.0,
        z in 0.0f64..0.95,
    ) {
        let m = MediumParams::normalized(od, od_eit).unwrap();
        prop_assert!(bin_mean_series(mu0, &m, z + 0.05) <= bin_mean_series(mu0, &m, z) + 1e-14);
    }

    #[test]
    fn full_storage_never_below_rapid(
        n_in in 0.0f64..10.0,
        bins in 0.5f64..5.0,
        od in 0.5f64..12.0,
        od_eit in 0.0f64..2.0,
    ) {
        let p = StorageParams { eta_sb: 0.3, bins, od, od_eit };
        let full = stored_mean_before_switchoff(n_in, &p, StorageMode::Full).unwrap();
        let rapid = stored_mean_before_switchoff(n_in, &p, StorageMode::Rapid).unwrap();
        prop_assert!(rapid <= full * (1.0 + 1e-12) + 1e-15, "rapid {rapid} full {full}");
        prop_assert!(full <= n_in + 1e-12);
    }

    #[test]
    fn extinction_falls_with_gate_photons(
        n_g in 0.0f64..8.0,
        bins in 0.5f64..5.0,
        eta_sb in 0.0f64..0.6,
        od_eit in 0.0f64..2.0,
    ) {
        for mode in [StorageMode::Full, StorageMode::Rapid] {
            let p = StorageParams { eta_sb, bins, od: 3.2, od_eit };
            let a = extinction_vs_ng_raw(n_g, &p, mode).unwrap();
            let b = extinction_vs_ng_raw(n_g + 0.1, &p, mode).unwrap();
            prop_assert!(b <= a + 1e-14);
        }
    }

    #[test]
    fn spectrum_symmetric_about_common_centre(
        od in 0.0f64..10.0,
        t0 in 0.0f64..1.0,
        centre in -5e6f64..5e6,
        offset in 0.0f64..2e8,
    ) {
        let p = EitSpectrumParams { od, gamma: 3.6e7, delta0: centre, delta1: centre, t0, width: 1.1e7 };
        let l = eit_transmission(centre - offset, &p);
        let r = eit_transmission(centre + offset, &p);
        prop_assert!((l - r).abs() <= 1e-12);
    }

    #[test]
    fn eit_power_laws(rabi in 1e6f64..1e8, od in 0.1f64..20.0) {
        let gamma = 3.6e7;
        let w = transparency_width(rabi, gamma, od).unwrap();
        let w2 = transparency_width(2.0 * rabi, gamma, od).unwrap();
        prop_assert!((w2 / w - 4.0).abs() <= 4e-12);
        let t = correlation_time_prediction(od, gamma, rabi).unwrap();
        let t2 = correlation_time_prediction(od, gamma, 2.0 * rabi).unwrap();
        prop_assert!((t / t2 - 4.0).abs() <= 4e-12);
    }

    #[test]
    fn e1_decreasing(x in 1e-6f64..50.0) {
        prop_assert!(exponential_integral_e1(x * 1.01).unwrap() < exponential_integral_e1(x).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cycle_summaries_do_not_depend_on_threads(seed in any::<u64>(), n_g in 0.0f64..3.0) {
        let mut sc = Scenario::from_preset(&Preset::baseline());
        sc.n_g = n_g;
        let one = run_cycles(20_000, &sc, seed, 1).unwrap();
        let many = run_cycles(20_000, &sc, seed, 4).unwrap();
        prop_assert_eq!(one, many);
    }
}
