//! Values frozen from a 30-digit mpmath evaluation (matrix exponential for
//! the master equation, adaptive quadrature for the pulse integrals).

use rydswitch::constants::CODATA_2018;
use rydswitch::params::{beam_field_amplitude, cloud_geometry};
use rydswitch::presets::Preset;
use rydswitch::propagation::{bin_mean_series, evolve_bin, p1_series, BinDistribution, MediumParams};
use rydswitch::special::exponential_integral_e1;
use rydswitch::storage_switch::{stored_mean_before_switchoff, stored_mean_exact, StorageMode, StorageParams};

fn close(got: f64, want: f64, rel: f64) {
    assert!(
        (got - want).abs() <= rel * want.abs(),
        "got {got:e}, want {want:e} (rel {:.2e})",
        (got / want - 1.0).abs()
    );
}

#[test]
fn cloud_radii_and_density() {
    let cfg = Preset::baseline().experiment;
    let (sigma, rho) = cloud_geometry(cfg.atom_number, cfg.temperature, cfg.trap_freqs, &CODATA_2018).unwrap();
    close(sigma[0], 7.505_847_150_750_654_4e-6, 1e-12);
    close(sigma[1], 2.758_905_979_735_375_7e-5, 1e-12);
    close(sigma[2], 2.758_905_979_735_375_7e-5, 1e-12);
    close(rho, 2.445_002_801_777_478_5e18, 1e-12);
}

#[test]
fn control_field_amplitudes() {
    close(beam_field_amplitude(16e-3, 12e-6, &CODATA_2018).unwrap(), 230_860.210_964_976_34, 1e-13);
    close(beam_field_amplitude(32e-3, 12e-6, &CODATA_2018).unwrap(), 326_485.641_358_983_45, 1e-13);
}

#[test]
fn exponential_integral() {
    let table = [
        (1e-3, 6.331_539_364_136_149_3),
        (0.5, 0.559_773_594_776_160_81),
        (1.0, 0.219_383_934_395_520_27),
        (2.0, 0.048_900_510_708_061_12),
        (10.0, 4.156_968_929_685_324_3e-6),
        (40.0, 1.036_773_261_451_657e-19),
    ];
    for (x, want) in table {
        close(exponential_integral_e1(x).unwrap(), want, 1e-13);
    }
}

#[test]
fn stored_mean_full_form() {
    let cases = [
        (0.5, 2.0, 3.2, 0.91, 0.299_695_467_331_436_23),
        (2.0, 2.0, 3.2, 0.91, 0.956_926_694_280_946_28),
        (6.0, 2.0, 3.2, 0.91, 2.064_934_296_292_664_2),
        (9.0, 1.6, 10.0, 0.5, 1.785_762_266_154_839_4),
    ];
    for (n_in, bins, od, od_eit, want) in cases {
        let p = StorageParams { eta_sb: 0.29, bins, od, od_eit };
        close(stored_mean_before_switchoff(n_in, &p, StorageMode::Full).unwrap(), want, 1e-12);
    }
}

#[test]
fn master_equation_mean_and_lone_photon() {
    let cases = [
        (0.5, 3.2, 0.91, 1.0, 0.165_354_300_006_370_87, 0.164_943_115_121_995_35),
        (2.0, 3.2, 0.91, 0.5, 0.708_954_394_741_821_08, 0.574_807_206_651_633_11),
        (4.0, 10.0, 1.2, 1.0, 0.334_989_608_458_505_83, 0.334_989_575_483_042_13),
        (1.0, 1.0, 1.2, 0.7, 0.464_469_723_283_254_56, 0.270_108_876_122_813_53),
    ];
    for (mu0, od, od_eit, z, mean, p1) in cases {
        let m = MediumParams::normalized(od, od_eit).unwrap();
        close(bin_mean_series(mu0, &m, z), mean, 1e-12);
        close(p1_series(mu0, &m, z), p1, 1e-12);
        let init = BinDistribution::poisson(mu0, BinDistribution::default_nmax(mu0));
        let evolved = evolve_bin(&init, &m, z, 1e-3).unwrap();
        close(evolved.mean(), mean, 1e-8);
    }
}

#[test]
fn series_quadrature_agrees_with_full_form_when_alpha1_small() {
    // with alpha1 -> 0 the neglected and exact forms coincide
    let p = StorageParams { eta_sb: 0.3, bins: 2.0, od: 6.0, od_eit: 1e-9 };
    let full = stored_mean_before_switchoff(3.0, &p, StorageMode::Full).unwrap();
    close(stored_mean_exact(3.0, &p).unwrap(), full, 1e-7);
}
