use std::f64::consts::TAU;

use dampplan_core::dq::{c, DqBlock, FrequencyGrid, C64, OMEGA0_50HZ};
use dampplan_core::eig::eig_lr;
use dampplan_core::fixture::{self, reference_network};
use dampplan_core::models::{inverter_admittance, AdParams, InverterParams};
use dampplan_core::network::{CMatrix, GridParams, InverterModel, NetworkGraph, PreparedNetwork, Shunt, ShuntDevice};
use dampplan_core::planner::{
    calibrate_ad_band, k_c, plan, plan_mode, Band, ModeLocator, ModeState, PlanOptions,
};
use dampplan_core::stability::{analyze, sweep, track, CrossoverOptions, MatrixSource};
use dampplan_core::Error;
use proptest::prelude::*;

fn fixture_grid() -> FrequencyGrid {
    FrequencyGrid::linear(10.0, 2500.0, 1.0, OMEGA0_50HZ).unwrap()
}

/// `(R + jωL)` with the `w0 L` rotation, inverted by hand.
fn rl_admittance(r: f64, l: f64, f: f64) -> [[C64; 2]; 2] {
    let a = c(r, TAU * f * l);
    let b = OMEGA0_50HZ * l;
    let det = a * a + b * b;
    [[a / det, c(b, 0.0) / det], [c(-b, 0.0) / det, a / det]]
}

#[test]
fn fixture_matrix_matches_hand_stamping() {
    let net = PreparedNetwork::new(&reference_network()).unwrap();
    let f = 203.0;
    let m = net.matrix(f).unwrap();
    let mut want = CMatrix::zeros(8, 8);
    let mut put = |i: usize, j: usize, y: &[[C64; 2]; 2], sign: f64| {
        for a in 0..2 {
            for b in 0..2 {
                want[(2 * i + a, 2 * j + b)] += y[a][b] * sign;
            }
        }
    };
    put(0, 0, &rl_admittance(0.2, 0.3e-3, f), 1.0);
    for (i, j, r, l) in [(0, 1, 0.0032, 0.0764e-3), (1, 2, 0.04, 1.5e-3), (2, 3, 0.06, 2.0e-3)] {
        let y = rl_admittance(r, l, f);
        put(i, i, &y, 1.0);
        put(j, j, &y, 1.0);
        put(i, j, &y, -1.0);
        put(j, i, &y, -1.0);
    }
    let inv = inverter_admittance(&InverterParams::case_study(), f, OMEGA0_50HZ).unwrap();
    let inv = [[inv.dd, inv.dq], [inv.qd, inv.qq]];
    for i in 1..4 {
        put(i, i, &inv, 1.0);
    }
    assert!((&m - &want).norm() <= 1e-12 * want.norm(), "{}", (&m - &want).norm());
}

#[test]
fn fixture_sweep_shape_and_eigen_invariants() {
    let net = PreparedNetwork::new(&reference_network()).unwrap();
    let samples = sweep(&net, &fixture_grid()).unwrap();
    assert_eq!(samples.len(), 2491);
    for s in samples.iter().step_by(97) {
        let m = net.matrix(s.f_hz).unwrap();
        let sp = &s.spectrum;
        for k in 0..8 {
            let w = sp.right.column(k);
            assert!((&m * w - w * sp.values[k]).norm() <= 1e-9 * m.norm());
        }
        assert!((&sp.left * &sp.right - CMatrix::identity(8, 8)).norm() < 1e-9);
    }
    let traces = track(&samples);
    assert_eq!(traces.len(), 8);
    assert!(traces.iter().all(|t| t.discontinuities.is_empty()));
}

#[test]
fn sweep_is_independent_of_grid_order() {
    let net = PreparedNetwork::new(&reference_network()).unwrap();
    let freqs: Vec<f64> = (0..40).map(|i| 2400.0 - 57.0 * i as f64).collect();
    let shuffled = FrequencyGrid::from_unsorted(freqs.clone(), OMEGA0_50HZ).unwrap();
    let mut sorted = freqs;
    sorted.sort_by(f64::total_cmp);
    let direct = FrequencyGrid::new(sorted, OMEGA0_50HZ).unwrap();
    assert_eq!(sweep(&net, &shuffled).unwrap(), sweep(&net, &direct).unwrap());
}

#[test]
fn capacitor_node_traces_are_the_scalar_admittance() {
    let g = NetworkGraph {
        nodes: vec![1],
        shunts: vec![
            Shunt {
                node: 1,
                device: ShuntDevice::Capacitor { c_f: 20e-6 },
            },
            Shunt {
                node: 1,
                device: ShuntDevice::Grid(GridParams {
                    r_ohm: 5.0,
                    l_h: 1e-9,
                    c_f: 0.0,
                }),
            },
        ],
        fundamental_hz: 0.0,
        ..Default::default()
    };
    let net = PreparedNetwork::new(&g).unwrap();
    let grid = FrequencyGrid::linear(10.0, 500.0, 10.0, 0.0).unwrap();
    let traces = track(&sweep(&net, &grid).unwrap());
    for t in &traces {
        for p in &t.points {
            let y = c(1.0, 0.0) / c(5.0, TAU * p.f_hz * 1e-9) + c(0.0, TAU * p.f_hz * 20e-6);
            assert!((p.lambda - y).norm() < 1e-12);
        }
    }
}

#[test]
fn fixture_plan_band_requirement() {
    let net = PreparedNetwork::new(&reference_network()).unwrap();
    let an = analyze(&net, &fixture_grid(), &CrossoverOptions::default()).unwrap();
    let crit: Vec<_> = an.report.critical().cloned().collect();
    let p = plan(&net, 4, &crit, &PlanOptions::default()).unwrap();
    assert_eq!(p.modes.len(), 3);
    assert!((0.025..=0.075).contains(&p.required_re_y_s), "{}", p.required_re_y_s);
    let band = p.band.unwrap();
    assert_eq!((band.f_lo_hz, band.f_hi_hz), (100.0, 2000.0));
    for m in &p.modes {
        assert!(m.predicted_re_s >= 0.005);
        // the re-located crossover confirms the first-order prediction
        assert!(m.final_re_lambda_s >= 0.0, "{m:?}");
    }
    for epsilon in [0.0075, 0.01] {
        // an infeasible plan is an unbounded requirement
        match plan(&net, 4, &crit, &PlanOptions { epsilon, ..Default::default() }) {
            Ok(q) => assert!(q.required_re_y_s >= p.required_re_y_s, "{epsilon}"),
            Err(e) => assert!(matches!(e, Error::PlanInfeasible { .. }), "{e}"),
        }
    }
}

#[test]
fn stable_network_needs_no_compensation() {
    let mut g = reference_network();
    g.shunts.retain(|s| !matches!(s.device, ShuntDevice::Inverter(_)));
    let net = PreparedNetwork::new(&g).unwrap();
    let an = analyze(&net, &fixture_grid(), &CrossoverOptions::default()).unwrap();
    assert!(an.report.is_stable());
    let crit: Vec<_> = an.report.critical().cloned().collect();
    let p = plan(&net, 4, &crit, &PlanOptions::default()).unwrap();
    assert!(p.is_trivial());
    assert_eq!(p.required_re_y_s, 0.0);
}

#[test]
fn single_node_plan_is_exact() {
    let g = NetworkGraph {
        nodes: vec![1],
        shunts: vec![
            Shunt {
                node: 1,
                device: ShuntDevice::Inverter(InverterModel::Analytic(InverterParams::case_study())),
            },
            Shunt {
                node: 1,
                device: ShuntDevice::Grid(GridParams {
                    r_ohm: 0.1,
                    l_h: 4e-3,
                    c_f: 0.0,
                }),
            },
        ],
        ..Default::default()
    };
    let net = PreparedNetwork::new(&g).unwrap();
    let an = analyze(&net, &fixture_grid(), &CrossoverOptions::default()).unwrap();
    let crit: Vec<_> = an.report.critical().cloned().collect();
    assert!(!crit.is_empty(), "weak-grid single inverter should have a critical mode");
    let p = plan(&net, 1, &crit, &PlanOptions::default()).unwrap();
    for m in &p.modes {
        assert!((m.final_f_cr_hz - m.f_cr_hz).abs() < 1e-3, "{m:?}");
        assert!((m.final_re_lambda_s - m.predicted_re_s).abs() < 1e-9, "{m:?}");
    }
}

#[test]
fn calibration_edges() {
    let band = Band {
        f_lo_hz: 100.0,
        f_hi_hz: 2000.0,
    };
    let base = AdParams::case_study();
    let zero = calibrate_ad_band(0.0, band, &base, OMEGA0_50HZ).unwrap();
    assert!(zero.max_im_re_ratio <= 0.1);
    // a slightly smaller gain breaks the ratio bound: smallest admissible
    let below = calibrate_ad_band(0.0, band, &base.with_k_v(0.0), OMEGA0_50HZ).unwrap();
    assert_eq!(below.params.k_v, zero.params.k_v);
    let model = dampplan_core::models::AdModel::new(&base.with_k_v(zero.params.k_v - 2e-3), OMEGA0_50HZ).unwrap();
    let worst = (100..=2000)
        .map(|f| {
            let y = model.admittance(f as f64).unwrap();
            (y.im / y.re).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst > 0.1, "{worst}");
    match calibrate_ad_band(1.0, band, &base, OMEGA0_50HZ) {
        Err(Error::CalibrationInfeasible(msg)) => assert!(msg.contains("binds"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

struct Linear {
    k_c: C64,
    drift: f64,
}

impl ModeLocator for Linear {
    fn locate(&self, alpha: f64, prev: &ModeState) -> dampplan_core::Result<ModeState> {
        Ok(ModeState {
            k_c: self.k_c * (1.0 - self.drift * alpha),
            ..prev.clone()
        })
    }
}

fn mode(re: f64, kc: C64) -> ModeState {
    ModeState {
        trace: 0,
        f_cr_hz: 1000.0,
        lambda: c(re, 0.0),
        k_c: kc,
        left: vec![],
        right: vec![],
    }
}

proptest! {
    #[test]
    fn required_alpha_is_monotone_in_epsilon(
        re in -0.05f64..0.0,
        kc in 0.2f64..1.0,
        drift in 0.0f64..0.5,
        e1 in 0.001f64..0.02,
        de in 0.0f64..0.02,
    ) {
        let loc = Linear { k_c: c(kc, 0.0), drift };
        let a = plan_mode(&loc, &mode(re, loc.k_c), 1, &PlanOptions { epsilon: e1, ..Default::default() }).unwrap();
        let b = plan_mode(&loc, &mode(re, loc.k_c), 1, &PlanOptions { epsilon: e1 + de, ..Default::default() }).unwrap();
        prop_assert!(b.required_alpha_s >= a.required_alpha_s);
        prop_assert!(a.predicted_re_s >= e1);
    }

    #[test]
    fn shift_property_on_random_matrices(seed in any::<u64>(), cre in -2.0f64..2.0, cim in -2.0f64..2.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(6, 6, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let shift = c(cre, cim);
        let a = eig_lr(&m).unwrap();
        let b = eig_lr(&(&m + CMatrix::identity(6, 6) * shift)).unwrap();
        for k in 0..6 {
            let j = (0..6).max_by(|&x, &y| a.overlap(k, &b, x).total_cmp(&a.overlap(k, &b, y))).unwrap();
            prop_assert!((b.values[j] - a.values[k] - shift).norm() < 1e-9);
        }
    }

    #[test]
    fn k_c_sums_to_one(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(8, 8, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let s = eig_lr(&m).unwrap();
        for k in 0..8 {
            let sum: C64 = (0..4).map(|i| k_c(&s.left_vec(k), &s.right_vec(k), i)).sum();
            prop_assert!((sum - c(1.0, 0.0)).norm() < 1e-9);
        }
    }
}

#[test]
fn damper_shunt_is_diagonal_and_decoupled() {
    let mut g = reference_network();
    g.shunts.push(Shunt {
        node: 4,
        device: ShuntDevice::Ad(AdParams::case_study().with_k_v(1.4)),
    });
    let with = PreparedNetwork::new(&g).unwrap();
    let without = PreparedNetwork::new(&reference_network()).unwrap();
    let d = with.assemble(500.0).unwrap().matrix - without.assemble(500.0).unwrap().matrix;
    let y = dampplan_core::models::ad_admittance(&AdParams::case_study().with_k_v(1.4), 500.0, OMEGA0_50HZ).unwrap();
    assert_eq!(y, DqBlock::scalar(y.dd));
    for r in 0..8 {
        for col in 0..8 {
            let expect = if r == col && r >= 6 { y.dd } else { c(0.0, 0.0) };
            assert!((d[(r, col)] - expect).norm() < 1e-14);
        }
    }
    assert_eq!(fixture::INVERTER_NODES, [2, 3, 4]);
}
