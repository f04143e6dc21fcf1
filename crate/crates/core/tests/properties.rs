//! Property tests for the library invariants.

use blindrx::blind_rx::{
    am_step_single, blind_decode_single, initial_point_circularity, initial_point_variance,
    BlindConfig, Derotation,
};
use blindrx::channel::{
    apply_channel, exponential_corr, sample_time_channel, PowerDelayProfile, ReceivedMatrix,
    TimeChannel,
};
use blindrx::harness::seed::trial_seed;
use blindrx::harness::{run_experiment, ExperimentConfig, ExperimentKind, ReceiverKind};
use blindrx::numerics::{build_dft_submatrix, top_left_singular_vectors, DftSubmatrix};
use blindrx::waveform::{qam_demodulate, qam_modulate, FreqSymbolGrid, PilotSpec, QamConstellation};
use blindrx::C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Instance {
    f: DftSubmatrix,
    grid: FreqSymbolGrid,
    h: TimeChannel,
    y: ReceivedMatrix,
}

fn instance(n: usize, n_r: usize, m: usize, snr_db: f64, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = QamConstellation::new(m).unwrap();
    let pdp = PowerDelayProfile::ped4();
    let f = build_dft_submatrix(n, &pdp.delays()).unwrap();
    let grid = FreqSymbolGrid::build(&mut rng, n, &c, &PilotSpec::center(n, &c), &[]).unwrap();
    let h = sample_time_channel(&pdp, &exponential_corr(n_r, 0.0).unwrap(), &mut rng);
    let y = apply_channel(&[&grid.symbols], &[&h], &f, snr_db, &mut rng).unwrap();
    Instance { f, grid, h, y }
}

fn rel(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum();
    let den: f64 = b.iter().map(|q| q.norm_sqr()).sum();
    (num / den).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn qam_round_trip(m_exp in 1u32..5, words in proptest::collection::vec(any::<u8>(), 1..64)) {
        let m = 1usize << (2 * m_exp);
        let k = 2 * m_exp as usize;
        let bits: Vec<u8> = words.iter().flat_map(|w| (0..k).map(move |b| (w >> (b % 8)) & 1)).collect();
        let sym = qam_modulate(&bits, m).unwrap();
        let c = QamConstellation::new(m).unwrap();
        prop_assert!(sym.iter().all(|s| c.points().contains(s)));
        prop_assert_eq!(qam_demodulate(&sym, m).unwrap(), bits);
        let energy = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
        prop_assert!((energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symbol_grid_layout(seed in any::<u64>(), n_pilots in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = QamConstellation::new(16).unwrap();
        let n = 64;
        let positions: Vec<usize> = (0..n_pilots).map(|i| i * 7).collect();
        let pilots = PilotSpec::new(positions.clone(), vec![c.corner(); n_pilots]).unwrap();
        let silent = vec![3, 5];
        let g = FreqSymbolGrid::build(&mut rng, n, &c, &pilots, &silent).unwrap();
        for &p in &positions {
            prop_assert_eq!(g.symbols[p], c.corner());
        }
        for &s in &silent {
            prop_assert_eq!(g.symbols[s], C64::new(0.0, 0.0));
        }
        prop_assert_eq!(g.data_positions.len() + n_pilots + silent.len(), n);
        prop_assert!(g.data_positions.iter().all(|&d| c.points().contains(&g.symbols[d])));
    }

    #[test]
    fn scale_ambiguity_fixed_point(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let c = C64::new(re, im);
        prop_assume!(c.norm() > 0.1);
        let t = instance(128, 8, 16, f64::INFINITY, seed);
        let xc: Vec<C64> = t.grid.symbols.iter().map(|x| x * c).collect();
        let s = am_step_single(&t.y.y, &xc, &t.f, 0.0).unwrap();
        prop_assert!(rel(&s.x_next, &xc) < 1e-8);
        let hc = &t.h.h / c;
        prop_assert!((&s.h_hat - &hc).norm() / hc.norm() < 1e-8);
    }

    #[test]
    fn tap_choice_is_phase_invariant(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU) {
        let t = instance(256, 16, 16, 15.0, seed);
        let u1 = top_left_singular_vectors(&t.y.y, 1).unwrap().left_vectors.remove(0);
        let rot: Vec<C64> = u1.iter().map(|z| z * C64::from_polar(1.0, theta)).collect();
        prop_assert_eq!(
            initial_point_variance(&u1, &t.f).unwrap().tap,
            initial_point_variance(&rot, &t.f).unwrap().tap
        );
        prop_assert_eq!(
            initial_point_circularity(&u1, &t.f).unwrap().tap,
            initial_point_circularity(&rot, &t.f).unwrap().tap
        );
    }

    #[test]
    fn plain_am_objective_is_monotone(seed in any::<u64>(), snr in 0.0f64..20.0) {
        let t = instance(256, 16, 16, snr, seed);
        let mut cfg = BlindConfig::single_user(16, t.f.delays().to_vec(), t.grid.pilots.clone());
        cfg.derotation = Derotation::PilotOnly;
        cfg.iterations = 8;
        let out = blind_decode_single(&t.y, &cfg).unwrap();
        for w in out.objectives.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9), "objective rose: {:?}", out.objectives);
        }
    }

    #[test]
    fn pilots_are_pinned(seed in any::<u64>(), snr in -5.0f64..20.0, in_loop in any::<bool>()) {
        let t = instance(256, 16, 16, snr, seed);
        let mut cfg = BlindConfig::single_user(16, t.f.delays().to_vec(), t.grid.pilots.clone());
        if !in_loop {
            cfg.derotation = Derotation::PilotOnly;
        }
        let out = blind_decode_single(&t.y, &cfg).unwrap();
        for (p, v) in t.grid.pilots.iter() {
            prop_assert_eq!(out.users[0].symbols[p], v);
            prop_assert_eq!(out.users[0].decisions[p], v);
        }
    }

    #[test]
    fn decode_is_deterministic(seed in any::<u64>()) {
        let t = instance(128, 8, 4, 5.0, seed);
        let cfg = BlindConfig::single_user(4, t.f.delays().to_vec(), t.grid.pilots.clone());
        prop_assert_eq!(blind_decode_single(&t.y, &cfg).unwrap(), blind_decode_single(&t.y, &cfg).unwrap());
    }

    #[test]
    fn trial_seeds_are_distinct(master in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(trial_seed(master, "x", 0, a), trial_seed(master, "x", 0, b));
        prop_assert_ne!(trial_seed(master, "x", a, 0), trial_seed(master, "x", b, 0));
        prop_assert_ne!(trial_seed(master, "x", 0, a), trial_seed(master, "y", 0, a));
    }
}

#[test]
fn experiment_tables_are_reproducible() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::BerSweep);
    cfg.n = 256;
    cfg.n_r = 16;
    cfg.trials = 6;
    cfg.snr_db = vec![0.0, 6.0];
    cfg.baseline_pilots = 24;
    cfg.receivers = vec![ReceiverKind::Blind, ReceiverKind::MrcFft, ReceiverKind::MrcLinear];
    let a = run_experiment(&cfg).unwrap().to_csv();
    assert_eq!(a, run_experiment(&cfg).unwrap().to_csv());
    cfg.seed += 1;
    assert_ne!(a, run_experiment(&cfg).unwrap().to_csv());
}
