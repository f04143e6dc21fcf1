//! One Monte Carlo trial: frame layout, channel draw, received matrix and
//! the receivers under comparison, all fed the same `Y_f`.

use rand::Rng;

use super::config::{ExperimentConfig, InitKind, ReceiverKind};
use crate::baseline_rx::{baseline_decode_multi, baseline_decode_single, Interpolation, PilotGrid};
use crate::blind_rx::{
    blind_decode_multi, blind_decode_single, warm_start_decode, BlindConfig, DecodeResult,
    InitMethod, UserLayout,
};
use crate::channel::{
    add_noise, exponential_corr, noise_variance, sample_time_channel, signal_matrix,
    PowerDelayProfile, ReceivedMatrix, SpatialCorrelation, TimeChannel,
};
use crate::error::Result;
use crate::numerics::{build_dft_submatrix, DftSubmatrix, C64};
use crate::waveform::{FreqSymbolGrid, PilotSpec, QamConstellation};

/// Everything derived once from the configuration.
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub constellation: QamConstellation,
    pub profiles: Vec<PowerDelayProfile>,
    pub corr: SpatialCorrelation,
    pub delays: Vec<usize>,
    pub dft: DftSubmatrix,
    pub l_max: usize,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let delays = cfg.delay_grid()?;
        Ok(Setup {
            constellation: QamConstellation::new(cfg.m)?,
            profiles: cfg.profiles()?,
            corr: exponential_corr(cfg.n_r, cfg.spatial_r)?,
            dft: build_dft_submatrix(cfg.n, &delays)?,
            l_max: cfg.l_max()?,
            delays,
            cfg: cfg.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn n_u(&self) -> usize {
        self.cfg.n_u
    }
}

/// Transmitted symbols of all users plus what each receiver knows about the
/// layout.
pub struct Frame {
    pub users: Vec<FreqSymbolGrid>,
    pub blind: Vec<UserLayout>,
    pub baseline: Option<PilotGrid>,
}

/// Rotational-pilot positions: user `u`'s `k`-th pilot targets
/// `n/2 + (k·n_u + u)·n/(n_u·η)` (mod `n`) and moves up to the next free
/// subcarrier if that one is taken.
pub fn blind_pilot_positions(n: usize, n_u: usize, eta: usize, taken: &mut [bool]) -> Vec<Vec<usize>> {
    let total = n_u * eta;
    let mut out = vec![Vec::with_capacity(eta); n_u];
    for k in 0..eta {
        for (u, pos) in out.iter_mut().enumerate() {
            let j = k * n_u + u;
            let mut p = (n / 2 + j * n / total) % n;
            while taken[p] {
                p = (p + 1) % n;
            }
            taken[p] = true;
            pos.push(p);
        }
    }
    out
}

/// Builds one frame. `blind_pilots` places `η` rotational pilots per user;
/// `baseline_pilots` places an interleaved comb of that many pilots.
pub fn build_frame<R: Rng + ?Sized>(
    s: &Setup,
    blind_pilots: bool,
    baseline_pilots: Option<usize>,
    rng: &mut R,
) -> Result<Frame> {
    let (n, n_u) = (s.n(), s.n_u());
    let c = &s.constellation;
    let baseline = match baseline_pilots {
        Some(p) => Some(PilotGrid::interleaved_comb(n, p, n_u, c, rng)?),
        None => None,
    };
    let mut taken = vec![false; n];
    if let Some(g) = &baseline {
        for p in g.all_positions() {
            taken[p] = true;
        }
    }
    let eta = if blind_pilots { s.cfg.blind.pilots_per_user } else { 0 };
    let rot = blind_pilot_positions(n, n_u, eta, &mut taken);
    let mut users = Vec::with_capacity(n_u);
    let mut blind = Vec::with_capacity(n_u);
    for u in 0..n_u {
        let mut silent: Vec<usize> = Vec::new();
        for v in (0..n_u).filter(|&v| v != u) {
            silent.extend(&rot[v]);
            if let Some(g) = &baseline {
                silent.extend(g.positions(v));
            }
        }
        silent.sort_unstable();
        let rot_spec = PilotSpec::new(rot[u].clone(), vec![c.corner(); rot[u].len()])?;
        let mut positions = rot[u].clone();
        let mut values = rot_spec.values().to_vec();
        if let Some(g) = &baseline {
            positions.extend(g.positions(u));
            values.extend(g.values(u));
        }
        let all = PilotSpec::new(positions, values)?;
        users.push(FreqSymbolGrid::build(rng, n, c, &all, &silent)?);
        blind.push(UserLayout {
            pilots: rot_spec,
            silent,
            given_tap: Some(s.profiles[u].dominant_delay()),
        });
    }
    Ok(Frame { users, blind, baseline })
}

pub fn draw_channels<R: Rng + ?Sized>(s: &Setup, rng: &mut R) -> Vec<TimeChannel> {
    s.profiles
        .iter()
        .map(|p| sample_time_channel(p, &s.corr, rng))
        .collect()
}

pub fn receive<R: Rng + ?Sized>(
    s: &Setup,
    frame: &Frame,
    channels: &[TimeChannel],
    snr_db: f64,
    rng: &mut R,
) -> Result<ReceivedMatrix> {
    let symbols: Vec<&[C64]> = frame.users.iter().map(|g| g.symbols.as_slice()).collect();
    let chans: Vec<&TimeChannel> = channels.iter().collect();
    let mut y = signal_matrix(&symbols, &chans, &s.dft)?;
    let sigma2 = noise_variance(snr_db);
    add_noise(&mut y, sigma2, rng);
    Ok(ReceivedMatrix {
        y,
        noise_variance: sigma2,
    })
}

/// Bit errors and bit count over the user's data subcarriers.
pub fn count_errors(c: &QamConstellation, grid: &FreqSymbolGrid, decisions: &[C64]) -> (usize, usize) {
    let k = c.bits_per_symbol();
    let mut bits = Vec::with_capacity(k);
    let mut errors = 0;
    for (j, &i) in grid.data_positions.iter().enumerate() {
        bits.clear();
        c.demodulate_into(decisions[i], &mut bits);
        errors += bits
            .iter()
            .zip(&grid.bits[j * k..(j + 1) * k])
            .filter(|(a, b)| a != b)
            .count();
    }
    (errors, grid.bits.len())
}

/// Bit error rate over all users of a frame.
pub fn frame_ber(c: &QamConstellation, frame: &Frame, decisions: &[Vec<C64>]) -> f64 {
    let (mut e, mut b) = (0, 0);
    for (g, d) in frame.users.iter().zip(decisions) {
        let (ei, bi) = count_errors(c, g, d);
        e += ei;
        b += bi;
    }
    if b == 0 {
        0.0
    } else {
        e as f64 / b as f64
    }
}

pub fn blind_config(s: &Setup, frame: &Frame, iterations: usize, init: InitKind) -> BlindConfig {
    let b = &s.cfg.blind;
    BlindConfig {
        iterations,
        mu: b.mu,
        derotate_at: b.derotate_at,
        qam_order: s.cfg.m,
        delays: s.delays.clone(),
        init: init.into(),
        derotation: b.derotation.into(),
        users: frame.blind.clone(),
        mixing_fallback: b.mixing_fallback.into(),
        condition_limit: b.condition_limit,
        record_trajectory: false,
    }
}

pub fn run_blind(y: &ReceivedMatrix, cfg: &BlindConfig) -> Result<DecodeResult> {
    if cfg.users.len() == 1 {
        blind_decode_single(y, cfg)
    } else {
        blind_decode_multi(y, cfg)
    }
}

pub fn run_warm(y: &ReceivedMatrix, h_prev: &TimeChannel, cfg: &BlindConfig) -> Result<DecodeResult> {
    let mut cfg = cfg.clone();
    cfg.init = InitMethod::WarmStart;
    warm_start_decode(y, h_prev, &cfg)
}

/// Decisions of a receiver for every user, or `None` if the receiver failed
/// on this instance (counted as a decoding failure by the caller).
pub fn decisions(
    s: &Setup,
    frame: &Frame,
    y: &ReceivedMatrix,
    receiver: ReceiverKind,
) -> Result<Option<Vec<Vec<C64>>>> {
    let c = &s.constellation;
    let interp_fft = Interpolation::Fft { l_max: s.l_max };
    match receiver {
        ReceiverKind::Blind => {
            let cfg = blind_config(s, frame, s.cfg.blind_iterations(), s.cfg.blind_init());
            Ok(run_blind(y, &cfg)
                .ok()
                .map(|r| r.users.into_iter().map(|u| u.decisions).collect()))
        }
        ReceiverKind::MrcFft | ReceiverKind::MrcLinear => {
            let grid = frame.baseline.as_ref().expect("baseline pilots in frame");
            let interp = if receiver == ReceiverKind::MrcFft {
                interp_fft
            } else {
                Interpolation::Linear
            };
            Ok(Some(vec![baseline_decode_single(y, grid, interp, c)?]))
        }
        ReceiverKind::Mmse => {
            let grid = frame.baseline.as_ref().expect("baseline pilots in frame");
            Ok(Some(baseline_decode_multi(y, grid, interp_fft, c)?))
        }
    }
}

/// Decisions used when a receiver fails: every symbol decoded as zero.
pub fn failed_decisions(frame: &Frame) -> Vec<Vec<C64>> {
    frame
        .users
        .iter()
        .map(|g| vec![C64::new(0.0, 0.0); g.symbols.len()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n_u: usize) -> Setup {
        let mut cfg = ExperimentConfig::new(ExperimentKind::BerSweep);
        cfg.n = 256;
        cfg.n_r = 16;
        cfg.n_u = n_u;
        cfg.baseline_pilots = 24;
        cfg.blind.iterations = Some(20);
        cfg.receivers = if n_u == 1 {
            vec![ReceiverKind::Blind, ReceiverKind::MrcFft, ReceiverKind::MrcLinear]
        } else {
            vec![ReceiverKind::Blind, ReceiverKind::Mmse]
        };
        Setup::new(&cfg).unwrap()
    }

    #[test]
    fn rotational_pilots_avoid_taken_subcarriers() {
        let mut taken = vec![false; 16];
        taken[8] = true;
        taken[12] = true;
        let p = blind_pilot_positions(16, 2, 2, &mut taken);
        assert_eq!(p, vec![vec![9, 0], vec![13, 4]]);
        let mut fresh = vec![false; 1024];
        assert_eq!(blind_pilot_positions(1024, 4, 1, &mut fresh), vec![vec![512], vec![768], vec![0], vec![256]]);
    }

    #[test]
    fn frame_layout_is_consistent() {
        let s = setup(4);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let f = build_frame(&s, true, Some(24), &mut r).unwrap();
        let g = f.baseline.as_ref().unwrap();
        for u in 0..4 {
            let x = &f.users[u];
            for v in (0..4).filter(|&v| v != u) {
                for &p in f.blind[v].pilots.positions().iter().chain(g.positions(v)) {
                    assert_eq!(x.symbols[p], C64::new(0.0, 0.0));
                    assert!(f.blind[u].silent.contains(&p));
                }
            }
            for (p, v) in f.blind[u].pilots.iter() {
                assert_eq!(x.symbols[p], v);
            }
            for (&p, &v) in g.positions(u).iter().zip(g.values(u)) {
                assert_eq!(x.symbols[p], v);
                assert!(!x.data_positions.contains(&p));
            }
            assert_eq!(x.data_positions.len(), 256 - 24 - 4);
        }
    }

    #[test]
    fn noiseless_trial_has_zero_ber_for_all_receivers() {
        for n_u in [1, 2] {
            let s = setup(n_u);
            let mut r = ChaCha8Rng::seed_from_u64(2);
            let f = build_frame(&s, true, Some(24), &mut r).unwrap();
            let ch = draw_channels(&s, &mut r);
            let y = receive(&s, &f, &ch, f64::INFINITY, &mut r).unwrap();
            for &rx in &s.cfg.receivers {
                let d = decisions(&s, &f, &y, rx).unwrap().unwrap();
                assert_eq!(frame_ber(&s.constellation, &f, &d), 0.0, "{rx:?} n_u {n_u}");
            }
        }
    }

    #[test]
    fn failed_decode_counts_errors() {
        let s = setup(1);
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let f = build_frame(&s, true, None, &mut r).unwrap();
        let ber = frame_ber(&s.constellation, &f, &failed_decisions(&f));
        assert!(ber > 0.3 && ber < 0.7, "{ber}");
    }
}
