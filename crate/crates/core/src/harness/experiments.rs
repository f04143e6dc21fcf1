//! The four experiment kinds. Trials run in parallel but every trial draws
//! from its own seeded streams and results are reduced in trial order, so a
//! table depends only on the configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, InitKind, ReceiverKind};
use super::results::{mean_stderr, ResultTable};
use super::seed::{trial_seed, TrialRngs};
use super::trial::{
    blind_config, build_frame, count_errors, decisions, draw_channels, failed_decisions, frame_ber,
    receive, run_blind, run_warm, Setup,
};
use crate::blind_rx::{estimate_coefficient_matrix, multiuser_initial_points, InitMethod};
use crate::channel::{doppler_hz, evolve_channel, temporal_coefficient};
use crate::error::{Error, Result};
use crate::numerics::top_left_singular_vectors;
use crate::waveform::PilotSpec;

/// Runs the experiment named by `cfg.experiment`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    match cfg.experiment {
        ExperimentKind::BerSweep => run_ber_sweep(cfg),
        ExperimentKind::TapError => run_tap_error(cfg),
        ExperimentKind::Temporal => run_temporal(cfg),
        ExperimentKind::Utilization => run_utilization(cfg),
    }
}

/// Evaluates `f` on every trial of one SNR point, in trial order.
fn trials<T, F>(cfg: &ExperimentConfig, snr_index: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(TrialRngs) -> Result<T> + Sync,
{
    let id = cfg.experiment_id();
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| f(TrialRngs::new(trial_seed(cfg.seed, id, snr_index as u64, t as u64))))
        .collect()
}

fn column(samples: &[Vec<f64>], i: usize) -> Vec<f64> {
    samples.iter().map(|s| s[i]).collect()
}

fn paired_diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `mean(a − b) ≤ 3·SE(a − b)`: `a` is no worse than `b` up to Monte Carlo
/// noise on paired samples.
pub fn within_three_se(a: &[f64], b: &[f64]) -> bool {
    let (m, se) = mean_stderr(&paired_diff(a, b));
    m <= 3.0 * se
}

fn baseline_receiver(cfg: &ExperimentConfig) -> ReceiverKind {
    cfg.receivers
        .iter()
        .copied()
        .find(|r| r.uses_baseline_pilots())
        .unwrap_or(if cfg.n_u > 1 {
            ReceiverKind::Mmse
        } else {
            ReceiverKind::MrcFft
        })
}

/// BER per receiver and SNR on a shared received matrix, plus the blind
/// decode failure count and the paired blind-minus-baseline difference.
pub fn run_ber_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let s = Setup::new(cfg)?;
    let receivers = &cfg.receivers;
    let blind = receivers.contains(&ReceiverKind::Blind);
    let baseline = receivers
        .iter()
        .any(|r| r.uses_baseline_pilots())
        .then_some(cfg.baseline_pilots);
    let mut table = ResultTable::new(cfg.clone());
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        // Per trial: one BER per receiver and a failure flag.
        let samples: Vec<(Vec<f64>, bool)> = trials(cfg, si, |mut r| {
            let frame = build_frame(&s, blind, baseline, &mut r.data)?;
            let ch = draw_channels(&s, &mut r.channel);
            let y = receive(&s, &frame, &ch, snr, &mut r.noise)?;
            let mut failed = false;
            let mut bers = Vec::with_capacity(receivers.len());
            for &rx in receivers {
                let d = match decisions(&s, &frame, &y, rx)? {
                    Some(d) => d,
                    None => {
                        failed = true;
                        failed_decisions(&frame)
                    }
                };
                bers.push(frame_ber(&s.constellation, &frame, &d));
            }
            Ok((bers, failed))
        })?;
        let bers: Vec<Vec<f64>> = samples.iter().map(|(b, _)| b.clone()).collect();
        for (i, rx) in receivers.iter().enumerate() {
            let (m, se) = mean_stderr(&column(&bers, i));
            table.push(rx.as_str(), Some(snr), "ber", m, se, cfg.trials);
        }
        if let Some(bi) = receivers.iter().position(|&r| r == ReceiverKind::Blind) {
            let failures = samples.iter().filter(|(_, f)| *f).count();
            table.push("blind", Some(snr), "failures", failures as f64, 0.0, cfg.trials);
            for (i, rx) in receivers.iter().enumerate().filter(|(i, _)| *i != bi) {
                let (m, se) = mean_stderr(&paired_diff(&column(&bers, bi), &column(&bers, i)));
                let metric = format!("ber_diff_{}", rx.as_str());
                table.push("blind", Some(snr), &metric, m, se, cfg.trials);
            }
        }
    }
    Ok(table)
}

fn init_method(k: InitKind) -> InitMethod {
    k.into()
}

/// Fraction of wrong dominant-tap selections per estimator and SNR. With
/// several users the taps come from the unmixed singular vectors; an
/// ill-conditioned mixing matrix counts as a miss for every user.
pub fn run_tap_error(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let s = Setup::new(cfg)?;
    let n_u = cfg.n_u;
    let estimators = &cfg.tap_error.estimators;
    let truth: Vec<usize> = s.profiles.iter().map(|p| p.dominant_delay()).collect();
    let mut table = ResultTable::new(cfg.clone());
    let mut per_snr: Vec<Vec<Vec<f64>>> = Vec::new();
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        // Per trial, per estimator: one miss indicator per user.
        let samples: Vec<Vec<Vec<f64>>> = trials(cfg, si, |mut r| {
            let frame = build_frame(&s, true, None, &mut r.data)?;
            let ch = draw_channels(&s, &mut r.channel);
            let y = receive(&s, &frame, &ch, snr, &mut r.noise)?;
            let svd = top_left_singular_vectors(&y.y, n_u)?;
            let pilots: Vec<PilotSpec> = frame.blind.iter().map(|b| b.pilots.clone()).collect();
            let given: Vec<Option<usize>> = frame.blind.iter().map(|b| b.given_tap).collect();
            let mixing = estimate_coefficient_matrix(&svd, &pilots, cfg.blind.condition_limit);
            estimators
                .iter()
                .map(|&e| {
                    let taps = match &mixing {
                        Ok(a) => multiuser_initial_points(&svd, a, &s.dft, init_method(e), &given)
                            .map(|ips| ips.iter().map(|ip| Some(ip.tap)).collect())
                            .unwrap_or_else(|_| vec![None; n_u]),
                        Err(_) => vec![None; n_u],
                    };
                    Ok(taps
                        .iter()
                        .zip(&truth)
                        .map(|(t, d)| if *t == Some(*d) { 0.0 } else { 1.0 })
                        .collect())
                })
                .collect()
        })?;
        for (ei, e) in estimators.iter().enumerate() {
            let name = e.as_str();
            let avg: Vec<f64> = samples
                .iter()
                .map(|t| t[ei].iter().sum::<f64>() / n_u as f64)
                .collect();
            let (m, se) = mean_stderr(&avg);
            table.push(name, Some(snr), "tap_error", m, se, cfg.trials);
            if n_u > 1 {
                for u in 0..n_u {
                    let miss: Vec<f64> = samples.iter().map(|t| t[ei][u]).collect();
                    let (m, se) = mean_stderr(&miss);
                    table.push(name, Some(snr), &format!("tap_error_user{u}"), m, se, cfg.trials);
                }
            }
        }
        per_snr.push(
            (0..estimators.len())
                .map(|ei| {
                    samples
                        .iter()
                        .map(|t| t[ei].iter().sum::<f64>() / n_u as f64)
                        .collect()
                })
                .collect(),
        );
    }
    let vi = estimators.iter().position(|&e| e == InitKind::Variance);
    let ci = estimators.iter().position(|&e| e == InitKind::Circularity);
    if let (Some(vi), Some(ci)) = (vi, ci) {
        let ok = per_snr.iter().all(|p| within_three_se(&p[ci], &p[vi]));
        table.push("circularity", None, "ordering_ok", ok as u8 as f64, 0.0, cfg.trials);
    }
    Ok(table)
}

/// Smallest `k` whose BER is within 3 paired standard errors of the
/// baseline at every SNR point. `ber[snr][trial][k−1]`.
pub fn min_iterations(ber: &[Vec<Vec<f64>>], baseline: &[Vec<f64>], max: usize) -> Option<usize> {
    (1..=max).find(|&k| {
        ber.iter()
            .zip(baseline)
            .all(|(b, base)| within_three_se(&column(b, k - 1), base))
    })
}

struct TemporalSample {
    cold: Vec<f64>,
    cold_base: f64,
    /// `[speed][time][k−1]`
    warm: Vec<Vec<Vec<f64>>>,
    warm_base: Vec<Vec<f64>>,
}

/// Per-iteration BER of a decode, or the failed-decode BER at every `k`.
fn trajectory_ber(
    s: &Setup,
    frame: &super::trial::Frame,
    out: &Result<crate::blind_rx::DecodeResult>,
    max: usize,
) -> Vec<f64> {
    match out {
        Ok(r) => r.users[0]
            .trajectory
            .iter()
            .map(|d| {
                let (e, b) = count_errors(&s.constellation, &frame.users[0], d);
                e as f64 / b as f64
            })
            .collect(),
        Err(_) => vec![frame_ber(&s.constellation, frame, &failed_decisions(frame)); max],
    }
}

/// Iterations needed to match the pilot baseline for a cold start at `t = 0`
/// and for warm starts at later symbol times from the `t = 0` estimate.
pub fn run_temporal(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let s = Setup::new(cfg)?;
    let tc = &cfg.temporal;
    let max = tc.max_iterations;
    let base_rx = baseline_receiver(cfg);
    let pdp = &s.profiles[0];
    let etas: Vec<Vec<f64>> = tc
        .speeds_kmh
        .iter()
        .map(|&v| {
            let fd = doppler_hz(v, tc.carrier_hz);
            tc.times_ms
                .iter()
                .map(|&t| temporal_coefficient(fd, 1, t * 1e-3))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut table = ResultTable::new(cfg.clone());
    let mut samples: Vec<Vec<TemporalSample>> = Vec::new();
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        samples.push(trials(cfg, si, |mut r| {
            let base_of = |frame: &super::trial::Frame, y: &crate::channel::ReceivedMatrix| -> Result<f64> {
                let d = decisions(&s, frame, y, base_rx)?.expect("baseline always decodes");
                Ok(frame_ber(&s.constellation, frame, &d))
            };
            let frame = build_frame(&s, true, Some(cfg.baseline_pilots), &mut r.data)?;
            let ch = draw_channels(&s, &mut r.channel);
            let y = receive(&s, &frame, &ch, snr, &mut r.noise)?;
            let mut bc = blind_config(&s, &frame, max, cfg.blind_init());
            bc.record_trajectory = true;
            let cold_out = run_blind(&y, &bc);
            let cold = trajectory_ber(&s, &frame, &cold_out, max);
            let cold_base = base_of(&frame, &y)?;
            let mut warm = Vec::new();
            let mut warm_base = Vec::new();
            for eta_v in &etas {
                let (mut wv, mut bv) = (Vec::new(), Vec::new());
                for &eta in eta_v {
                    let h_t = evolve_channel(&ch[0], eta, &s.corr, pdp, &mut r.channel)?;
                    let f_t = build_frame(&s, true, Some(cfg.baseline_pilots), &mut r.data)?;
                    let y_t = receive(&s, &f_t, std::slice::from_ref(&h_t), snr, &mut r.noise)?;
                    let mut wc = blind_config(&s, &f_t, max, cfg.blind_init());
                    wc.record_trajectory = true;
                    let out = match &cold_out {
                        Ok(c) => run_warm(&y_t, &c.users[0].h_hat, &wc),
                        // Without a previous estimate the symbol starts cold.
                        Err(_) => run_blind(&y_t, &wc),
                    };
                    wv.push(trajectory_ber(&s, &f_t, &out, max));
                    bv.push(base_of(&f_t, &y_t)?);
                }
                warm.push(wv);
                warm_base.push(bv);
            }
            Ok(TemporalSample {
                cold,
                cold_base,
                warm,
                warm_base,
            })
        })?);
        let cur = samples.last().expect("just pushed");
        let base: Vec<f64> = cur.iter().map(|t| t.cold_base).collect();
        let (m, se) = mean_stderr(&base);
        table.push(base_rx.as_str(), Some(snr), "ber:t=0ms", m, se, cfg.trials);
        for k in 1..=max {
            let b: Vec<f64> = cur.iter().map(|t| t.cold[k - 1]).collect();
            let (m, se) = mean_stderr(&b);
            table.push("blind", Some(snr), &format!("ber:t=0ms:k={k}"), m, se, cfg.trials);
        }
        for (vi, v) in tc.speeds_kmh.iter().enumerate() {
            for (ti, t) in tc.times_ms.iter().enumerate() {
                let tag = format!("v={v}kmh:t={t}ms");
                let base: Vec<f64> = cur.iter().map(|x| x.warm_base[vi][ti]).collect();
                let (m, se) = mean_stderr(&base);
                table.push(base_rx.as_str(), Some(snr), &format!("ber:{tag}"), m, se, cfg.trials);
                for k in 1..=max {
                    let b: Vec<f64> = cur.iter().map(|x| x.warm[vi][ti][k - 1]).collect();
                    let (m, se) = mean_stderr(&b);
                    table.push("blind", Some(snr), &format!("ber:{tag}:k={k}"), m, se, cfg.trials);
                }
            }
        }
    }
    let count = |v: Option<usize>| v.map_or(f64::NAN, |k| k as f64);
    let cold_ber: Vec<Vec<Vec<f64>>> = samples
        .iter()
        .map(|p| p.iter().map(|t| t.cold.clone()).collect())
        .collect();
    let cold_base: Vec<Vec<f64>> = samples
        .iter()
        .map(|p| p.iter().map(|t| t.cold_base).collect())
        .collect();
    let cold = min_iterations(&cold_ber, &cold_base, max);
    table.push("blind", None, "iterations:t=0ms", count(cold), 0.0, cfg.trials);
    for (vi, v) in tc.speeds_kmh.iter().enumerate() {
        for (ti, t) in tc.times_ms.iter().enumerate() {
            let tag = format!("v={v}kmh:t={t}ms");
            let ber: Vec<Vec<Vec<f64>>> = samples
                .iter()
                .map(|p| p.iter().map(|x| x.warm[vi][ti].clone()).collect())
                .collect();
            let base: Vec<Vec<f64>> = samples
                .iter()
                .map(|p| p.iter().map(|x| x.warm_base[vi][ti]).collect())
                .collect();
            let k = min_iterations(&ber, &base, max);
            table.push("blind", None, &format!("iterations:{tag}"), count(k), 0.0, cfg.trials);
            table.push("channel", None, &format!("eta:{tag}"), etas[vi][ti], 0.0, 1);
        }
    }
    Ok(table)
}

/// Per-SNR, per-trial BER of one receiver on frames carrying only its own
/// pilots: blind pilots when `baseline_pilots` is `None`. Trial `t` at SNR
/// index `i` draws the same channel and noise streams in every call with the
/// same seed and experiment id, so samples from two calls are paired.
pub fn ber_samples(s: &Setup, rx: ReceiverKind, baseline_pilots: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let cfg = &s.cfg;
    cfg.snr_db
        .iter()
        .enumerate()
        .map(|(si, &snr)| {
            trials(cfg, si, |mut r| {
                let frame = build_frame(s, baseline_pilots.is_none(), baseline_pilots, &mut r.data)?;
                let ch = draw_channels(s, &mut r.channel);
                let y = receive(s, &frame, &ch, snr, &mut r.noise)?;
                let d = decisions(s, &frame, &y, rx)?.unwrap_or_else(|| failed_decisions(&frame));
                Ok(frame_ber(&s.constellation, &frame, &d))
            })
        })
        .collect()
}

/// Data-subcarrier fractions of the blind receiver and of the pilot baseline
/// at the smallest density whose BER is within 3 paired standard errors of
/// the blind one at every SNR point. Blind and baseline frames differ only in
/// their pilots and data; channel and noise draws are shared.
pub fn run_utilization(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let s = Setup::new(cfg)?;
    let (n, n_u) = (cfg.n, cfg.n_u);
    let base_rx = baseline_receiver(cfg);
    let u = &cfg.utilization;
    let q = u.step.div_ceil(n_u) * n_u;
    let candidates: Vec<usize> = (u.min_pilots.div_ceil(q) * q..=u.max_pilots)
        .step_by(q)
        .filter(|&p| p / n_u >= s.l_max)
        .collect();
    if candidates.is_empty() {
        return Err(Error::config("utilization", "no admissible baseline pilot count in range"));
    }
    let mut table = ResultTable::new(cfg.clone());

    let blind = ber_samples(&s, ReceiverKind::Blind, None)?;
    let probe = build_frame(&s, true, None, &mut ChaCha8Rng::seed_from_u64(0))?;
    let blind_util = probe.users[0].data_positions.len() as f64 / n as f64;

    let mut cache: Vec<Option<Vec<Vec<f64>>>> = vec![None; candidates.len()];
    let mut eval = |i: usize| -> Result<bool> {
        if cache[i].is_none() {
            cache[i] = Some(ber_samples(&s, base_rx, Some(candidates[i]))?);
        }
        let b = cache[i].as_ref().expect("filled");
        Ok(b.iter().zip(&blind).all(|(x, bl)| within_three_se(x, bl)))
    };
    let last = candidates.len() - 1;
    let matched = if !eval(last)? {
        None
    } else {
        let (mut lo, mut hi) = (0usize, last);
        if eval(0)? {
            hi = 0;
        }
        // Invariant: candidates[hi] matches, candidates[lo] does not (unless hi == 0).
        while hi > 0 && hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if eval(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };

    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let (m, se) = mean_stderr(&blind[si]);
        table.push("blind", Some(snr), "ber", m, se, cfg.trials);
        if let Some(i) = matched {
            let (m, se) = mean_stderr(&cache[i].as_ref().expect("evaluated")[si]);
            table.push(base_rx.as_str(), Some(snr), "ber", m, se, cfg.trials);
        }
    }
    table.push("blind", None, "utilization", blind_util, 0.0, 1);
    table.push("blind", None, "pilots", (n_u * cfg.blind.pilots_per_user) as f64, 0.0, 1);
    match matched {
        Some(i) => {
            let p = candidates[i];
            table.push(base_rx.as_str(), None, "utilization", 1.0 - p as f64 / n as f64, 0.0, 1);
            table.push(base_rx.as_str(), None, "pilots", p as f64, 0.0, 1);
            table.push(base_rx.as_str(), None, "density", p as f64 / n as f64, 0.0, 1);
            table.push(base_rx.as_str(), None, "search_failed", 0.0, 0.0, 1);
        }
        None => table.push(base_rx.as_str(), None, "search_failed", 1.0, 0.0, 1),
    }
    Ok(table)
}

/// Violations of each experiment's built-in expectation, for `--check`.
pub fn check(table: &ResultTable) -> Vec<String> {
    let mut out = Vec::new();
    for r in &table.rows {
        let bad = match r.metric.as_str() {
            m if m.starts_with("ber_diff_") => r.value > 3.0 * r.stderr,
            "ordering_ok" => r.value != 1.0,
            "search_failed" => r.value != 0.0,
            m if m.starts_with("iterations:") => r.value.is_nan(),
            _ => false,
        };
        if bad {
            let snr = r.snr_db.map_or(String::new(), |s| format!(" at {s} dB"));
            out.push(format!("{} {}{}: {}", r.receiver, r.metric, snr, r.value));
        }
    }
    if table.config.experiment == ExperimentKind::Temporal {
        let cold = table
            .rows
            .iter()
            .find(|r| r.metric == "iterations:t=0ms")
            .map(|r| r.value);
        for r in table.rows.iter().filter(|r| r.metric.starts_with("iterations:v=")) {
            if let Some(c) = cold {
                if !(r.value < c) {
                    out.push(format!("{} ({}) is not below the cold start ({c})", r.metric, r.value));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(kind);
        c.n = 256;
        c.n_r = 16;
        c.m = 16;
        c.trials = 6;
        c.snr_db = vec![10.0, f64::INFINITY];
        c.baseline_pilots = 32;
        c
    }

    #[test]
    fn noiseless_point_is_error_free() {
        let mut c = small(ExperimentKind::BerSweep);
        c.receivers = vec![ReceiverKind::Blind, ReceiverKind::MrcFft, ReceiverKind::MrcLinear];
        c.blind.iterations = Some(20);
        let t = run_ber_sweep(&c).unwrap();
        for rx in ["blind", "mrc-fft", "mrc-linear"] {
            let inf: Vec<_> = t.select(rx, "ber").filter(|r| r.snr_db == Some(f64::INFINITY)).collect();
            assert_eq!(inf.len(), 1);
            assert_eq!(inf[0].value, 0.0, "{rx}");
            assert_eq!(inf[0].trials, 6);
        }
        assert_eq!(t.select("blind", "ber_diff_mrc-fft").count(), 2);
    }

    #[test]
    fn receivers_are_paired() {
        // The same receiver listed twice sees the same Y_f in every trial.
        let mut c = small(ExperimentKind::BerSweep);
        c.snr_db = vec![4.0];
        c.receivers = vec![ReceiverKind::MrcFft, ReceiverKind::MrcFft];
        let t = run_ber_sweep(&c).unwrap();
        let r: Vec<_> = t.select("mrc-fft", "ber").collect();
        assert_eq!(r[0].value, r[1].value);
        assert!(r[0].value > 0.0);
    }

    #[test]
    fn single_tap_channel_has_no_tap_errors() {
        let mut c = small(ExperimentKind::TapError);
        c.pdp = vec!["flat".into()];
        c.snr_db = vec![0.0];
        let t = run_tap_error(&c).unwrap();
        for r in t.rows.iter().filter(|r| r.metric == "tap_error") {
            assert_eq!(r.value, 0.0);
        }
        assert_eq!(t.select("circularity", "ordering_ok").next().unwrap().value, 1.0);
    }

    #[test]
    fn static_channel_warm_start_is_fast() {
        let mut c = small(ExperimentKind::Temporal);
        c.temporal.speeds_kmh = vec![0.0];
        c.temporal.times_ms = vec![5.0];
        c.temporal.max_iterations = 12;
        c.snr_db = vec![f64::INFINITY];
        let t = run_temporal(&c).unwrap();
        let eta = t.select("channel", "eta:v=0kmh:t=5ms").next().unwrap().value;
        assert_eq!(eta, 1.0);
        let warm = t.select("blind", "iterations:v=0kmh:t=5ms").next().unwrap().value;
        assert!(warm <= 2.0, "{warm}");
        assert!(check(&t).is_empty() || warm < 2.0);
    }

    #[test]
    fn utilization_fractions() {
        let mut c = small(ExperimentKind::Utilization);
        c.receivers = vec![ReceiverKind::Blind, ReceiverKind::MrcFft];
        c.snr_db = vec![f64::INFINITY];
        c.utilization.min_pilots = 8;
        c.utilization.max_pilots = 64;
        let t = run_utilization(&c).unwrap();
        let u = t.select("blind", "utilization").next().unwrap().value;
        assert_eq!(u, 255.0 / 256.0);
        // Noiseless: both receivers are error-free, so the sparsest admissible
        // comb already matches.
        assert_eq!(t.select("mrc-fft", "pilots").next().unwrap().value, 8.0);
        assert_eq!(t.select("mrc-fft", "search_failed").next().unwrap().value, 0.0);
    }

    #[test]
    fn min_iterations_picks_first_match() {
        let ber = vec![vec![vec![0.5, 0.1, 0.0]; 4]];
        let base = vec![vec![0.1; 4]];
        assert_eq!(min_iterations(&ber, &base, 3), Some(2));
        assert_eq!(min_iterations(&ber, &[vec![-1.0; 4]], 3), None);
    }

    #[test]
    fn tables_are_deterministic() {
        let mut c = small(ExperimentKind::BerSweep);
        c.snr_db = vec![6.0];
        let a = run_ber_sweep(&c).unwrap().to_csv();
        let b = run_ber_sweep(&c).unwrap().to_csv();
        assert_eq!(a, b);
    }
}
