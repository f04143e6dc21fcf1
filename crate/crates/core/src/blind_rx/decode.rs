//! Single-user decode pipelines: cold start from the SVD and warm start from
//! a previous channel estimate.

use super::am::{am_step_single, mrc_from_channel};
use super::derotate::{derotate_cluster, estimate_lambda};
use super::initial::{initial_point_circularity, initial_point_given_tap, initial_point_variance};
use super::{BlindConfig, DecodeResult, Derotation, InitMethod, UserDecode, UserLayout};
use crate::channel::{ReceivedMatrix, TimeChannel};
use crate::error::{Error, Result};
use crate::numerics::{
    build_dft_submatrix, freq_response, top_left_singular_vectors, CMatrix, DftSubmatrix, C64,
};
use crate::waveform::QamConstellation;

/// Pilots to their known values, silent subcarriers to zero.
pub(super) fn pin(x: &mut [C64], layout: &UserLayout) {
    for (p, v) in layout.pilots.iter() {
        x[p] = v;
    }
    for &s in &layout.silent {
        x[s] = C64::new(0.0, 0.0);
    }
}

pub(super) fn map_to_constellation(x: &mut [C64], c: &QamConstellation, layout: &UserLayout) {
    for v in x.iter_mut() {
        *v = c.nearest(*v);
    }
    pin(x, layout);
}

/// Hard decisions a run ending now would return.
///
/// Before the de-rotation iteration the estimate is still scaled by `λ`, so
/// a copy is corrected with the pilot first.
pub(super) fn snapshot(
    x: &[C64],
    derotated: bool,
    c: &QamConstellation,
    layout: &UserLayout,
) -> Result<(Vec<C64>, C64)> {
    let mut out = x.to_vec();
    let mut lambda = C64::new(1.0, 0.0);
    if !derotated {
        lambda = estimate_lambda(x, &layout.pilots)?;
        if lambda.norm() > 0.0 {
            out.iter_mut().for_each(|v| *v /= lambda);
        }
    }
    map_to_constellation(&mut out, c, layout);
    Ok((out, lambda))
}

#[allow(clippy::too_many_arguments)]
pub(super) fn finish_user(
    soft: Vec<C64>,
    decisions: Vec<C64>,
    lambda: C64,
    h_hat: CMatrix,
    delays: &[usize],
    dominant_tap: usize,
    iterations_used: usize,
    trajectory: Vec<Vec<C64>>,
    c: &QamConstellation,
    layout: &UserLayout,
) -> UserDecode {
    let data = layout.data_positions(soft.len());
    let mut hard_bits = Vec::with_capacity(data.len() * c.bits_per_symbol());
    for &i in &data {
        c.demodulate_into(decisions[i], &mut hard_bits);
    }
    UserDecode {
        symbols: soft,
        hard_bits,
        decisions,
        lambda_hat: lambda,
        h_hat: TimeChannel {
            h: h_hat,
            delays: delays.to_vec(),
        },
        dominant_tap,
        iterations_used,
        trajectory,
    }
}

/// Runs the iteration schedule from `x0`. `derotate_at` is the 1-based
/// iteration where `λ̂` is applied under in-loop de-rotation.
fn iterate_single(
    y: &ReceivedMatrix,
    x0: Vec<C64>,
    f: &DftSubmatrix,
    cfg: &BlindConfig,
    derotate_at: usize,
    dominant_tap: usize,
) -> Result<DecodeResult> {
    let layout = &cfg.users[0];
    let c = QamConstellation::new(cfg.qam_order)?;
    let in_loop = cfg.derotation == Derotation::InLoop;
    let mut x = x0;
    let mut h = CMatrix::zeros(f.num_taps(), y.y.ncols());
    let mut lambda = C64::new(1.0, 0.0);
    let mut derotated = false;
    let mut residuals = Vec::with_capacity(cfg.iterations);
    let mut objectives = Vec::with_capacity(cfg.iterations);
    let mut zero_gain = 0;
    let mut trajectory = Vec::new();
    for k in 1..=cfg.iterations {
        let step = am_step_single(&y.y, &x, f, cfg.mu)?;
        residuals.push(step.residual);
        objectives.push(step.objective(cfg.mu));
        zero_gain += step.zero_gain.len();
        h = step.h_hat;
        x = step.x_next;
        if in_loop && k >= derotate_at {
            if k == derotate_at {
                lambda = estimate_lambda(&x, &layout.pilots)?;
                if lambda.norm() == 0.0 {
                    return Err(Error::SingularSystem("pilot estimate is zero".into()));
                }
                x.iter_mut().for_each(|v| *v /= lambda);
                derotated = true;
            }
            map_to_constellation(&mut x, &c, layout);
        }
        if cfg.record_trajectory {
            trajectory.push(snapshot(&x, derotated, &c, layout)?.0);
        }
    }
    let (soft, decisions, lam) = match cfg.derotation {
        Derotation::InLoop | Derotation::PilotOnly => {
            let (decisions, extra) = snapshot(&x, derotated, &c, layout)?;
            let mut soft = x;
            if !derotated {
                soft.iter_mut().for_each(|v| *v /= extra);
                pin(&mut soft, layout);
                lambda = extra;
                h *= extra;
            } else if derotate_at == cfg.iterations {
                // The last channel fit still saw the rotated symbols.
                h *= lambda;
            }
            (soft, decisions, lambda)
        }
        Derotation::Cluster => {
            let active: Vec<usize> = (0..x.len()).filter(|i| !layout.silent.contains(i)).collect();
            let compact: Vec<C64> = active.iter().map(|&i| x[i]).collect();
            let pos: Vec<usize> = layout
                .pilots
                .positions()
                .iter()
                .map(|p| active.binary_search(p).expect("pilots are never silent"))
                .collect();
            let pilots = crate::waveform::PilotSpec::new(pos, layout.pilots.values().to_vec())?;
            let out = derotate_cluster(&compact, &pilots, cfg.qam_order)?;
            let lam = out.pilot_rotation * out.energy_scale * C64::from_polar(1.0, out.residual_angle);
            let mut decisions = vec![C64::new(0.0, 0.0); x.len()];
            for (j, &i) in active.iter().enumerate() {
                decisions[i] = out.decisions[j];
            }
            pin(&mut decisions, layout);
            let mut soft = x;
            soft.iter_mut().for_each(|v| *v /= lam);
            pin(&mut soft, layout);
            h *= lam;
            (soft, decisions, lam)
        }
    };
    let user = finish_user(
        soft,
        decisions,
        lam,
        h,
        f.delays(),
        dominant_tap,
        cfg.iterations,
        trajectory,
        &c,
        layout,
    );
    Ok(DecodeResult {
        users: vec![user],
        residuals,
        objectives,
        zero_gain_subcarriers: zero_gain,
    })
}

fn check_single(y: &ReceivedMatrix, cfg: &BlindConfig) -> Result<DftSubmatrix> {
    let n = y.y.nrows();
    cfg.validate(n)?;
    if cfg.users.len() != 1 {
        return Err(Error::invalid(format!(
            "single-user decode given {} users",
            cfg.users.len()
        )));
    }
    build_dft_submatrix(n, &cfg.delays)
}

/// Cold-start decode: top left singular vector, initial point, then the
/// alternating-minimization schedule.
pub fn blind_decode_single(y: &ReceivedMatrix, cfg: &BlindConfig) -> Result<DecodeResult> {
    let f = check_single(y, cfg)?;
    let basis = top_left_singular_vectors(&y.y, 1)?;
    let u1 = &basis.left_vectors[0];
    let ip = match cfg.init {
        InitMethod::Variance => initial_point_variance(u1, &f)?,
        InitMethod::Circularity => initial_point_circularity(u1, &f)?,
        InitMethod::GivenTap => {
            initial_point_given_tap(u1, &f, cfg.users[0].given_tap.expect("validated"))?
        }
        InitMethod::WarmStart => {
            return Err(Error::invalid(
                "warm-start initialization needs a previous channel; use warm_start_decode",
            ))
        }
    };
    iterate_single(y, ip.x0, &f, cfg, cfg.derotate_at, ip.tap)
}

/// Decode starting from a previous channel estimate: the first symbol
/// estimate is the combining output against `F_L·h_prev`, and the pilot
/// correction moves to iteration `min(derotate_at, 2)`.
pub fn warm_start_decode(
    y: &ReceivedMatrix,
    h_prev: &TimeChannel,
    cfg: &BlindConfig,
) -> Result<DecodeResult> {
    let f = check_single(y, cfg)?;
    if h_prev.n_r() != y.y.ncols() {
        return Err(Error::invalid(format!(
            "previous channel has {} antennas, received matrix {}",
            h_prev.n_r(),
            y.y.ncols()
        )));
    }
    let h = h_prev.on_grid(&cfg.delays)?;
    let b = freq_response(&f, &h);
    let (x0, _) = mrc_from_channel(&y.y, &b);
    let strongest = (0..h.nrows())
        .max_by(|&a, &b| {
            let ea: f64 = h.row(a).iter().map(|z| z.norm_sqr()).sum();
            let eb: f64 = h.row(b).iter().map(|z| z.norm_sqr()).sum();
            ea.total_cmp(&eb).then(b.cmp(&a))
        })
        .unwrap_or(0);
    iterate_single(y, x0, &f, cfg, cfg.derotate_at.min(2), cfg.delays[strongest])
}
