//! Multi-user decode. The top `N_u` left singular vectors are mixtures of the
//! users' dominant-tap directions `X_f(u)·f_k`; one pilot per user on an
//! exclusive subcarrier gives the mixing coefficients, and unmixing yields a
//! per-user vector from which the usual initial point is built.

use nalgebra::DMatrix;

use super::am::am_step_multi;
use super::decode::{finish_user, map_to_constellation, snapshot};
use super::derotate::estimate_lambda;
use super::initial::{
    initial_point_circularity, initial_point_given_tap, initial_point_variance, InitialPoint,
};
use super::{BlindConfig, DecodeResult, Derotation, InitMethod, MixingFallback};
use crate::channel::ReceivedMatrix;
use crate::error::{Error, Result};
use crate::numerics::{build_dft_submatrix, top_left_singular_vectors, CMatrix, DftSubmatrix, SvdBasis, C64};
use crate::waveform::{PilotSpec, QamConstellation};

pub const DEFAULT_CONDITION_LIMIT: f64 = 1e6;

/// `A[j][u] = u_j(p_u) / x_{p_u}(u)`
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub a: CMatrix,
    pub condition: f64,
}

fn condition_number(a: &CMatrix) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Builds `A` from the first pilot of each user. Fails with
/// [`Error::IllConditionedMixing`] when `cond(A)` exceeds `condition_limit`.
pub fn estimate_coefficient_matrix(
    svd: &SvdBasis,
    pilots: &[PilotSpec],
    condition_limit: f64,
) -> Result<CoefficientMatrix> {
    let nu = pilots.len();
    if svd.rank() < nu {
        return Err(Error::invalid(format!(
            "{} singular vectors for {nu} users",
            svd.rank()
        )));
    }
    let mut a = CMatrix::zeros(nu, nu);
    for (u, p) in pilots.iter().enumerate() {
        let (pos, val) = p
            .iter()
            .next()
            .ok_or_else(|| Error::invalid(format!("user {u} has no pilot")))?;
        if val.norm_sqr() == 0.0 {
            return Err(Error::invalid(format!("user {u} pilot value is zero")));
        }
        for j in 0..nu {
            a[(j, u)] = svd.left_vectors[j][pos] / val;
        }
    }
    let condition = condition_number(&a);
    if !(condition <= condition_limit) {
        return Err(Error::IllConditionedMixing {
            condition,
            limit: condition_limit,
        });
    }
    Ok(CoefficientMatrix { a, condition })
}

/// Rows of `Z = A^{-1}·[u_1 … u_{N_u}]^T`.
fn unmix(svd: &SvdBasis, a: &CoefficientMatrix, pseudo_inverse: bool) -> Result<Vec<Vec<C64>>> {
    let nu = a.a.nrows();
    let n = svd.left_vectors[0].len();
    let u = DMatrix::from_fn(nu, n, |j, i| svd.left_vectors[j][i]);
    let z = if pseudo_inverse {
        a.a.clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::SingularSystem(e.to_string()))?
            * u
    } else {
        a.a.clone()
            .lu()
            .solve(&u)
            .ok_or_else(|| Error::SingularSystem("mixing matrix is singular".into()))?
    };
    Ok((0..nu).map(|r| z.row(r).iter().copied().collect()).collect())
}

/// Per-user initial points from the unmixed singular vectors.
///
/// `given_taps[u]` is used when `init` is [`InitMethod::GivenTap`].
pub fn multiuser_initial_points(
    svd: &SvdBasis,
    a: &CoefficientMatrix,
    f: &DftSubmatrix,
    init: InitMethod,
    given_taps: &[Option<usize>],
) -> Result<Vec<InitialPoint>> {
    unmixed_initial_points(svd, a, f, init, given_taps, false)
}

fn unmixed_initial_points(
    svd: &SvdBasis,
    a: &CoefficientMatrix,
    f: &DftSubmatrix,
    init: InitMethod,
    given_taps: &[Option<usize>],
    pseudo_inverse: bool,
) -> Result<Vec<InitialPoint>> {
    let z = unmix(svd, a, pseudo_inverse)?;
    z.iter()
        .enumerate()
        .map(|(u, zu)| match init {
            InitMethod::Circularity => initial_point_circularity(zu, f),
            InitMethod::Variance => initial_point_variance(zu, f),
            InitMethod::GivenTap => {
                let tap = given_taps
                    .get(u)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::invalid(format!("user {u} has no given dominant tap")))?;
                initial_point_given_tap(zu, f, tap)
            }
            InitMethod::WarmStart => Err(Error::invalid(
                "warm-start initialization is single-user only",
            )),
        })
        .collect()
}

fn initial_points(
    y: &ReceivedMatrix,
    f: &DftSubmatrix,
    cfg: &BlindConfig,
) -> Result<Vec<InitialPoint>> {
    let nu = cfg.users.len();
    let svd = top_left_singular_vectors(&y.y, nu)?;
    let pilots: Vec<PilotSpec> = cfg.users.iter().map(|u| u.pilots.clone()).collect();
    let given: Vec<Option<usize>> = cfg.users.iter().map(|u| u.given_tap).collect();
    match estimate_coefficient_matrix(&svd, &pilots, cfg.condition_limit) {
        Ok(a) => multiuser_initial_points(&svd, &a, f, cfg.init, &given),
        Err(Error::IllConditionedMixing { condition, limit }) => {
            let a = estimate_coefficient_matrix(&svd, &pilots, f64::INFINITY)?;
            match cfg.mixing_fallback {
                MixingFallback::Error => Err(Error::IllConditionedMixing { condition, limit }),
                MixingFallback::PseudoInverse => {
                    unmixed_initial_points(&svd, &a, f, cfg.init, &given, true)
                }
                MixingFallback::GivenTap => {
                    unmixed_initial_points(&svd, &a, f, InitMethod::GivenTap, &given, true)
                }
            }
        }
        Err(e) => Err(e),
    }
}

/// Joint decode of all users sharing the subcarriers.
pub fn blind_decode_multi(y: &ReceivedMatrix, cfg: &BlindConfig) -> Result<DecodeResult> {
    let n = y.y.nrows();
    cfg.validate(n)?;
    if cfg.derotation == Derotation::Cluster {
        return Err(Error::invalid("clustering de-rotation is single-user only"));
    }
    let f = build_dft_submatrix(n, &cfg.delays)?;
    let c = QamConstellation::new(cfg.qam_order)?;
    let ips = initial_points(y, &f, cfg)?;
    let nu = cfg.users.len();
    let taps: Vec<usize> = ips.iter().map(|ip| ip.tap).collect();
    let mut x: Vec<Vec<C64>> = ips.into_iter().map(|ip| ip.x0).collect();
    let mut h = vec![CMatrix::zeros(f.num_taps(), y.y.ncols()); nu];
    let mut lambda = vec![C64::new(1.0, 0.0); nu];
    let mut derotated = false;
    let in_loop = cfg.derotation == Derotation::InLoop;
    let mut residuals = Vec::with_capacity(cfg.iterations);
    let mut objectives = Vec::with_capacity(cfg.iterations);
    let mut zero_gain = 0;
    let mut trajectory = vec![Vec::new(); nu];
    for k in 1..=cfg.iterations {
        let step = am_step_multi(&y.y, &x, &f, cfg.mu)?;
        residuals.push(step.residual);
        objectives.push(step.objective(cfg.mu));
        zero_gain += step.zero_gain.len();
        h = step.h_hat;
        x = step.x_next;
        if in_loop && k >= cfg.derotate_at {
            for (u, layout) in cfg.users.iter().enumerate() {
                if k == cfg.derotate_at {
                    lambda[u] = estimate_lambda(&x[u], &layout.pilots)?;
                    if lambda[u].norm() == 0.0 {
                        return Err(Error::SingularSystem(format!("user {u} pilot estimate is zero")));
                    }
                    let l = lambda[u];
                    x[u].iter_mut().for_each(|v| *v /= l);
                }
                map_to_constellation(&mut x[u], &c, layout);
            }
            derotated = true;
        }
        if cfg.record_trajectory {
            for (u, layout) in cfg.users.iter().enumerate() {
                trajectory[u].push(snapshot(&x[u], derotated, &c, layout)?.0);
            }
        }
    }
    let mut users = Vec::with_capacity(nu);
    for (u, ((layout, xu), mut hu)) in cfg.users.iter().zip(x).zip(h).enumerate() {
        let (decisions, extra) = snapshot(&xu, derotated, &c, layout)?;
        let mut soft = xu;
        let mut lam = lambda[u];
        if !derotated {
            soft.iter_mut().for_each(|v| *v /= extra);
            super::decode::pin(&mut soft, layout);
            lam = extra;
            hu *= extra;
        } else if cfg.derotate_at == cfg.iterations {
            hu *= lam;
        }
        users.push(finish_user(
            soft,
            decisions,
            lam,
            hu,
            f.delays(),
            taps[u],
            cfg.iterations,
            std::mem::take(&mut trajectory[u]),
            &c,
            layout,
        ));
    }
    Ok(DecodeResult {
        users,
        residuals,
        objectives,
        zero_gain_subcarriers: zero_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blind_rx::UserLayout;
    use crate::channel::{apply_channel, exponential_corr, sample_time_channel, PowerDelayProfile, TimeChannel};
    use crate::waveform::FreqSymbolGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layouts(n: usize, nu: usize, c: &QamConstellation) -> Vec<UserLayout> {
        let positions: Vec<usize> = (0..nu).map(|u| (n / 2 + u * n / nu) % n).collect();
        (0..nu)
            .map(|u| UserLayout {
                pilots: PilotSpec::new(vec![positions[u]], vec![c.corner()]).unwrap(),
                silent: positions.iter().copied().filter(|&p| p != positions[u]).collect(),
                given_tap: None,
            })
            .collect()
    }

    struct Trial {
        grids: Vec<FreqSymbolGrid>,
        chans: Vec<TimeChannel>,
        y: ReceivedMatrix,
        cfg: BlindConfig,
    }

    fn trial(n: usize, nr: usize, nu: usize, m: usize, snr: f64, pdps: &[PowerDelayProfile], seed: u64) -> Trial {
        let c = QamConstellation::new(m).unwrap();
        let users = layouts(n, nu, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grids: Vec<FreqSymbolGrid> = users
            .iter()
            .map(|l| FreqSymbolGrid::build(&mut rng, n, &c, &l.pilots, &l.silent).unwrap())
            .collect();
        let corr = exponential_corr(nr, 0.0).unwrap();
        let chans: Vec<TimeChannel> = (0..nu)
            .map(|u| sample_time_channel(&pdps[u % pdps.len()], &corr, &mut rng))
            .collect();
        let delays = crate::channel::delay_union(pdps);
        let f = build_dft_submatrix(n, &delays).unwrap();
        let xs: Vec<&[C64]> = grids.iter().map(|g| g.symbols.as_slice()).collect();
        let cs: Vec<&TimeChannel> = chans.iter().collect();
        let y = apply_channel(&xs, &cs, &f, snr, &mut rng).unwrap();
        let cfg = BlindConfig::multi_user(m, delays, users);
        Trial { grids, chans, y, cfg }
    }

    #[test]
    fn coefficient_matrix_from_exact_mixture() {
        let n = 64;
        let c = QamConstellation::new(16).unwrap();
        let users = layouts(n, 3, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grids: Vec<FreqSymbolGrid> = users
            .iter()
            .map(|l| FreqSymbolGrid::build(&mut rng, n, &c, &l.pilots, &l.silent).unwrap())
            .collect();
        let a = CMatrix::from_fn(3, 3, |i, j| {
            C64::new((((i + 1) * (j + 2)) as f64).sin(), ((i * i + j) as f64).cos())
        });
        let s = DMatrix::from_fn(3, n, |u, i| grids[u].symbols[i]);
        let u = &a * s;
        let svd = SvdBasis {
            left_vectors: (0..3).map(|j| u.row(j).iter().copied().collect()).collect(),
            singular_values: vec![1.0; 3],
        };
        let pilots: Vec<PilotSpec> = users.iter().map(|l| l.pilots.clone()).collect();
        let est = estimate_coefficient_matrix(&svd, &pilots, DEFAULT_CONDITION_LIMIT).unwrap();
        assert!((&est.a - &a).norm() < 1e-10 * a.norm());
        let f = build_dft_submatrix(n, &[0]).unwrap();
        let ips = multiuser_initial_points(&svd, &est, &f, InitMethod::GivenTap, &[Some(0); 3]).unwrap();
        for ((ip, g), l) in ips.iter().zip(&grids).zip(&users) {
            let p = l.pilots.positions()[0];
            let r = ip.x0[p] / g.symbols[p];
            for (x, s) in ip.x0.iter().zip(&g.symbols) {
                assert!((x - r * s).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn single_user_coefficient_is_scalar() {
        let svd = SvdBasis {
            left_vectors: vec![vec![C64::new(0.5, 0.5), C64::new(0.2, 0.0)]],
            singular_values: vec![1.0],
        };
        let p = PilotSpec::new(vec![1], vec![C64::new(0.0, 2.0)]).unwrap();
        let a = estimate_coefficient_matrix(&svd, &[p], DEFAULT_CONDITION_LIMIT).unwrap();
        assert!((a.a[(0, 0)] - C64::new(0.0, -0.1)).norm() < 1e-15);
    }

    #[test]
    fn ill_conditioned_mixing_is_reported() {
        let svd = SvdBasis {
            left_vectors: vec![vec![C64::new(1.0, 0.0); 4], vec![C64::new(1.0, 0.0); 4]],
            singular_values: vec![1.0, 1.0],
        };
        let v = C64::new(1.0, 0.0);
        let pilots = vec![PilotSpec::new(vec![0], vec![v]).unwrap(), PilotSpec::new(vec![1], vec![v]).unwrap()];
        assert!(matches!(
            estimate_coefficient_matrix(&svd, &pilots, DEFAULT_CONDITION_LIMIT),
            Err(Error::IllConditionedMixing { .. })
        ));
    }

    #[test]
    fn noiseless_multi_user_decode() {
        let pdp = [PowerDelayProfile::ped4()];
        // 256-QAM is exercised by the acceptance suite; with four users its
        // pilot scale error can exceed the decision margin.
        for nu in [2, 4] {
            for m in [4, 16, 64] {
                let t = trial(1024, 64, nu, m, f64::INFINITY, &pdp, 10 * nu as u64 + m as u64);
                let out = blind_decode_multi(&t.y, &t.cfg).unwrap();
                for u in 0..nu {
                    assert_eq!(out.users[u].hard_bits, t.grids[u].bits, "nu {nu} M {m} user {u}");
                }
            }
        }
    }

    #[test]
    fn one_user_matches_single_user_path() {
        let pdp = [PowerDelayProfile::ped4()];
        let t = trial(256, 16, 1, 16, 8.0, &pdp, 3);
        let mut cfg = t.cfg.clone();
        cfg.init = InitMethod::Variance;
        cfg.mu = 1e-9;
        let multi = blind_decode_multi(&t.y, &cfg).unwrap();
        let single = crate::blind_rx::blind_decode_single(&t.y, &cfg).unwrap();
        assert_eq!(multi.users[0].hard_bits, single.users[0].hard_bits);
        assert_eq!(multi.users[0].dominant_tap, single.users[0].dominant_tap);
        let d = (&multi.users[0].h_hat.h - &single.users[0].h_hat.h).norm() / single.users[0].h_hat.h.norm();
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn user_permutation_is_equivariant() {
        let pdps: Vec<PowerDelayProfile> =
            (0..3).map(|d| PowerDelayProfile::ped4_dominant_at(d).unwrap()).collect();
        let t = trial(512, 32, 3, 16, 10.0, &pdps, 4);
        let svd = top_left_singular_vectors(&t.y.y, 3).unwrap();
        let f = build_dft_submatrix(512, &t.cfg.delays).unwrap();
        let pilots: Vec<PilotSpec> = t.cfg.users.iter().map(|u| u.pilots.clone()).collect();
        let a = estimate_coefficient_matrix(&svd, &pilots, 1e12).unwrap();
        let base = multiuser_initial_points(&svd, &a, &f, InitMethod::Circularity, &[]).unwrap();
        let perm = [2, 0, 1];
        let pp: Vec<PilotSpec> = perm.iter().map(|&u| pilots[u].clone()).collect();
        let ap = estimate_coefficient_matrix(&svd, &pp, 1e12).unwrap();
        let permuted = multiuser_initial_points(&svd, &ap, &f, InitMethod::Circularity, &[]).unwrap();
        for (i, &u) in perm.iter().enumerate() {
            assert_eq!(permuted[i].tap, base[u].tap);
            let d: f64 = permuted[i].x0.iter().zip(&base[u].x0).map(|(a, b)| (a - b).norm()).sum();
            assert!(d < 1e-8, "{d}");
        }
        let _ = &t.chans;
    }

    #[test]
    fn cluster_mode_rejected_for_multi_user() {
        let pdp = [PowerDelayProfile::ped4()];
        let t = trial(128, 16, 2, 4, 10.0, &pdp, 5);
        let mut cfg = t.cfg.clone();
        cfg.derotation = Derotation::Cluster;
        assert!(blind_decode_multi(&t.y, &cfg).is_err());
    }
}
