//! Conventional pilot-based receivers: least-squares estimates at pilot
//! subcarriers, interpolation across frequency, then MRC (one user) or
//! per-subcarrier MMSE (several users).

use rand::Rng;

use crate::blind_rx::mrc_from_channel;
use crate::channel::ReceivedMatrix;
use crate::error::{Error, Result};
use crate::numerics::{build_dft_submatrix, cholesky_solve, freq_response, CMatrix, C64};
use crate::waveform::{PilotSpec, QamConstellation};

/// Equi-spaced pilot combs, one per user, on disjoint subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotGrid {
    n: usize,
    positions: Vec<Vec<usize>>,
    values: Vec<Vec<C64>>,
}

/// Diagonal constellation point `(a + ja)·s` whose energy is closest to the
/// mean symbol energy (ties to the larger amplitude). Keeping pilots on the
/// data constellation lets a blind receiver treat them as ordinary symbols.
pub fn pilot_amplitude(c: &QamConstellation) -> f64 {
    let s = c.scale();
    (0..c.side() / 2)
        .map(|i| (2 * i + 1) as f64 * s)
        .min_by(|a, b| {
            let (ea, eb) = ((2.0 * a * a - 1.0).abs(), (2.0 * b * b - 1.0).abs());
            ea.total_cmp(&eb).then(b.total_cmp(a))
        })
        .expect("side >= 2")
}

fn check_uniform(positions: &[usize]) -> Result<()> {
    if let [a, b, ..] = positions {
        let step = b - a;
        if positions.windows(2).any(|w| w[1] - w[0] != step) {
            return Err(Error::invalid("pilot positions are not equi-spaced"));
        }
    }
    Ok(())
}

impl PilotGrid {
    pub fn new(n: usize, positions: Vec<Vec<usize>>, values: Vec<Vec<C64>>) -> Result<Self> {
        if positions.len() != values.len() || positions.is_empty() {
            return Err(Error::invalid("need one position and value list per user"));
        }
        let mut used = vec![false; n];
        for (p, v) in positions.iter().zip(&values) {
            if p.len() != v.len() {
                return Err(Error::invalid("pilot position and value counts differ"));
            }
            if p.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid("pilot positions must be strictly increasing"));
            }
            check_uniform(p)?;
            for &i in p {
                if i >= n {
                    return Err(Error::invalid(format!("pilot position {i} outside [0, {n})")));
                }
                if std::mem::replace(&mut used[i], true) {
                    return Err(Error::invalid(format!("pilot subcarrier {i} used by two users")));
                }
            }
        }
        Ok(PilotGrid { n, positions, values })
    }

    /// `total` pilots with spacing `⌊n/total⌋`, centred in the band and dealt
    /// round-robin to `n_users` users (user `u` gets every `n_users`-th
    /// pilot starting at the `u`-th). Values are diagonal constellation
    /// points with random signs.
    pub fn interleaved_comb<R: Rng + ?Sized>(
        n: usize,
        total: usize,
        n_users: usize,
        c: &QamConstellation,
        rng: &mut R,
    ) -> Result<Self> {
        if n_users == 0 || total < n_users || total > n {
            return Err(Error::invalid(format!(
                "cannot place {total} pilots for {n_users} users on {n} subcarriers"
            )));
        }
        if !total.is_multiple_of(n_users) {
            return Err(Error::invalid(format!(
                "{total} pilots do not split evenly over {n_users} users"
            )));
        }
        let spacing = n / total;
        let offset = (n - 1 - (total - 1) * spacing) / 2;
        let a = pilot_amplitude(c);
        let mut positions = vec![Vec::with_capacity(total / n_users); n_users];
        let mut values = vec![Vec::with_capacity(total / n_users); n_users];
        for k in 0..total {
            let u = k % n_users;
            positions[u].push(offset + k * spacing);
            let re = if rng.random::<bool>() { a } else { -a };
            let im = if rng.random::<bool>() { a } else { -a };
            values[u].push(C64::new(re, im));
        }
        Self::new(n, positions, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_users(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self, user: usize) -> &[usize] {
        &self.positions[user]
    }

    pub fn values(&self, user: usize) -> &[C64] {
        &self.values[user]
    }

    pub fn total(&self) -> usize {
        self.positions.iter().map(Vec::len).sum()
    }

    /// Fraction of the `n` subcarriers carrying any user's pilot.
    pub fn density(&self) -> f64 {
        self.total() as f64 / self.n as f64
    }

    pub fn all_positions(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.positions.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    pub fn pilot_spec(&self, user: usize) -> Result<PilotSpec> {
        PilotSpec::new(self.positions[user].clone(), self.values[user].clone())
    }
}

/// `ĥ(p) = y_p / x(p)` per antenna; row `k` belongs to the user's `k`-th
/// pilot.
pub fn ls_pilot_estimates(y: &ReceivedMatrix, grid: &PilotGrid, user: usize) -> Result<CMatrix> {
    if user >= grid.num_users() {
        return Err(Error::invalid(format!("user {user} not in pilot grid")));
    }
    if y.y.nrows() != grid.n() {
        return Err(Error::invalid(format!(
            "received matrix has {} rows, pilot grid {}",
            y.y.nrows(),
            grid.n()
        )));
    }
    let pos = grid.positions(user);
    let vals = grid.values(user);
    if let Some(k) = vals.iter().position(|v| v.norm_sqr() == 0.0) {
        return Err(Error::invalid(format!("pilot value at subcarrier {} is zero", pos[k])));
    }
    Ok(CMatrix::from_fn(pos.len(), y.y.ncols(), |k, r| y.y[(pos[k], r)] / vals[k]))
}

fn check_estimates(est: &CMatrix, positions: &[usize], n: usize) -> Result<()> {
    if est.nrows() != positions.len() {
        return Err(Error::invalid(format!(
            "{} estimate rows for {} pilot positions",
            est.nrows(),
            positions.len()
        )));
    }
    if positions.windows(2).any(|w| w[1] <= w[0]) || positions.iter().any(|&p| p >= n) {
        return Err(Error::invalid("pilot positions must be increasing and inside the band"));
    }
    Ok(())
}

/// Per-antenna linear interpolation between adjacent pilots, holding the
/// end values flat outside the first and last pilot.
pub fn interpolate_linear(est: &CMatrix, positions: &[usize], n: usize) -> Result<CMatrix> {
    check_estimates(est, positions, n)?;
    if positions.len() < 2 {
        return Err(Error::invalid("linear interpolation needs at least two pilots"));
    }
    let nr = est.ncols();
    let mut out = CMatrix::zeros(n, nr);
    let mut seg = 0;
    for i in 0..n {
        while seg + 2 < positions.len() && i > positions[seg + 1] {
            seg += 1;
        }
        let (p0, p1) = (positions[seg], positions[seg + 1]);
        let t = if i <= p0 {
            0.0
        } else if i >= p1 {
            1.0
        } else {
            (i - p0) as f64 / (p1 - p0) as f64
        };
        for r in 0..nr {
            out[(i, r)] = est[(seg, r)] * (1.0 - t) + est[(seg + 1, r)] * t;
        }
    }
    Ok(out)
}

/// Delay-domain interpolation: fit the pilot estimates with the first
/// `l_max` DFT delays by least squares and evaluate on all `n` subcarriers.
///
/// For a comb whose spacing divides `n` and covers the band this is the
/// usual inverse DFT over the pilots, truncation to `l_max` taps and forward
/// DFT; the fit form also covers combs that stop short of the band edge.
pub fn interpolate_fft(est: &CMatrix, positions: &[usize], n: usize, l_max: usize) -> Result<CMatrix> {
    check_estimates(est, positions, n)?;
    check_uniform(positions)?;
    if l_max == 0 || l_max > positions.len() {
        return Err(Error::invalid(format!(
            "l_max = {l_max} must be in 1..={} (the pilot count)",
            positions.len()
        )));
    }
    let delays: Vec<usize> = (0..l_max).collect();
    let f = build_dft_submatrix(n, &delays)?;
    let nr = est.ncols();
    // Basis rows at the pilots: phi[k][d] = ω^{p_k·d}.
    let phi: Vec<Vec<C64>> = positions
        .iter()
        .map(|&p| (0..l_max).map(|d| f.column(d)[p]).collect())
        .collect();
    let mut gram = vec![C64::new(0.0, 0.0); l_max * l_max];
    let mut rhs = vec![C64::new(0.0, 0.0); l_max * nr];
    for (k, row) in phi.iter().enumerate() {
        for d in 0..l_max {
            let c = row[d].conj();
            for e in 0..l_max {
                gram[d * l_max + e] += c * row[e];
            }
            for r in 0..nr {
                rhs[d * nr + r] += c * est[(k, r)];
            }
        }
    }
    if !cholesky_solve(&mut gram, l_max, &mut rhs, nr) {
        return Err(Error::SingularSystem(
            "pilot comb cannot resolve the requested delays".into(),
        ));
    }
    let h = CMatrix::from_fn(l_max, nr, |d, r| rhs[d * nr + r]);
    Ok(freq_response(&f, &h))
}

/// MRC with an estimated frequency response; subcarriers whose channel row
/// is zero get symbol 0 and are listed in the second return value.
pub fn mrc_combine(y: &ReceivedMatrix, h_f: &CMatrix) -> Result<(Vec<C64>, Vec<usize>)> {
    if y.y.shape() != h_f.shape() {
        return Err(Error::invalid(format!(
            "received matrix {:?} and channel {:?} differ in shape",
            y.y.shape(),
            h_f.shape()
        )));
    }
    Ok(mrc_from_channel(&y.y, h_f))
}

/// Unbiased per-subcarrier MMSE equalization of `N_u` users.
///
/// With `G_n` the `N_r×N_u` matrix whose column `u` is user `u`'s channel at
/// subcarrier `n`, and unit-energy symbols:
///
/// `W = (G^H G + σ²I)^{-1} G^H`, `x̂_u = [W y_n]_u / [W G]_{uu}`.
///
/// The division removes the MMSE shrinkage so QAM slicing applies directly;
/// for one user this is exactly MRC.
pub fn mmse_equalize_multi(y: &ReceivedMatrix, h_f: &[CMatrix], sigma2: f64) -> Result<Vec<Vec<C64>>> {
    let nu = h_f.len();
    let (n, nr) = y.y.shape();
    if nu == 0 {
        return Err(Error::invalid("at least one user is required"));
    }
    if h_f.iter().any(|h| h.shape() != (n, nr)) {
        return Err(Error::invalid("channel shapes must match the received matrix"));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::invalid(format!("noise variance must be >= 0, got {sigma2}")));
    }
    let mut out = vec![vec![C64::new(0.0, 0.0); n]; nu];
    let mut gram = vec![C64::new(0.0, 0.0); nu * nu];
    let mut rhs = vec![C64::new(0.0, 0.0); nu * (nu + 1)];
    for i in 0..n {
        // [G^H G + σ²I | G^H G | G^H y]
        for u in 0..nu {
            for v in 0..nu {
                let mut g = C64::new(0.0, 0.0);
                for r in 0..nr {
                    g += h_f[u][(i, r)].conj() * h_f[v][(i, r)];
                }
                gram[u * nu + v] = g;
                rhs[u * (nu + 1) + v] = g;
            }
            gram[u * nu + u] += sigma2;
            let mut b = C64::new(0.0, 0.0);
            for r in 0..nr {
                b += h_f[u][(i, r)].conj() * y.y[(i, r)];
            }
            rhs[u * (nu + 1) + nu] = b;
        }
        if !cholesky_solve(&mut gram, nu, &mut rhs, nu + 1) {
            // Zero channel for every user at this subcarrier.
            continue;
        }
        for u in 0..nu {
            let bias = rhs[u * (nu + 1) + u];
            if bias.norm() > 0.0 {
                out[u][i] = rhs[u * (nu + 1) + nu] / bias;
            }
        }
    }
    Ok(out)
}

/// Interpolation applied to the pilot LS estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    Fft { l_max: usize },
}

/// Full-band channel estimate of one user.
pub fn estimate_channel(
    y: &ReceivedMatrix,
    grid: &PilotGrid,
    user: usize,
    interp: Interpolation,
) -> Result<CMatrix> {
    let est = ls_pilot_estimates(y, grid, user)?;
    match interp {
        Interpolation::Linear => interpolate_linear(&est, grid.positions(user), grid.n()),
        Interpolation::Fft { l_max } => interpolate_fft(&est, grid.positions(user), grid.n(), l_max),
    }
}

/// Single-user baseline: estimate, interpolate, MRC, slice to `c`.
pub fn baseline_decode_single(
    y: &ReceivedMatrix,
    grid: &PilotGrid,
    interp: Interpolation,
    c: &QamConstellation,
) -> Result<Vec<C64>> {
    let h = estimate_channel(y, grid, 0, interp)?;
    let (x, _) = mrc_combine(y, &h)?;
    Ok(x.into_iter().map(|z| c.nearest(z)).collect())
}

/// Multi-user baseline: per-user estimate and interpolation, MMSE with the
/// received matrix's noise variance, slice to `c`.
pub fn baseline_decode_multi(
    y: &ReceivedMatrix,
    grid: &PilotGrid,
    interp: Interpolation,
    c: &QamConstellation,
) -> Result<Vec<Vec<C64>>> {
    let h: Vec<CMatrix> = (0..grid.num_users())
        .map(|u| estimate_channel(y, grid, u, interp))
        .collect::<Result<_>>()?;
    let x = mmse_equalize_multi(y, &h, y.noise_variance)?;
    Ok(x.into_iter()
        .map(|xu| xu.into_iter().map(|z| c.nearest(z)).collect())
        .collect())
}
