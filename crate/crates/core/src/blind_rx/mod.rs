//! Blind receiver: SVD-based initial points, alternating minimization of
//! `‖Y_f − X̂·F_L·Ĥ‖`, and resolution of the complex scale `λ` from one
//! rotational pilot per user.
//!
//! Scale convention: `λ̂` satisfies `x̂ ≈ λ̂·x_true`; correcting divides the
//! symbol estimate by `λ̂` (and multiplies the channel estimate by it).

mod am;
mod decode;
mod derotate;
mod initial;
mod multiuser;

pub use am::{
    am_step_multi, am_step_single, mrc_from_channel, regularized_ls_channel_multi, AmStep,
    MultiAmStep,
};
pub use decode::{blind_decode_single, warm_start_decode};
pub use derotate::{derotate_cluster, estimate_lambda, kmeans_lloyd, line_fit_angle, KMeans};
pub use initial::{
    circularity, convex_hull, initial_point_circularity, initial_point_given_tap,
    initial_point_variance, tap_candidates, variance_score, InitialPoint, HISTOGRAM_BINS,
};
pub use multiuser::{
    blind_decode_multi, estimate_coefficient_matrix, multiuser_initial_points, CoefficientMatrix,
    DEFAULT_CONDITION_LIMIT,
};

use crate::channel::TimeChannel;
use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::waveform::PilotSpec;

/// How the dominant tap and initial point are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    /// Angle-histogram variance, best for a single user.
    Variance,
    /// Least circular convex hull, more robust under interference.
    Circularity,
    /// Dominant tap supplied per user in [`UserLayout::given_tap`].
    GivenTap,
    /// Start from a previous channel estimate ([`warm_start_decode`]).
    WarmStart,
}

/// How the residual scale/rotation is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derotation {
    /// Divide by `λ̂` at iteration `derotate_at`, then feed nearest
    /// constellation points back into every later iteration.
    InLoop,
    /// Plain alternating minimization, `λ̂` applied once at the end.
    PilotOnly,
    /// Plain alternating minimization followed by k-means clustering with a
    /// line-fit rotation correction (single user only).
    Cluster,
}

/// What to do when the multi-user mixing matrix is ill-conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingFallback {
    Error,
    /// Invert with a pseudo-inverse regardless of conditioning.
    PseudoInverse,
    /// Use the given taps with a pseudo-inverse unmixing.
    GivenTap,
}

/// Per-user frame layout known to the receiver.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserLayout {
    pub pilots: PilotSpec,
    /// Subcarriers this user leaves empty.
    pub silent: Vec<usize>,
    pub given_tap: Option<usize>,
}

impl UserLayout {
    pub fn with_pilots(pilots: PilotSpec) -> Self {
        UserLayout {
            pilots,
            ..Default::default()
        }
    }

    /// Subcarriers carrying neither a pilot nor silence.
    pub fn data_positions(&self, n: usize) -> Vec<usize> {
        let mut mask = vec![true; n];
        for &p in self.pilots.positions() {
            mask[p] = false;
        }
        for &s in &self.silent {
            mask[s] = false;
        }
        (0..n).filter(|&i| mask[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlindConfig {
    /// Number of alternating-minimization iterations `T`.
    pub iterations: usize,
    pub mu: f64,
    /// Iteration `k*` (1-based) at which `λ̂` is applied. May exceed
    /// `iterations`, in which case `λ̂` is applied after the last iteration.
    pub derotate_at: usize,
    pub qam_order: usize,
    pub delays: Vec<usize>,
    pub init: InitMethod,
    pub derotation: Derotation,
    pub users: Vec<UserLayout>,
    pub mixing_fallback: MixingFallback,
    pub condition_limit: f64,
    /// Keep the hard decisions a run stopped after each iteration would
    /// have produced.
    pub record_trajectory: bool,
}

impl BlindConfig {
    /// Single user, in-loop de-rotation, variance initial point.
    pub fn single_user(qam_order: usize, delays: Vec<usize>, pilots: PilotSpec) -> Self {
        BlindConfig {
            iterations: 10,
            mu: 0.1,
            derotate_at: 4,
            qam_order,
            delays,
            init: InitMethod::Variance,
            derotation: Derotation::InLoop,
            users: vec![UserLayout::with_pilots(pilots)],
            mixing_fallback: MixingFallback::Error,
            condition_limit: DEFAULT_CONDITION_LIMIT,
            record_trajectory: false,
        }
    }

    /// Several users, in-loop de-rotation, circularity initial points.
    pub fn multi_user(qam_order: usize, delays: Vec<usize>, users: Vec<UserLayout>) -> Self {
        BlindConfig {
            iterations: 20,
            init: InitMethod::Circularity,
            users,
            ..Self::single_user(qam_order, delays, PilotSpec::default())
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iteration count must be at least 1"));
        }
        if self.derotate_at == 0 {
            return Err(Error::invalid("de-rotation iteration must be at least 1"));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::invalid(format!("regularization {} outside (0, 1)", self.mu)));
        }
        if self.users.is_empty() {
            return Err(Error::invalid("at least one user is required"));
        }
        if self.delays.is_empty() {
            return Err(Error::invalid("delay grid is empty"));
        }
        let mut owner = vec![usize::MAX; n];
        for (u, layout) in self.users.iter().enumerate() {
            if layout.pilots.is_empty() {
                return Err(Error::invalid(format!("user {u} has no rotational pilot")));
            }
            for &p in layout.pilots.positions() {
                if p >= n {
                    return Err(Error::invalid(format!("user {u} pilot {p} outside [0, {n})")));
                }
                if owner[p] != usize::MAX {
                    return Err(Error::invalid(format!(
                        "pilot subcarrier {p} is shared by users {} and {u}",
                        owner[p]
                    )));
                }
                owner[p] = u;
            }
            if let Some(&s) = layout.silent.iter().find(|&&s| s >= n) {
                return Err(Error::invalid(format!("user {u} silent subcarrier {s} outside [0, {n})")));
            }
            if self.init == InitMethod::GivenTap {
                match layout.given_tap {
                    Some(t) if self.delays.contains(&t) => {}
                    Some(t) => {
                        return Err(Error::invalid(format!(
                            "user {u} given tap {t} is not on the delay grid"
                        )))
                    }
                    None => {
                        return Err(Error::invalid(format!("user {u} has no given dominant tap")))
                    }
                }
            }
        }
        // Other users' pilots must be silent for everyone else.
        for (u, layout) in self.users.iter().enumerate() {
            for (v, other) in self.users.iter().enumerate() {
                if u == v {
                    continue;
                }
                for &p in other.pilots.positions() {
                    if !layout.silent.contains(&p) {
                        return Err(Error::invalid(format!(
                            "user {u} must be silent on user {v}'s pilot subcarrier {p}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Decode output for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDecode {
    /// De-rotated symbol estimates with pilots pinned and silent subcarriers zero.
    pub symbols: Vec<C64>,
    /// Hard decisions on the data subcarriers, ascending subcarrier order.
    pub hard_bits: Vec<u8>,
    /// Hard constellation decision for every subcarrier.
    pub decisions: Vec<C64>,
    pub lambda_hat: C64,
    /// Channel estimate rescaled to the de-rotated symbols.
    pub h_hat: TimeChannel,
    pub dominant_tap: usize,
    pub iterations_used: usize,
    /// `trajectory[k−1]` holds the decisions a run of `k` iterations returns.
    pub trajectory: Vec<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub users: Vec<UserDecode>,
    /// `‖Y_f − Σ X̂·F_L·Ĥ‖_F` after the combining step of each iteration.
    pub residuals: Vec<f64>,
    /// Residual squared plus `μ‖Ĥ‖_F²`, same points as `residuals`.
    pub objectives: Vec<f64>,
    /// Subcarriers whose combining gain was zero, summed over iterations.
    pub zero_gain_subcarriers: usize,
}
