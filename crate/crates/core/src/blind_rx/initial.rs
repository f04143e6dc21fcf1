//! Dominant-tap detection and initial symbol estimates.
//!
//! For a dominant tap `k`, the top left singular vector is close to a scaled
//! `X_f·f_k`, so `u_1 ⊙ f_k*` looks like the transmitted QAM constellation
//! while the other candidates are smeared into rings. Two scores tell them
//! apart: the variance of an angle histogram (QAM points cluster in a few
//! directions) and the circularity of the convex hull (a square is less
//! circular than a ring).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{norm2, DftSubmatrix, C64};

pub const HISTOGRAM_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    /// Scaled to unit mean energy.
    pub x0: Vec<C64>,
    /// Selected delay (not the column index).
    pub tap: usize,
    /// Score per candidate, in delay-grid order.
    pub scores: Vec<f64>,
}

fn check_input(z: &[C64], f: &DftSubmatrix) -> Result<()> {
    if z.len() != f.n() {
        return Err(Error::invalid(format!(
            "vector length {} does not match FFT size {}",
            z.len(),
            f.n()
        )));
    }
    if norm2(z) == 0.0 {
        return Err(Error::invalid("initial-point input vector is zero"));
    }
    Ok(())
}

/// `z ⊙ f_i*` for column `i`.
fn candidate(z: &[C64], f: &DftSubmatrix, i: usize) -> Vec<C64> {
    z.iter().zip(f.column(i)).map(|(a, b)| a * b.conj()).collect()
}

/// All candidates `z ⊙ f_i*`, in delay-grid order.
pub fn tap_candidates(z: &[C64], f: &DftSubmatrix) -> Vec<Vec<C64>> {
    (0..f.num_taps()).map(|i| candidate(z, f, i)).collect()
}

fn unit_energy(mut x: Vec<C64>) -> Vec<C64> {
    let e = norm2(&x);
    if e > 0.0 {
        let s = (x.len() as f64).sqrt() / e;
        x.iter_mut().for_each(|v| *v *= s);
    }
    x
}

/// Variance of the counts of a 64-bin angle histogram over one turn.
///
/// Angles are first rotated so that the circular mean of `4·angle` is zero,
/// which removes the dependence on the arbitrary global phase for any
/// constellation with quarter-turn symmetry.
pub fn variance_score(points: &[C64]) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    let angles: Vec<f64> = points.iter().map(|p| p.arg()).collect();
    for &a in &angles {
        s += C64::from_polar(1.0, 4.0 * a);
    }
    let shift = if s.norm() > 0.0 { s.arg() / 4.0 } else { 0.0 };
    // Bins are centered on multiples of 2π/64 so that the aligned symmetry
    // axes fall mid-bin rather than on an edge.
    let mut counts = [0usize; HISTOGRAM_BINS];
    for a in angles {
        let t = (a - shift + PI) / (2.0 * PI) * HISTOGRAM_BINS as f64;
        let bin = (t.round() as i64).rem_euclid(HISTOGRAM_BINS as i64) as usize;
        counts[bin] += 1;
    }
    let mean = points.len() as f64 / HISTOGRAM_BINS as f64;
    counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / HISTOGRAM_BINS as f64
}

/// Index of the first maximum (ties toward the smallest delay).
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

/// Picks the tap whose candidate has the most peaked angle histogram.
pub fn initial_point_variance(u1: &[C64], f: &DftSubmatrix) -> Result<InitialPoint> {
    check_input(u1, f)?;
    let cands = tap_candidates(u1, f);
    let scores: Vec<f64> = cands.iter().map(|c| variance_score(c)).collect();
    let best = argmax(&scores);
    Ok(InitialPoint {
        x0: unit_energy(cands.into_iter().nth(best).expect("nonempty grid")),
        tap: f.delays()[best],
        scores,
    })
}

/// Convex hull by Andrew's monotone chain, counter-clockwise, without
/// collinear points.
pub fn convex_hull(points: &[C64]) -> Vec<C64> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.re, p.im)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts.into_iter().map(|(x, y)| C64::new(x, y)).collect();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull.into_iter().map(|(x, y)| C64::new(x, y)).collect()
}

/// `4π·area/perimeter²` of the convex hull; 0 for a degenerate hull.
pub fn circularity(points: &[C64]) -> f64 {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return 0.0;
    }
    let mut area = 0.0;
    let mut perimeter = 0.0;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        area += a.re * b.im - b.re * a.im;
        perimeter += (b - a).norm();
    }
    area = 0.5 * area.abs();
    if area == 0.0 || perimeter == 0.0 {
        return 0.0;
    }
    4.0 * PI * area / (perimeter * perimeter)
}

/// Picks the tap whose candidate has the least circular hull.
pub fn initial_point_circularity(z: &[C64], f: &DftSubmatrix) -> Result<InitialPoint> {
    check_input(z, f)?;
    let cands = tap_candidates(z, f);
    let scores: Vec<f64> = cands.iter().map(|c| circularity(c)).collect();
    let best = argmin(&scores);
    Ok(InitialPoint {
        x0: unit_energy(cands.into_iter().nth(best).expect("nonempty grid")),
        tap: f.delays()[best],
        scores,
    })
}

/// Initial point for a known dominant tap.
pub fn initial_point_given_tap(z: &[C64], f: &DftSubmatrix, tap: usize) -> Result<InitialPoint> {
    check_input(z, f)?;
    let i = f
        .index_of_delay(tap)
        .ok_or_else(|| Error::invalid(format!("given tap {tap} is not on the delay grid")))?;
    Ok(InitialPoint {
        x0: unit_energy(candidate(z, f, i)),
        tap,
        scores: Vec::new(),
    })
}
