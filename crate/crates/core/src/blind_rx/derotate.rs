//! Complex scale estimation from rotational pilots and the clustering-based
//! residual de-rotation.

use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::waveform::{PilotSpec, QamConstellation};

/// `λ̂ = (1/η)·Σ x̂(p_i)/P_i`, so that `x̂ ≈ λ̂·x_true`.
pub fn estimate_lambda(x_hat: &[C64], pilots: &PilotSpec) -> Result<C64> {
    if pilots.is_empty() {
        return Err(Error::invalid("scale estimation needs at least one pilot"));
    }
    let mut acc = C64::new(0.0, 0.0);
    for (p, v) in pilots.iter() {
        if v.norm_sqr() == 0.0 {
            return Err(Error::invalid(format!("pilot at subcarrier {p} has zero value")));
        }
        let x = x_hat.get(p).ok_or_else(|| {
            Error::invalid(format!("pilot subcarrier {p} outside symbol vector of {}", x_hat.len()))
        })?;
        acc += x / v;
    }
    Ok(acc / pilots.count() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<C64>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn nearest_index(z: C64, centroids: &[C64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = (z - c).norm_sqr();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Lloyd's algorithm from the given centroids. An empty cluster is reseeded
/// at the sample farthest from its current centroid.
pub fn kmeans_lloyd(samples: &[C64], init: &[C64], max_iterations: usize) -> KMeans {
    let k = init.len();
    let mut centroids = init.to_vec();
    let mut assignment: Vec<usize> = samples.iter().map(|&z| nearest_index(z, &centroids)).collect();
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut sum = vec![C64::new(0.0, 0.0); k];
        let mut count = vec![0usize; k];
        for (z, &a) in samples.iter().zip(&assignment) {
            sum[a] += z;
            count[a] += 1;
        }
        let mut reseeded = vec![false; samples.len()];
        for j in 0..k {
            if count[j] > 0 {
                centroids[j] = sum[j] / count[j] as f64;
            } else {
                let far = samples
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !reseeded[*i])
                    .map(|(i, z)| (i, (z - centroids[assignment[i]]).norm_sqr()))
                    .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                        Some((_, bd)) if bd >= d => best,
                        _ => Some((i, d)),
                    });
                if let Some((i, _)) = far {
                    reseeded[i] = true;
                    centroids[j] = samples[i];
                }
            }
        }
        let next: Vec<usize> = samples.iter().map(|&z| nearest_index(z, &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    KMeans {
        centroids,
        assignment,
        iterations,
    }
}

/// Angle of the ordinary least-squares line `im = a + b·re` through the
/// points; 0 when fewer than two distinct abscissae are available.
pub fn line_fit_angle(points: &[C64]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.re).sum::<f64>() / n;
    let my = points.iter().map(|p| p.im).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.re - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.re - mx) * (p.im - my)).sum();
    if sxx <= 1e-300 {
        return 0.0;
    }
    (sxy / sxx).atan()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDecision {
    /// Hard constellation decision per subcarrier, pilots pinned.
    pub decisions: Vec<C64>,
    /// Unit-modulus rotation taken from the pilot.
    pub pilot_rotation: C64,
    /// Extra rotation removed by the line fit, radians.
    pub residual_angle: f64,
    /// Energy normalization applied before clustering.
    pub energy_scale: f64,
}

/// Clustering-based hard decisions for a de-rotated-by-nothing estimate.
///
/// 1. normalize to unit mean energy;
/// 2. k-means with `M` clusters started at the constellation rotated by the
///    pilot phase;
/// 3. undo the pilot rotation on the centroids;
/// 4. fit a line through the centroids whose nearest reference point lies in
///    the top row and rotate all centroids by minus its angle;
/// 5. map centroids to constellation points, samples inherit their cluster's point.
pub fn derotate_cluster(x_hat: &[C64], pilots: &PilotSpec, m: usize) -> Result<ClusterDecision> {
    let c = QamConstellation::new(m)?;
    if x_hat.len() < m {
        return Err(Error::invalid(format!(
            "{} samples are too few for {m} clusters",
            x_hat.len()
        )));
    }
    let energy = x_hat.iter().map(|z| z.norm_sqr()).sum::<f64>() / x_hat.len() as f64;
    if !(energy > 0.0) {
        return Err(Error::invalid("symbol estimate has zero energy"));
    }
    let scale = energy.sqrt();
    let xs: Vec<C64> = x_hat.iter().map(|z| z / scale).collect();
    let lambda = estimate_lambda(&xs, pilots)?;
    let rot = if lambda.norm() > 0.0 { lambda / lambda.norm() } else { C64::new(1.0, 0.0) };
    let init: Vec<C64> = c.points().iter().map(|q| q * rot).collect();
    let km = kmeans_lloyd(&xs, &init, 100);
    let derot: Vec<C64> = km.centroids.iter().map(|z| z / rot).collect();
    let top = c.side() as f64 - 1.0;
    let top_row: Vec<C64> = derot
        .iter()
        .copied()
        .filter(|&z| {
            let q = c.nearest(z);
            (q.im / c.scale() - top).abs() < 1e-6
        })
        .collect();
    let theta = line_fit_angle(&top_row);
    let fix = C64::from_polar(1.0, -theta);
    let mapped: Vec<C64> = derot.iter().map(|z| c.nearest(z * fix)).collect();
    let mut decisions: Vec<C64> = km.assignment.iter().map(|&a| mapped[a]).collect();
    for (p, v) in pilots.iter() {
        decisions[p] = v;
    }
    Ok(ClusterDecision {
        decisions,
        pilot_rotation: rot,
        residual_angle: theta,
        energy_scale: scale,
    })
}
