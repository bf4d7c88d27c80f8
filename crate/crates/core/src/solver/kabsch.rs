use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, Vec3};

/// Relative eigenvalue floor below which a point set counts as collinear.
const COLLINEAR_RATIO: f64 = 1e-12;

fn weighted_centroid(points: &[Point3], weights: &[f64], total: f64) -> Point3 {
    points
        .iter()
        .zip(weights)
        .fold(Vec3::zeros(), |acc, (p, w)| acc + p * *w)
        / total
}

fn is_degenerate(points: &[Point3], weights: &[f64], centroid: &Point3) -> bool {
    let mut scatter = Matrix3::zeros();
    for (p, w) in points.iter().zip(weights) {
        let d = p - centroid;
        scatter += d * d.transpose() * *w;
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(scatter).eigenvalues.iter().copied().collect();
    ev.sort_unstable_by(|a, b| b.total_cmp(a));
    !(ev[0] > 0.0) || ev[1] <= COLLINEAR_RATIO * ev[0]
}

/// Least-squares rigid motion taking `src` onto `dst`:
/// `argmin Σ wᵢ ‖R·srcᵢ + t − dstᵢ‖²` with `det R = +1`.
pub fn kabsch(src: &[Point3], dst: &[Point3], weights: Option<&[f64]>) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::invalid(format!(
            "kabsch needs paired points ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::degenerate("kabsch needs at least 3 point pairs"));
    }
    let ones;
    let w = match weights {
        Some(w) => {
            if w.len() != src.len() {
                return Err(Error::invalid("one weight per point pair required"));
            }
            if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::invalid("weights must be finite and non-negative"));
            }
            w
        }
        None => {
            ones = vec![1.0; src.len()];
            &ones[..]
        }
    };
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::degenerate("all weights are zero"));
    }
    let cs = weighted_centroid(src, w, total);
    let cd = weighted_centroid(dst, w, total);
    if is_degenerate(src, w, &cs) || is_degenerate(dst, w, &cd) {
        return Err(Error::degenerate("collinear or coincident points"));
    }

    let mut h = Matrix3::zeros();
    for ((s, d), wi) in src.iter().zip(dst).zip(w) {
        h += (s - cs) * (d - cd).transpose() * *wi;
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let v = v_t.transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let weakest = svd.singular_values.imin();
        correction[(weakest, weakest)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidTransform::new(rotation, translation))
}
