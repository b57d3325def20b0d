use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AlignMode, InitStrategy};
use super::OptimError;
use crate::geometry::MeshStats;
use crate::linalg::{Quat, Vec3};
use crate::pose::PoseParams;
use crate::scalar::Real;

/// Translation range, in multiples of the bbox side lengths.
pub const PERTURB_TRANSLATION_SIDES: f64 = 10.0;
/// Euler angle range in degrees (each axis independently).
pub const PERTURB_EULER_DEG: f64 = 180.0;
pub const PERTURB_SCALE_RANGE: (f64, f64) = (0.01, 100.0);

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of restart `index`; a fixed offset from the master seed.
pub fn restart_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(SEED_STRIDE.wrapping_mul(index as u64 + 1))
}

pub fn restart_rng(master: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(restart_seed(master, index))
}

/// Draws a perturbation: translation `U(-10 L, 10 L)` per axis (L the bbox
/// side lengths of `stats`), XYZ Euler angles each `U(-180, 180)` degrees,
/// and scale `U(0.01, 100)` (exactly 1 in rigid mode).
pub fn random_initial_pose<T: Real, R: Rng + ?Sized>(rng: &mut R, stats: &MeshStats<T>, mode: AlignMode) -> PoseParams<T> {
    let sides = stats.extents().to_f64();
    let mut delta = [0.0; 3];
    for k in 0..3 {
        let half = PERTURB_TRANSLATION_SIDES * sides[k];
        delta[k] = if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
    }
    let lim = PERTURB_EULER_DEG.to_radians();
    let angles: [f64; 3] = std::array::from_fn(|_| rng.random_range(-lim..=lim));
    let quat = Quat::from_euler_xyz(T::lit(angles[0]), T::lit(angles[1]), T::lit(angles[2]));
    let log_scale = match mode {
        AlignMode::Rigid => T::zero(),
        AlignMode::Scaled => T::lit(rng.random_range(PERTURB_SCALE_RANGE.0..=PERTURB_SCALE_RANGE.1).ln()),
    };
    PoseParams { tau: Vec3::from_f64(delta), quat, log_scale }
}

/// Re-expresses a perturbation (rotation and scale about `center`, then
/// translation by `perturbation.tau`) as a pose about the origin.
pub fn perturbation_about<T: Real>(center: Vec3<T>, perturbation: &PoseParams<T>) -> Result<PoseParams<T>, OptimError> {
    let r = perturbation.rotation()?;
    let s = perturbation.scale();
    Ok(PoseParams {
        tau: center + perturbation.tau - r.mul_vec(center) * s,
        quat: perturbation.unit_quat()?,
        log_scale: perturbation.log_scale,
    })
}

/// Starting pose for one restart. `source_stats` describes the source
/// under `base`; offsets scale with the target's bbox side lengths.
pub fn sample_initial_pose<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    strategy: &InitStrategy,
    base: &PoseParams<T>,
    source_stats: &MeshStats<T>,
    target_stats: &MeshStats<T>,
) -> Result<PoseParams<T>, OptimError> {
    let sides = target_stats.extents().to_f64();
    let offset = |rng: &mut R, max_fraction: f64| {
        let d: [f64; 3] = std::array::from_fn(|k| {
            let m = max_fraction * sides[k];
            if m > 0.0 {
                rng.random_range(-m..=m)
            } else {
                0.0
            }
        });
        Vec3::from_f64(d)
    };
    let pert = match strategy {
        InitStrategy::Base => return Ok(*base),
        InitStrategy::TranslationOffset { max_fraction } => PoseParams::translation(offset(rng, *max_fraction)),
        InitStrategy::YawAndOffset { max_fraction } => {
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let q = Quat::from_axis_angle(Vec3::new(T::zero(), T::one(), T::zero()), T::lit(yaw));
            PoseParams { tau: offset(rng, *max_fraction), quat: q, log_scale: T::zero() }
        }
        InitStrategy::Protocol { mode } => random_initial_pose(rng, source_stats, *mode),
    };
    Ok(base.then(&perturbation_about(source_stats.centroid, &pert)?)?)
}
