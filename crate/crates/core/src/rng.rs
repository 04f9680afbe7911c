//! Counter-based keyed random numbers.
//!
//! Every variate is a pure function of (master seed, trial, index, stream),
//! so trials can be evaluated in any order, in parallel, or re-evaluated
//! lazily without storing generator state. The mixer is the splitmix64
//! finalizer, applied to each key component in turn.

/// Stream for exponent draws.
pub const STREAM_EXPONENT: u64 = 0;
/// Stream for random coefficient moduli.
pub const STREAM_COEFF: u64 = 1;
/// Stream for the first base uniform of the pairwise construction.
pub const STREAM_PAIR_U: u64 = 2;
/// Stream for the second base uniform of the pairwise construction.
pub const STREAM_PAIR_V: u64 = 3;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn keyed(master_seed: u64, trial: u64, index: u64, stream: u64) -> u64 {
    let mut h = mix(master_seed.wrapping_add(0x9E3779B97F4A7C15));
    h = mix(h ^ trial.wrapping_mul(0xD1B54A32D192ED03));
    h = mix(h ^ index.wrapping_mul(0x8CB92BA72F3D8DD7));
    mix(h ^ stream.wrapping_mul(0xA24BAED4963EE407))
}

/// A uniform variate in the open interval (0, 1).
///
/// Uses the top 53 bits of the mixed key, centered on the dyadic grid,
/// so 0.0 and 1.0 are never returned.
pub fn keyed_unit(master_seed: u64, trial: u64, index: u64, stream: u64) -> f64 {
    let h = keyed(master_seed, trial, index, stream);
    ((h >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// The k-th member of a pairwise independent uniform family.
///
/// Draws two base uniforms U, V per trial and returns frac(U + (k+1) V).
/// For any two distinct indices the pair of values is a linear image of
/// (U, V) under a measure-preserving map of the unit torus, so any two
/// members are exactly independent even though the whole family is
/// driven by just two base draws.
pub fn pairwise_unit(master_seed: u64, trial: u64, k: u64) -> f64 {
    let u = keyed_unit(master_seed, trial, 0, STREAM_PAIR_U);
    let v = keyed_unit(master_seed, trial, 0, STREAM_PAIR_V);
    let x = u + (k + 1) as f64 * v;
    let frac = x - x.floor();
    frac.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variates_are_deterministic_and_key_sensitive() {
        let a = keyed_unit(42, 0, 7, STREAM_EXPONENT);
        let b = keyed_unit(42, 0, 7, STREAM_EXPONENT);
        assert_eq!(a, b);
        assert_ne!(a, keyed_unit(43, 0, 7, STREAM_EXPONENT));
        assert_ne!(a, keyed_unit(42, 1, 7, STREAM_EXPONENT));
        assert_ne!(a, keyed_unit(42, 0, 8, STREAM_EXPONENT));
        assert_ne!(a, keyed_unit(42, 0, 7, STREAM_COEFF));
    }

    #[test]
    fn variates_stay_inside_the_open_interval() {
        for k in 0..10_000u64 {
            let u = keyed_unit(7, 3, k, STREAM_EXPONENT);
            assert!(u > 0.0 && u < 1.0, "u = {u} at k = {k}");
            let p = pairwise_unit(7, 3, k);
            assert!(p > 0.0 && p < 1.0, "p = {p} at k = {k}");
        }
    }

    #[test]
    fn keyed_units_pass_a_coarse_uniformity_check() {
        let n = 10_000usize;
        let mut sorted: Vec<f64> =
            (0..n).map(|k| keyed_unit(2024, 5, k as u64, STREAM_EXPONENT)).collect();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut ks = 0.0f64;
        for (i, u) in sorted.iter().enumerate() {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            ks = ks.max((u - lo).abs()).max((u - hi).abs());
        }
        assert!(ks <= 0.03, "KS distance {ks} too large");
    }

    #[test]
    fn pairwise_units_are_marginally_uniform_and_weakly_correlated() {
        let trials = 30_000u64;
        for &(i, j) in &[
            (0u64, 1u64),
            (0, 2),
            (1, 2),
            (0, 10),
            (3, 17),
            (5, 6),
            (2, 40),
            (7, 100),
            (11, 12),
            (0, 999),
            (13, 14),
            (20, 21),
            (30, 60),
            (8, 9),
            (4, 44),
            (15, 16),
            (25, 75),
            (50, 51),
            (33, 66),
            (1, 1000),
        ] {
            let mut sum_x = 0.0;
            let mut sum_y = 0.0;
            let mut sum_xy = 0.0;
            let mut sum_x2 = 0.0;
            let mut sum_y2 = 0.0;
            for t in 0..trials {
                let x = pairwise_unit(99, t, i);
                let y = pairwise_unit(99, t, j);
                sum_x += x;
                sum_y += y;
                sum_xy += x * y;
                sum_x2 += x * x;
                sum_y2 += y * y;
            }
            let n = trials as f64;
            let cov = sum_xy / n - (sum_x / n) * (sum_y / n);
            let var_x = sum_x2 / n - (sum_x / n) * (sum_x / n);
            let var_y = sum_y2 / n - (sum_y / n) * (sum_y / n);
            let corr = cov / (var_x * var_y).sqrt();
            assert!(corr.abs() <= 0.03, "corr({i},{j}) = {corr}");
            assert!((sum_x / n - 0.5).abs() <= 0.02, "mean of index {i} drifted");
        }
    }
}
