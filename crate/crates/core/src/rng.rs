//! Counter-based random numbers.
//!
//! Every random quantity is a pure function of `(master seed, replica,
//! neuron, step, lane)`, computed with the Philox4x32-10 bijection. No
//! generator state is carried between draws, so results do not depend on
//! how neurons or replicas are scheduled across threads.
//!
//! Lane usage:
//!
//! | lanes | purpose                                        |
//! |-------|------------------------------------------------|
//! | 0, 1  | Gaussian increments of the four gates          |
//! | 2..=4 | initial condition draws (step 0)               |
//! | 5     | auxiliary draws (subsampling, shuffles)        |

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

pub const LANE_GATES: u16 = 0;
pub const LANE_INITIAL: u16 = 2;
pub const LANE_AUX: u16 = 5;

/// Replica slot reserved for mean-field reference runs, so they never share
/// streams with the particle systems they are compared against.
pub const REFERENCE_REPLICA: u32 = u32::MAX;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(mut ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let [mut k0, mut k1] = key;
    for round in 0..10 {
        if round > 0 {
            k0 = k0.wrapping_add(PHILOX_W0);
            k1 = k1.wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0];
    }
    ctr
}

/// Uniform in `(0, 1]` with 53 random bits.
#[inline]
fn unit_open_closed(hi: u32, lo: u32) -> f64 {
    let bits = ((u64::from(hi) << 32) | u64::from(lo)) >> 11;
    (bits + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Addressable random source keyed by a 64-bit master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamRng {
    key: [u32; 2],
}

impl StreamRng {
    pub fn new(master_seed: u64) -> Self {
        StreamRng {
            key: [master_seed as u32, (master_seed >> 32) as u32],
        }
    }

    /// Raw 128-bit block. `step` may use up to 48 bits.
    #[inline]
    pub fn block(&self, replica: u32, neuron: u32, step: u64, lane: u16) -> [u32; 4] {
        debug_assert!(step < 1 << 48, "step index exceeds 48 bits");
        let ctr = [
            step as u32,
            (((step >> 32) as u32) << 16) | u32::from(lane),
            neuron,
            replica,
        ];
        philox4x32_10(ctr, self.key)
    }

    /// Two independent uniforms in `(0, 1]`.
    #[inline]
    pub fn uniform_pair(&self, replica: u32, neuron: u32, step: u64, lane: u16) -> [f64; 2] {
        let w = self.block(replica, neuron, step, lane);
        [unit_open_closed(w[0], w[1]), unit_open_closed(w[2], w[3])]
    }

    /// Two independent standard normals (Box–Muller).
    #[inline]
    pub fn normal_pair(&self, replica: u32, neuron: u32, step: u64, lane: u16) -> [f64; 2] {
        let [u1, u2] = self.uniform_pair(replica, neuron, step, lane);
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        [radius * c, radius * s]
    }
}

/// Source of the standard normal draws that drive the gate noise.
pub trait GateNoise: Sync {
    /// Draws for the four gates of `neuron` over grid step `step`
    /// (the interval `[t_step, t_step+1]`).
    fn normals(&self, neuron: usize, step: u64) -> [f64; 4];
}

/// Independent draws for one replica, addressed by `(neuron, step)`.
#[derive(Debug, Clone, Copy)]
pub struct ReplicaNoise {
    pub rng: StreamRng,
    pub replica: u32,
}

impl ReplicaNoise {
    pub fn new(master_seed: u64, replica: u32) -> Self {
        ReplicaNoise {
            rng: StreamRng::new(master_seed),
            replica,
        }
    }
}

impl GateNoise for ReplicaNoise {
    #[inline]
    fn normals(&self, neuron: usize, step: u64) -> [f64; 4] {
        let neuron = neuron as u32;
        let [a, b] = self.rng.normal_pair(self.replica, neuron, step, LANE_GATES);
        let [c, d] = self.rng.normal_pair(self.replica, neuron, step, LANE_GATES + 1);
        [a, b, c, d]
    }
}

/// Coarse-grid draws built by summing `ratio` consecutive fine-grid draws and
/// rescaling, so that coarse and fine schemes see the same Brownian path.
#[derive(Debug, Clone, Copy)]
pub struct AggregatedNoise<'a, G: GateNoise> {
    pub fine: &'a G,
    pub ratio: u64,
}

impl<G: GateNoise> GateNoise for AggregatedNoise<'_, G> {
    fn normals(&self, neuron: usize, step: u64) -> [f64; 4] {
        let mut sum = [0.0; 4];
        let start = step * self.ratio;
        for fine_step in start..start + self.ratio {
            for (s, z) in sum.iter_mut().zip(self.fine.normals(neuron, fine_step)) {
                *s += z;
            }
        }
        let scale = 1.0 / (self.ratio as f64).sqrt();
        sum.map(|s| s * scale)
    }
}

/// Neuron `i` reads the stream of neuron `perm[i]`.
#[derive(Debug, Clone)]
pub struct PermutedNoise<'a, G: GateNoise> {
    pub base: &'a G,
    pub perm: Vec<usize>,
}

impl<G: GateNoise> GateNoise for PermutedNoise<'_, G> {
    fn normals(&self, neuron: usize, step: u64) -> [f64; 4] {
        self.base.normals(self.perm[neuron], step)
    }
}

/// Deterministic draws for tests: the same vector for every neuron and step.
#[derive(Debug, Clone, Copy)]
pub struct FixedNoise(pub [f64; 4]);

impl GateNoise for FixedNoise {
    fn normals(&self, _neuron: usize, _step: u64) -> [f64; 4] {
        self.0
    }
}

/// Fisher–Yates selection of `k` distinct indices out of `0..n`.
pub fn sample_indices(rng: &StreamRng, replica: u32, tag: u32, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let [u, _] = rng.uniform_pair(replica, tag, i as u64, LANE_AUX);
        let span = (n - i) as f64;
        let j = i + ((u * span).ceil() as usize).clamp(1, n - i) - 1;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors published with the Random123 reference implementation.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn addressing_is_reproducible_and_distinct() {
        let noise = ReplicaNoise::new(7, 3);
        assert_eq!(noise.normals(5, 11), noise.normals(5, 11));
        assert_ne!(noise.normals(5, 11), noise.normals(6, 11));
        assert_ne!(noise.normals(5, 11), noise.normals(5, 12));
        assert_ne!(noise.normals(5, 11), ReplicaNoise::new(7, 4).normals(5, 11));
        assert_ne!(noise.normals(5, 11), ReplicaNoise::new(8, 3).normals(5, 11));
        let rng = StreamRng::new(7);
        assert_ne!(rng.block(0, 0, 1 << 33, 0), rng.block(0, 0, 1 << 34, 0));
    }

    #[test]
    fn normals_have_unit_moments() {
        let noise = ReplicaNoise::new(2024, 0);
        let n = 200_000u64;
        let mut sum = [0.0; 4];
        let mut sum_sq = [0.0; 4];
        let mut cross = 0.0;
        for step in 0..n {
            let z = noise.normals((step % 17) as usize, step);
            for g in 0..4 {
                sum[g] += z[g];
                sum_sq[g] += z[g] * z[g];
            }
            cross += z[0] * z[3];
        }
        let nf = n as f64;
        for g in 0..4 {
            // 5 standard errors
            assert!((sum[g] / nf).abs() < 5.0 / nf.sqrt(), "mean of gate {g}");
            assert!((sum_sq[g] / nf - 1.0).abs() < 5.0 * (2.0 / nf).sqrt(), "var of gate {g}");
        }
        assert!((cross / nf).abs() < 5.0 / nf.sqrt());
    }

    #[test]
    fn aggregated_draws_sum_fine_draws() {
        let fine = ReplicaNoise::new(1, 0);
        let coarse = AggregatedNoise {
            fine: &fine,
            ratio: 4,
        };
        let z = coarse.normals(2, 3);
        let mut expected = [0.0; 4];
        for s in 12..16 {
            for (e, f) in expected.iter_mut().zip(fine.normals(2, s)) {
                *e += f;
            }
        }
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_indices_are_distinct() {
        let rng = StreamRng::new(99);
        let idx = sample_indices(&rng, 0, 1, 100, 40);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 40);
        assert!(idx.iter().all(|&i| i < 100));
        assert_eq!(sample_indices(&rng, 0, 1, 5, 5).len(), 5);
    }
}
