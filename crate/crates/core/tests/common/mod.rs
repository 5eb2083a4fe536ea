//! Brute-force oracles shared by the test targets.

use hhsync_core::NeuronState;

/// Minimum over all `n!` matchings of the mean squared distance.
pub fn brute_force_w2_squared(a: &[NeuronState], b: &[NeuronState]) -> f64 {
    fn permute(k: usize, perm: &mut Vec<usize>, a: &[NeuronState], b: &[NeuronState], best: &mut f64) {
        if k == perm.len() {
            let cost: f64 = perm.iter().enumerate().map(|(i, &j)| a[i].distance_sq(&b[j])).sum();
            *best = best.min(cost / a.len() as f64);
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(k + 1, perm, a, b, best);
            perm.swap(k, i);
        }
    }
    let mut best = f64::INFINITY;
    permute(0, &mut (0..a.len()).collect(), a, b, &mut best);
    best
}

pub fn naive_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}
