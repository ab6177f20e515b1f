use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stratified K-fold assignment: each class is shuffled with `seed` and
/// dealt round-robin, continuing the deal across classes.
pub fn stratified_folds(labels: &[f64], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Random split into two halves of equal size; with odd `n` the first half
/// gets the extra sample. Indices are returned sorted.
pub fn split_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let cut = n.div_ceil(2);
    let mut first = perm[..cut].to_vec();
    let mut second = perm[cut..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Effective fold count for `n` rows.
pub(crate) fn effective_folds(requested: usize, n: usize) -> usize {
    requested.min(n).max(2)
}
