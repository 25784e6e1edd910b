//! Latin hypercube designs and initial seed assignment.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// `n` points in `[0,1]^d`, one per stratum `[i/n, (i+1)/n)` in every
/// column, uniform within strata, columns permuted independently.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(rng);
        for (p, &s) in points.iter_mut().zip(&strata) {
            p[j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

/// Labels `0..n_seeds` cycled over `n` design points, then shuffled, so each
/// seed is used `floor(n/n_seeds)` or `ceil(n/n_seeds)` times.
pub fn assign_seeds<R: Rng + ?Sized>(n: usize, n_seeds: usize, rng: &mut R) -> Result<Vec<u64>> {
    if n_seeds == 0 || n_seeds > n {
        return Err(Error::invalid(format!(
            "need 1 <= n_seeds <= n, got n_seeds={n_seeds}, n={n}"
        )));
    }
    let mut seeds: Vec<u64> = (0..n).map(|i| (i % n_seeds) as u64).collect();
    seeds.shuffle(rng);
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn counts(seeds: &[u64], k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &s in seeds {
            c[s as usize] += 1;
        }
        c
    }

    #[test]
    fn stratified_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = latin_hypercube(10, 3, &mut rng);
        for j in 0..3 {
            let mut col: Vec<f64> = pts.iter().map(|p| p[j]).collect();
            col.sort_by(f64::total_cmp);
            for (i, v) in col.iter().enumerate() {
                assert_eq!((v * 10.0).floor() as usize, i);
            }
        }
        let one = latin_hypercube(1, 4, &mut rng);
        assert!(one[0].iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn different_streams_differ() {
        let a = latin_hypercube(5, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let b = latin_hypercube(5, 2, &mut ChaCha8Rng::seed_from_u64(2));
        assert_ne!(a, b);
    }

    #[test]
    fn seed_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(counts(&assign_seeds(50, 5, &mut rng).unwrap(), 5), vec![10; 5]);
        assert!(assign_seeds(4, 1, &mut rng).unwrap().iter().all(|&s| s == 0));
        let mut c = counts(&assign_seeds(7, 3, &mut rng).unwrap(), 3);
        c.sort();
        assert_eq!(c, vec![2, 2, 3]);
        assert!(assign_seeds(3, 4, &mut rng).is_err());
        assert!(assign_seeds(3, 0, &mut rng).is_err());
    }
}
