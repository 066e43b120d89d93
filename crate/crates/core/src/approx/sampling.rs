//! Uniform sampling on the 2-simplex (symmetric Dirichlet(1, 1, 1)).

use rand::Rng;
use rand_distr::Exp1;

use crate::scalar::Scalar;
use crate::seed::rng_for;

/// Normalized triple of unit exponentials.
pub fn uniform_simplex_point<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let e: [f64; 3] = [rng.sample(Exp1), rng.sample(Exp1), rng.sample(Exp1)];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

/// `count` points of batch `stream`, each drawn from its own counter-based
/// generator so the sequence does not depend on evaluation order.
pub fn sample_simplex<T: Scalar>(seed: u64, stream: u64, count: usize) -> Vec<[T; 3]> {
    (0..count)
        .map(|i| {
            let mut rng = rng_for(seed, stream, i as u64);
            uniform_simplex_point(&mut rng).map(T::lit)
        })
        .collect()
}
