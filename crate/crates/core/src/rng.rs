//! Reproducible random streams.
//!
//! Every replica draws from a ChaCha8 stream keyed by `(seed, stream index)`.
//! ChaCha is counter based, so streams with distinct indices never overlap and
//! the output is identical on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::Result;

pub type SimRng = ChaCha8Rng;

/// Stream `index` of the family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child stream derived from the current state of `parent`.
///
/// Consumes one word from the parent, so the derivation itself is reproducible.
pub fn substream(parent: &mut SimRng, tag: u64) -> SimRng {
    let key: u64 = parent.random();
    stream(key, tag)
}

/// Exponential waiting time with the given rate.
#[inline]
pub fn exp_time<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Uniform draw on `[0, hi)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, hi: f64) -> f64 {
    rng.random::<f64>() * hi
}


const CHUNK: usize = 10_000;

/// Runs `n` independent samples in fixed-size chunks, chunk `i` drawing from `stream(base, i)`.
pub fn par_samples<T, F>(base: u64, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SimRng) -> Result<T> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(base, i as u64);
            let len = CHUNK.min(n - i * CHUNK);
            (0..len).map(|_| f(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
