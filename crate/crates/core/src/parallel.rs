//! Deterministic parallel reductions.
//!
//! Work is cut into fixed-size chunks independent of the thread count; each
//! chunk accumulates into its own buffer and the buffers are summed in chunk
//! order. Results are therefore bitwise identical for any number of threads.

use rayon::prelude::*;

pub const CHUNK: usize = 16384;

/// Sums `f(chunk, acc)` over fixed-size chunks of `items` into a buffer of
/// length `len`.
pub fn reduce_chunks<T, F>(items: &[T], len: usize, f: F) -> Vec<f64>
where
    T: Sync,
    F: Fn(&[T], &mut [f64]) + Sync,
{
    let mut total = vec![0.0; len];
    if items.len() <= CHUNK {
        f(items, &mut total);
        return total;
    }
    let chunks: Vec<&[T]> = items.chunks(CHUNK).collect();
    // bounded number of live partial buffers
    let batch = (2 * rayon::current_num_threads()).max(2);
    for group in chunks.chunks(batch) {
        let partials: Vec<Vec<f64>> = group
            .par_iter()
            .map(|c| {
                let mut acc = vec![0.0; len];
                f(c, &mut acc);
                acc
            })
            .collect();
        for p in partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_of_thread_count() {
        let items: Vec<f64> = (0..100_000)
            .map(|k| ((k * 7919) % 1000) as f64 * 1e-3 + 1e-9 * k as f64)
            .collect();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    reduce_chunks(&items, 3, |c, acc| {
                        for (k, v) in c.iter().enumerate() {
                            acc[k % 3] += v.sin();
                        }
                    })
                })
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(8));
    }
}
