//! Counter-based random streams.
//!
//! Parallel work derives one ChaCha stream per work item from a master seed,
//! so results never depend on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "HEDONIC_THREADS";

/// Configures the global rayon pool from `HEDONIC_THREADS`, if set.
///
/// Returns the worker count in effect. Safe to call more than once; only the
/// first call can size the pool.
pub fn init_thread_pool_from_env() -> usize {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Fails only if the pool was already built, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
