//! Operational shell: configuration, subcommands, persistence and the
//! verification runner.
//!
//! The worker pool used by parameter sweeps honours `CBF_THREADS`.

pub mod commands;
pub mod config;
pub mod verify;

/// Cap the global rayon pool from `CBF_THREADS`; a no-op if unset or already built.
pub fn init_threads() {
    if let Some(n) = std::env::var("CBF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
