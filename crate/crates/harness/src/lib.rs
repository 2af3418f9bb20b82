//! Scenario-driven front end for the quantum-clock event-time library:
//! configuration schema, pipeline runner, result persistence, and the
//! built-in verification suites.

pub mod corpus;
pub mod emit;
pub mod runner;
pub mod scenario;
pub mod selfcheck;

/// Errors surfaced by the harness, mapped to CLI exit codes in `main`.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] pawtime_core::Error),
}

impl HarnessError {
    /// Exit code contract: 2 validation/parse, 4 required event never
    /// occurs, 3 verification breach (handled by the CLI), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse(_) | HarnessError::Validation(_) => 2,
            HarnessError::Io(_) => 1,
            HarnessError::Core(pawtime_core::Error::InvalidArgument(_)) => 2,
            HarnessError::Core(_) => 1,
        }
    }
}

/// Thread cap for batch runs: `PAWTIME_THREADS`, default the available
/// parallelism, always at least 1.
pub fn thread_cap() -> usize {
    std::env::var("PAWTIME_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

/// Run one job per input in parallel, capped at `threads`, preserving input
/// order in the output.
pub fn run_parallel<T, R, F>(inputs: Vec<T>, threads: usize, job: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let n = inputs.len();
    let workers = threads.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = job(&inputs[i]);
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });

    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("job ran"))
        .collect()
}
