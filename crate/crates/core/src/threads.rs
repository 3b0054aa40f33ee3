//! Global thread-pool sizing from `FUSESR_THREADS`.

use crate::error::{FuseError, Result};

pub const THREADS_ENV: &str = "FUSESR_THREADS";

/// Parse a `FUSESR_THREADS` value. Empty means "no cap".
pub fn parse_thread_cap(value: &str) -> Result<Option<usize>> {
    let v = value.trim();
    if v.is_empty() {
        return Ok(None);
    }
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Some(n)),
        _ => Err(FuseError::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}"))),
    }
}

/// Size the global rayon pool from the environment. Returns the thread count
/// in effect. Calling this after the pool exists leaves it unchanged.
pub fn init_thread_pool() -> Result<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => parse_thread_cap(&v)?,
        Err(_) => None,
    };
    if let Some(n) = cap {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("global thread pool already initialized");
        }
    }
    Ok(rayon::current_num_threads())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_caps() {
        assert_eq!(parse_thread_cap("4").unwrap(), Some(4));
        assert_eq!(parse_thread_cap(" ").unwrap(), None);
        assert!(parse_thread_cap("0").is_err());
        assert!(parse_thread_cap("many").is_err());
    }
}
