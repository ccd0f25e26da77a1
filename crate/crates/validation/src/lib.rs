//! Pass/fail bookkeeping for the acceptance run.

use std::io::Write;
use std::time::Instant;

/// Collects one verdict per criterion and prints each as it is decided.
#[derive(Debug, Default)]
pub struct Scoreboard {
    verdicts: Vec<(String, bool)>,
}

impl Scoreboard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `check`, which returns the verdict and a one-line summary of the
    /// measured values, and prints `[PASS]`/`[FAIL]` with the elapsed time.
    pub fn run<F>(&mut self, id: &str, check: F) -> bool
    where
        F: FnOnce() -> (bool, String),
    {
        let started = Instant::now();
        let (pass, detail) = check();
        let line = format!(
            "[{}] {id}: {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        std::io::stdout().flush().ok();
        self.verdicts.push((id.to_string(), pass));
        pass
    }

    pub fn passed(&self) -> usize {
        self.verdicts.iter().filter(|(_, p)| *p).count()
    }

    pub fn total(&self) -> usize {
        self.verdicts.len()
    }

    pub fn failed(&self) -> Vec<&str> {
        self.verdicts
            .iter()
            .filter(|(_, p)| !p)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|(_, p)| *p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_verdicts() {
        let mut s = Scoreboard::new();
        assert!(s.run("a", || (true, "ok".into())));
        assert!(!s.run("b", || (false, "no".into())));
        assert_eq!((s.passed(), s.total()), (1, 2));
        assert_eq!(s.failed(), vec!["b"]);
        assert!(!s.all_passed());
    }
}
