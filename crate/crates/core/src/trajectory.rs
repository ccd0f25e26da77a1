//! Recorded closed-loop trajectories and their CSV form.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    /// Applied input `Π₀U`.
    pub u: Vec<f64>,
    pub zeta_norm: f64,
    pub cost: f64,
}

/// Samples taken every integrator step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: f64,
    pub samples: Vec<Sample>,
}

impl TrajectoryRecord {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            samples: Vec::new(),
        }
    }

    pub fn first(&self) -> Option<&Sample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn max_zeta_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.zeta_norm).fold(0.0, f64::max)
    }

    /// Euclidean distance in `x` between the final samples of two records.
    pub fn final_state_distance(&self, other: &TrajectoryRecord) -> Option<f64> {
        let a = self.last()?;
        let b = other.last()?;
        Some(euclid(&a.x, &b.x))
    }

    /// Euclidean distance in `x` between samples with matching index.
    pub fn state_distances(&self, other: &TrajectoryRecord) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a.t, euclid(&a.x, &b.x)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (n, m) = match self.samples.first() {
            Some(s) => (s.x.len(), s.u.len()),
            None => (0, 0),
        };
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.push("zeta_norm".into());
        header.push("cost_V".into());
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = Vec::with_capacity(n + m + 3);
            row.push(fmt_f64(s.t));
            row.extend(s.x.iter().map(|v| fmt_f64(*v)));
            row.extend(s.u.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(s.zeta_norm));
            row.push(fmt_f64(s.cost));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Parses the CSV written by [`write_csv`](Self::write_csv). The step is
    /// recovered from the first two timestamps.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty trajectory CSV".into()))?
            .map_err(|e| Error::Config(e.to_string()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let n = cols.iter().filter(|c| c.starts_with("x_")).count();
        let m = cols.iter().filter(|c| c.starts_with("u_")).count();
        if cols.len() != n + m + 3 || cols[0] != "t" {
            return Err(Error::Config(format!("unexpected trajectory header `{header}`")));
        }
        let mut samples = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::Config(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number `{f}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != cols.len() {
                return Err(Error::Config(format!(
                    "row has {} fields, header has {}",
                    vals.len(),
                    cols.len()
                )));
            }
            samples.push(Sample {
                t: vals[0],
                x: vals[1..=n].to_vec(),
                u: vals[n + 1..=n + m].to_vec(),
                zeta_norm: vals[n + m + 1],
                cost: vals[n + m + 2],
            });
        }
        let step = match samples.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => 0.0,
        };
        Ok(Self { step, samples })
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}
