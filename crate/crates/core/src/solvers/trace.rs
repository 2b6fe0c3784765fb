use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{NepError, Result};

/// Header of trace CSV files.
pub const CSV_HEADER: &str =
    "iter,dist_to_ne,dist_phi,consensus_err,inclusion_residual,wall_time_us";

/// Metrics of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `‖xb − 1 ⊗ x*‖`; NaN when no reference equilibrium was supplied.
    pub dist_to_ne: f64,
    /// `‖xb − 1 ⊗ x*‖_Φ`; NaN when no reference equilibrium was supplied.
    pub dist_phi: f64,
    pub consensus_err: f64,
    /// Largest violation of the step's optimality inclusion (0 at iteration 0).
    pub inclusion_residual: f64,
    pub wall_time_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn dist_to_ne(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dist_to_ne).collect()
    }

    pub fn dist_phi(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dist_phi).collect()
    }

    /// First iteration whose distance to the equilibrium is at most `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.dist_to_ne <= tol)
            .map(|r| r.iter)
    }

    pub fn max_inclusion_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.inclusion_residual)
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{}",
                r.iter,
                r.dist_to_ne,
                r.dist_phi,
                r.consensus_err,
                r.inclusion_residual,
                r.wall_time_us
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| NepError::Input("empty trace file".into()))?;
        if header.trim() != CSV_HEADER {
            return Err(NepError::Input(format!(
                "unexpected trace header `{header}`"
            )));
        }
        let bad = |line: &str| NepError::Input(format!("malformed trace line `{line}`"));
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(bad(&line));
            }
            let float = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&line));
            records.push(TraceRecord {
                iter: fields[0].trim().parse().map_err(|_| bad(&line))?,
                dist_to_ne: float(fields[1])?,
                dist_phi: float(fields[2])?,
                consensus_err: float(fields[3])?,
                inclusion_residual: float(fields[4])?,
                wall_time_us: fields[5].trim().parse().map_err(|_| bad(&line))?,
            });
        }
        Ok(Self { records })
    }
}
