//! Time series of reduced density matrices and the trajectory CSV format
//! `t,sz,sx,re_coh,im_coh,max_bond,discarded_weight`.

use std::io::{self, BufRead, Write};

use crate::bath::SigmaZHistory;
use crate::model::SystemState;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "t,sz,sx,re_coh,im_coh,max_bond,discarded_weight";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState<f64>>,
    /// Largest MPS bond extent after each step (0 when not applicable).
    pub max_bond: Vec<usize>,
    /// Cumulative discarded singular weight (0 when not applicable).
    pub discarded_weight: Vec<f64>,
}

impl Trajectory {
    pub fn push(&mut self, t: f64, state: SystemState<f64>, max_bond: usize, discarded: f64) {
        self.times.push(t);
        self.states.push(state);
        self.max_bond.push(max_bond);
        self.discarded_weight.push(discarded);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sigma_z(&self) -> Vec<f64> {
        self.states.iter().map(SystemState::sigma_z).collect()
    }

    pub fn sigma_x(&self) -> Vec<f64> {
        self.states.iter().map(SystemState::sigma_x).collect()
    }

    pub fn coherence(&self) -> Vec<crate::C64> {
        self.states.iter().map(SystemState::sigma_plus).collect()
    }

    pub fn max_trace_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.trace() - crate::C64::new(1.0, 0.0)).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.states
            .iter()
            .map(SystemState::hermiticity_defect)
            .fold(0.0, f64::max)
    }

    /// `⟨σz⟩` on the trajectory's grid, which must be uniform from t = 0.
    pub fn sigma_z_history(&self) -> Result<SigmaZHistory<f64>> {
        if self.times.len() < 2 {
            return Err(Error::Validation("history needs at least two samples".into()));
        }
        let dt = self.times[1] - self.times[0];
        SigmaZHistory::new(dt, self.sigma_z())
    }

    /// `sup |⟨σz⟩_self − ⟨σz⟩_other|` over the times both trajectories
    /// share (matched to 1e-9 relative to the step).
    pub fn sigma_z_sup_distance(&self, other: &Trajectory) -> Option<f64> {
        let rows_a: Vec<(f64, f64)> = self.times.iter().copied().zip(self.sigma_z()).collect();
        let rows_b: Vec<(f64, f64)> = other.times.iter().copied().zip(other.sigma_z()).collect();
        sup_distance_on_common_times(&rows_a, &rows_b)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(String, String)]) -> io::Result<()> {
        for (k, v) in metadata {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            let s = &self.states[i];
            let coh = s.sigma_plus();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.times[i],
                s.sigma_z(),
                s.sigma_x(),
                coh.re,
                coh.im,
                self.max_bond[i],
                self.discarded_weight[i]
            )?;
        }
        Ok(())
    }
}

/// One parsed row of a trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub sz: f64,
    pub sx: f64,
    pub re_coh: f64,
    pub im_coh: f64,
    pub max_bond: usize,
    pub discarded_weight: f64,
}

/// Reads a trajectory CSV, skipping `#` metadata lines.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<TrajectoryRow>> {
    let bad = |msg: String| Error::Validation(msg);
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| bad(format!("read failed: {e}")))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line.trim() != CSV_HEADER {
                return Err(bad(format!("unexpected header `{line}`")));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(format!("line {}: expected 7 fields", n + 1)));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>()
                .map_err(|e| bad(format!("line {}: field {i}: {e}", n + 1)))
        };
        rows.push(TrajectoryRow {
            t: num(0)?,
            sz: num(1)?,
            sx: num(2)?,
            re_coh: num(3)?,
            im_coh: num(4)?,
            max_bond: f[5]
                .parse()
                .map_err(|e| bad(format!("line {}: max_bond: {e}", n + 1)))?,
            discarded_weight: num(6)?,
        });
    }
    Ok(rows)
}

/// Sup-norm of the difference of two sampled functions over their common
/// sample times. `None` if they share no time.
pub fn sup_distance_on_common_times(a: &[(f64, f64)], b: &[(f64, f64)]) -> Option<f64> {
    let mut j = 0;
    let mut sup: Option<f64> = None;
    for &(ta, va) in a {
        while j < b.len() && b[j].0 < ta - 1e-9 * ta.abs().max(1.0) {
            j += 1;
        }
        if j < b.len() && (b[j].0 - ta).abs() <= 1e-9 * ta.abs().max(1.0) {
            let d = (va - b[j].1).abs();
            sup = Some(sup.map_or(d, |s: f64| s.max(d)));
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{initial_state, InitialState};

    #[test]
    fn csv_round_trip() {
        let mut tr = Trajectory::default();
        let up = initial_state(&InitialState::Up).unwrap();
        let plus = initial_state(&InitialState::Plus).unwrap();
        tr.push(0.0, up, 1, 0.0);
        tr.push(0.2, plus, 7, 1.5e-9);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, &[("dt".into(), "0.2".into())]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# dt=0.2\n"));
        let rows = read_csv(&buf[..]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].max_bond, 7);
        assert_eq!(rows[1].sx, 1.0);
        assert_eq!(rows[1].re_coh, 0.5);
        assert_eq!(rows[1].discarded_weight, 1.5e-9);
    }

    #[test]
    fn common_time_distance() {
        let a = [(0.0, 1.0), (0.1, 0.5), (0.2, 0.0)];
        let b = [(0.0, 1.0), (0.2, 0.25)];
        assert_eq!(sup_distance_on_common_times(&a, &b), Some(0.25));
        assert_eq!(sup_distance_on_common_times(&a, &[(0.05, 0.0)]), None);
    }
}
