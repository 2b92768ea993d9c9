// Copyright (c) 2026 The fluidcc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Sampled time series produced by a simulation run.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub scenario_hash: String,
    /// Human-readable unit note, e.g. "time s, volume segments, rate segments/s".
    pub units: String,
}

/// Uniformly sampled signals, stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    names: Vec<String>,
    interval: f64,
    times: Vec<f64>,
    columns: Vec<Vec<f64>>,
    pub metadata: TraceMetadata,
}

impl Trace {
    pub fn new(names: Vec<String>, interval: f64) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Self {
            names,
            interval,
            times: Vec::new(),
            columns,
            metadata: TraceMetadata::default(),
        }
    }

    pub fn push_row(&mut self, t: f64, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.times.push(t);
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.push(*v);
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.columns[k].as_slice())
    }

    /// Sample indices whose times fall in `[start, end]`.
    pub fn window_indices(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let eps = 1e-9 * self.interval.max(1e-12);
        let lo = self.times.partition_point(|&t| t < start - eps);
        let hi = self.times.partition_point(|&t| t <= end + eps);
        lo..hi
    }

    /// Linear interpolation of a column at time `t` (clamped to the trace).
    pub fn interpolate(&self, column: &[f64], t: f64) -> f64 {
        if self.times.is_empty() {
            return f64::NAN;
        }
        let t0 = self.times[0];
        let pos = ((t - t0) / self.interval).clamp(0.0, (self.times.len() - 1) as f64);
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        if frac == 0.0 || k + 1 >= column.len() {
            column[k]
        } else {
            column[k] + frac * (column[k + 1] - column[k])
        }
    }

    /// Writes the trace as CSV with a `t` column followed by every signal.
    /// Numbers use fixed scientific notation so the bytes do not depend on
    /// locale or platform.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for (k, t) in self.times.iter().enumerate() {
            write!(out, "{}", format_number(*t))?;
            for c in &self.columns {
                write!(out, ",{}", format_number(c[k]))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Fixed-format number used in every CSV this crate writes.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0"
        "0.000000000e0".to_string()
    } else {
        format!("{v:.9e}")
    }
}

/// FNV-1a over arbitrary bytes, rendered as 16 hex digits.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
