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

use thiserror::Error;

/// Errors raised while building or validating a scenario.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("step {step} s exceeds a tenth of the smallest delay {min_delay} s")]
    StepTooLarge { step: f64, min_delay: f64 },
    #[error("non-finite value in `{signal}` at t = {time} s")]
    NonFinite { signal: String, time: f64 },
    #[error("lookup of `{signal}` at t = {at} s is outside the stored history (now {now} s, horizon {horizon} s)")]
    OutsideHistory {
        signal: String,
        at: f64,
        now: f64,
        horizon: f64,
    },
    #[error("invalid solver settings: {0}")]
    Settings(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("all rates are zero")]
    AllZero,
    #[error("empty input")]
    Empty,
    #[error("window [{start}, {end}] is not covered by the trace")]
    Window { start: f64, end: f64 },
    #[error("missing trace column `{0}`")]
    MissingColumn(String),
    #[error("nothing was sent in the window")]
    NothingSent,
    #[error("need at least two jitter samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid parameter `{name}`: {message}")]
    Parameter { name: String, message: String },
    #[error("QR iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix must be square and finite")]
    BadMatrix,
    #[error("trajectory diverged at t = {time}")]
    Diverged { time: f64 },
}

impl AnalysisError {
    pub fn parameter(name: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Parameter {
            name: name.into(),
            message: message.into(),
        }
    }
}

/// Any failure of a simulation run.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
