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

//! Fluid-model simulation and stability analysis of congestion control.
//!
//! Senders running Reno, CUBIC, BBRv1 or BBRv2 share links modelled as
//! fluid queues with drop-tail or RED loss. The coupled delay-differential
//! equations are solved with a fixed-step method of steps; traces are
//! reduced to fairness, loss, queuing, utilization and jitter metrics.
//! The [`analysis`] module holds the reduced BBR models, their equilibria
//! and Jacobian spectra.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cca;
pub mod config;
pub mod error;
pub mod metrics;
pub mod netmodel;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod trace;
pub mod units;

pub use error::{AnalysisError, ConfigError, Error, MetricsError, SolverError};
pub use scenario::{build_dumbbell, CcaKind, Discipline, Link, Scenario};
pub use sim::simulate;
pub use trace::Trace;
