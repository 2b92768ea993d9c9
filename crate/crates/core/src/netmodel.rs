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

//! Link-level fluid model: arrivals, queue, latency and loss.

use crate::error::SolverError;
use crate::scenario::{Discipline, Link, Path};
use crate::solver::SignalHistory;

/// Logistic function `1 / (1 + exp(-k v))`, evaluated without overflow.
pub fn sigmoid(v: f64, k: f64) -> f64 {
    let z = k * v;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smooth ReLU `v * sigmoid(v)`.
pub fn relu_smooth(v: f64, k: f64) -> f64 {
    v * sigmoid(v, k)
}

/// One contributor to a link's arrivals: the history index of an agent's
/// sending rate and its propagation delay to the link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Upstream {
    pub rate_signal: usize,
    pub forward_delay: f64,
}

/// Aggregate arrival rate `y(t) = sum_i x_i(t - d_{i->l})`. Queuing and
/// loss upstream of the link are neglected.
pub fn arrival_rate(
    upstream: &[Upstream],
    t: f64,
    history: &SignalHistory,
) -> Result<f64, SolverError> {
    upstream.iter().try_fold(0.0, |acc, u| {
        Ok(acc + history.lookup(u.rate_signal, t - u.forward_delay)?)
    })
}

/// `(1 - p) y - C`, forced to zero where it would push the queue out of
/// `[0, B]`.
pub fn queue_derivative(link: &Link, arrival: f64, loss: f64, queue: f64) -> f64 {
    let raw = (1.0 - loss) * arrival - link.capacity;
    if (queue <= 0.0 && raw < 0.0) || (queue >= link.buffer && raw > 0.0) {
        0.0
    } else {
        raw
    }
}

/// Round-trip propagation plus the queuing delay of every link on the path.
pub fn path_latency(path: &Path, links: &[Link], queues: &[f64]) -> f64 {
    path.links.iter().fold(path.total_propagation, |acc, &l| {
        acc + queues[l] / links[l].capacity
    })
}

/// Drop-tail loss: relative excess rate while the buffer is full, smoothed.
pub fn loss_droptail(link: &Link, arrival: f64, queue: f64) -> f64 {
    if arrival <= 0.0 {
        return 0.0;
    }
    let s = &link.smoothing;
    let gate = sigmoid(arrival - link.capacity, s.k_rate);
    let excess = 1.0 - link.capacity / arrival;
    let fill = (queue / link.buffer).clamp(0.0, 1.0).powf(s.exponent);
    (gate * excess * fill).clamp(0.0, 1.0)
}

/// Idealized RED: drop probability equals buffer occupancy.
pub fn loss_red(link: &Link, queue: f64) -> f64 {
    (queue / link.buffer).clamp(0.0, 1.0)
}

pub fn link_loss(link: &Link, arrival: f64, queue: f64) -> f64 {
    match link.discipline {
        Discipline::DropTail => loss_droptail(link, arrival, queue),
        Discipline::Red => loss_red(link, queue),
    }
}

/// One link's contribution to a path loss: history index of the link's
/// loss probability and the sender's forward delay to that link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTap {
    pub loss_signal: usize,
    pub forward_delay: f64,
}

/// Loss met by the cohort sent at `send_time`: the sum of each link's loss
/// at the moment the cohort reaches it, clamped to `[0, 1]`.
///
/// Callers only pass send times old enough for every arrival to lie in
/// the past (typically `t - d_i`).
pub fn path_loss(
    taps: &[LossTap],
    send_time: f64,
    history: &SignalHistory,
) -> Result<f64, SolverError> {
    let sum = taps.iter().try_fold(0.0, |acc, tap| {
        Ok::<_, SolverError>(acc + history.lookup(tap.loss_signal, send_time + tap.forward_delay)?)
    })?;
    Ok(sum.clamp(0.0, 1.0))
}
