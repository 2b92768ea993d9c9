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

//! Reduced BBR models for a single bottleneck: fixed points, Jacobians
//! and their spectra, and direct integration to check convergence.
//!
//! The reduced models drop ProbeRTT and replace the periodic bandwidth
//! update by continuous assimilation `ẋ_btl = x_max − x_btl`, where
//! `x_max` is the delivery rate an agent sees while probing against the
//! others' steady traffic.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{AnalysisError, SolverError};
use crate::solver::{integrate, DdeSystem, IntegrationSettings, SignalHistory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BbrVersion {
    V1,
    V2,
}

/// Bandwidth estimates and bottleneck queue.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedState {
    pub x_btl: Vec<f64>,
    pub q: f64,
}

/// N BBR agents behind one bottleneck with no queue elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedModel {
    pub version: BbrVersion,
    pub capacity: f64,
    /// Round-trip propagation delay of each agent.
    pub delays: Vec<f64>,
    /// Queue cap; `None` for a buffer that never fills.
    pub buffer: Option<f64>,
}

impl ReducedModel {
    pub fn new(
        version: BbrVersion,
        capacity: f64,
        delays: Vec<f64>,
    ) -> Result<Self, AnalysisError> {
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(AnalysisError::parameter("capacity", "must be positive"));
        }
        if delays.is_empty() {
            return Err(AnalysisError::parameter("n", "need at least one agent"));
        }
        if delays.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(AnalysisError::parameter("delay", "must be positive"));
        }
        Ok(Self {
            version,
            capacity,
            delays,
            buffer: None,
        })
    }

    pub fn homogeneous(
        version: BbrVersion,
        n: usize,
        capacity: f64,
        delay: f64,
    ) -> Result<Self, AnalysisError> {
        Self::new(version, capacity, vec![delay; n])
    }

    pub fn with_buffer(mut self, buffer: f64) -> Self {
        self.buffer = Some(buffer);
        self
    }

    pub fn n(&self) -> usize {
        self.delays.len()
    }

    /// Window-to-RTT ratio of agent `i`: `2d/(d + q/C)` for BBRv1 (two
    /// estimated BDPs in flight), `d/(d + q/C)` for BBRv2.
    pub fn window_ratio(&self, i: usize, q: f64) -> f64 {
        let d = self.delays[i];
        let r = d / (d + q / self.capacity);
        match self.version {
            BbrVersion::V1 => 2.0 * r,
            BbrVersion::V2 => r,
        }
    }

    /// Steady (non-probing) rate of agent `i`.
    pub fn steady_rate(&self, i: usize, x_btl: f64, q: f64) -> f64 {
        self.window_ratio(i, q).min(1.0) * x_btl
    }

    /// Rate of agent `i` while probing.
    pub fn pulse_rate(&self, i: usize, x_btl: f64, q: f64) -> f64 {
        let r = self.window_ratio(i, q);
        match self.version {
            BbrVersion::V1 => r.min(1.25) * x_btl,
            BbrVersion::V2 => 1.25 * r.min(1.0) * x_btl,
        }
    }

    /// Largest delivery rate each agent measures while probing. With a
    /// backlog, or when the probe itself saturates the link, the agent
    /// gets its share of the capacity; otherwise everything it sends.
    pub fn x_max(&self, s: &ReducedState) -> Vec<f64> {
        let steady: Vec<f64> = (0..self.n())
            .map(|i| self.steady_rate(i, s.x_btl[i], s.q))
            .collect();
        let total: f64 = steady.iter().sum();
        (0..self.n())
            .map(|i| {
                let pulse = self.pulse_rate(i, s.x_btl[i], s.q);
                let arrival = pulse + total - steady[i];
                if s.q > 0.0 || arrival > self.capacity {
                    pulse * self.capacity / arrival
                } else {
                    pulse
                }
            })
            .collect()
    }

    /// Aggregate steady arrival rate at the bottleneck.
    pub fn arrival(&self, s: &ReducedState) -> f64 {
        (0..self.n())
            .map(|i| self.steady_rate(i, s.x_btl[i], s.q))
            .sum()
    }

    /// Time derivative of the state. The queue derivative is clamped at
    /// an empty and (if set) a full buffer.
    pub fn rhs(&self, s: &ReducedState) -> ReducedState {
        let x_btl = self
            .x_max(s)
            .iter()
            .zip(&s.x_btl)
            .map(|(m, x)| m - x)
            .collect();
        let mut q = self.arrival(s) - self.capacity;
        if (s.q <= 0.0 && q < 0.0) || self.buffer.is_some_and(|b| s.q >= b && q > 0.0) {
            q = 0.0;
        }
        ReducedState { x_btl, q }
    }
}

// ---------------------------------------------------------------------------
// Closed-form equilibria

fn check_n_c(n: usize, capacity: f64) -> Result<(), AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::parameter("n", "need at least one agent"));
    }
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(AnalysisError::parameter("capacity", "must be positive"));
    }
    Ok(())
}

fn check_delay(delay: f64) -> Result<(), AnalysisError> {
    if !(delay > 0.0 && delay.is_finite()) {
        return Err(AnalysisError::parameter("delay", "must be positive"));
    }
    Ok(())
}

/// BBRv1 with a deep buffer: the queue holds one propagation delay worth
/// of data and the estimates may split the capacity in any way.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeepEquilibrium {
    pub q: f64,
    /// Required sum of the bandwidth estimates.
    pub rate_sum: f64,
}

pub fn equilibrium_bbr1_deep(
    n: usize,
    capacity: f64,
    delays: &[f64],
) -> Result<DeepEquilibrium, AnalysisError> {
    check_n_c(n, capacity)?;
    if delays.len() != n {
        return Err(AnalysisError::parameter(
            "delay",
            format!("expected {n} delays"),
        ));
    }
    let d = delays[0];
    check_delay(d)?;
    if delays.iter().any(|x| (x - d).abs() > 1e-12 * d) {
        return Err(AnalysisError::parameter(
            "delay",
            "the closed form needs equal propagation delays",
        ));
    }
    Ok(DeepEquilibrium {
        q: d * capacity,
        rate_sum: capacity,
    })
}

/// Residual of the deep-buffer conditions for a given split.
pub fn bbr1_deep_residual(model: &ReducedModel, s: &ReducedState) -> f64 {
    let r = model.rhs(s);
    let arrival = model.arrival(s) - model.capacity;
    r.x_btl
        .iter()
        .map(|v| v.abs())
        .fold(arrival.abs(), f64::max)
        / model.capacity
}

/// BBRv1 with a shallow buffer: every agent estimates `5C/(4N+1)`.
pub fn equilibrium_bbr1_shallow(n: usize, capacity: f64) -> Result<f64, AnalysisError> {
    check_n_c(n, capacity)?;
    Ok(5.0 * capacity / (4.0 * n as f64 + 1.0))
}

/// Loss fraction implied by the shallow-buffer equilibrium.
pub fn bbr1_shallow_loss(n: usize) -> f64 {
    (n as f64 - 1.0) / (5.0 * n as f64)
}

/// BBRv2 fair equilibrium: `(x*, q*)`.
pub fn equilibrium_bbr2(n: usize, capacity: f64, delay: f64) -> Result<(f64, f64), AnalysisError> {
    check_n_c(n, capacity)?;
    check_delay(delay)?;
    let nf = n as f64;
    Ok((
        5.0 * capacity / (4.0 * nf + 1.0),
        (nf - 1.0) / (4.0 * nf + 1.0) * delay * capacity,
    ))
}

// ---------------------------------------------------------------------------
// Matrices and spectra

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AnalysisError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(AnalysisError::BadMatrix);
        }
        Ok(Self {
            n,
            data: rows.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .map(|r| r.to_vec())
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Jacobian of the aggregate (arrival rate, queue) dynamics of BBRv1 at
/// the deep-buffer equilibrium.
pub fn jacobian_bbr1(delay: f64) -> Result<Matrix, AnalysisError> {
    check_delay(delay)?;
    let a = 1.0 / (2.0 * delay);
    Matrix::from_rows(&[vec![-a - 1.0, -a], vec![1.0, 0.0]])
}

/// Jacobian of the bandwidth estimates of BBRv1 at the shallow-buffer
/// equilibrium.
pub fn jacobian_bbr1_shallow(n: usize) -> Result<Matrix, AnalysisError> {
    check_n_c(n, 1.0)?;
    let k = 4.0 * n as f64 + 1.0;
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = if i == j { -5.0 / k } else { -4.0 / k };
        }
    }
    Ok(m)
}

/// Jacobian of the (sending rates, queue) dynamics of BBRv2 at its fair
/// equilibrium; the last row and column belong to the queue.
pub fn jacobian_bbr2(n: usize, delay: f64) -> Result<Matrix, AnalysisError> {
    check_n_c(n, 1.0)?;
    check_delay(delay)?;
    let nf = n as f64;
    let k = 4.0 * nf + 1.0;
    let a = k / (5.0 * nf * nf * delay);
    let mut m = Matrix::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = if i == j { -a - 5.0 / k } else { -a - 4.0 / k };
        }
        m[(i, n)] = -a;
        m[(n, i)] = 1.0;
    }
    Ok(m)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn numeric_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], rel_step: f64) -> Matrix {
    let n = x.len();
    let mut m = Matrix::zeros(n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..n {
            m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    m
}

/// An eigenvalue with the residual of its eigenvector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    /// `‖Av − λv‖ / (‖A‖ ‖v‖)`.
    pub residual: f64,
}

/// Largest matrix handled by [`eigenvalues_dense`].
pub const MAX_EIGEN_DIM: usize = 64;

/// Full spectrum of a real square matrix: balancing, reduction to upper
/// Hessenberg form, then shifted QR iteration. Each eigenvalue comes with
/// the residual of an eigenvector found by inverse iteration.
pub fn eigenvalues_dense(a: &Matrix) -> Result<Vec<EigenPair>, AnalysisError> {
    let n = a.n;
    if n == 0 || n > MAX_EIGEN_DIM || a.data.len() != n * n || a.data.iter().any(|v| !v.is_finite())
    {
        return Err(AnalysisError::BadMatrix);
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    let values = hessenberg_qr(&mut h)?;
    let norm = a.frobenius().max(f64::MIN_POSITIVE);
    Ok(values
        .into_iter()
        .map(|value| EigenPair {
            value,
            residual: eigen_residual(a, value, norm),
        })
        .collect())
}

/// Scales rows and columns by powers of two to even out their norms.
fn balance(a: &mut Matrix) {
    let n = a.n;
    let radix = 2.0f64;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / radix;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= radix;
                    c *= sqrdx;
                }
                g = r * radix;
                while c > g {
                    f /= radix;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by Gaussian elimination with
/// pivoting (a similarity transform).
fn hessenberg(a: &mut Matrix) {
    let n = a.n;
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0f64;
        let mut piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in (m - 1)..n {
                a.data.swap(piv * n + j, m * n + j);
            }
            for j in 0..n {
                a.data.swap(j * n + piv, j * n + m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = 0.0;
                    for j in m..n {
                        a[(i, j)] -= y * a[(m, j)];
                    }
                    for j in 0..n {
                        a[(j, m)] += y * a[(j, i)];
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[(i, j)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
fn hessenberg_qr(h: &mut Matrix) -> Result<Vec<Complex64>, AnalysisError> {
    const MAX_ITS: usize = 60;
    let n = h.n;
    // 1-based view keeps the classic index arithmetic readable.
    let idx = |i: usize, j: usize| (i - 1) * n + (j - 1);
    let a = &mut h.data;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[idx(i, j)].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[idx(l - 1, l - 1)].abs() + a[idx(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[idx(l, l - 1)].abs() + s == s {
                    a[idx(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[idx(nn, nn)];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                let mut y = a[idx(nn - 1, nn - 1)];
                let mut w = a[idx(nn, nn - 1)] * a[idx(nn - 1, nn)];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == MAX_ITS {
                        return Err(AnalysisError::NoConvergence { iterations: its });
                    }
                    if its == 10 || its == 20 || its == 40 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            a[idx(i, i)] -= x;
                        }
                        let s = a[idx(nn, nn - 1)].abs() + a[idx(nn - 1, nn - 2)].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    let mut z;
                    loop {
                        z = a[idx(m, m)];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[idx(m + 1, m)] + a[idx(m, m + 1)];
                        q = a[idx(m + 1, m + 1)] - z - rr - ss;
                        r = a[idx(m + 2, m + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[idx(m, m - 1)].abs() * (q.abs() + r.abs());
                        let v = p.abs()
                            * (a[idx(m - 1, m - 1)].abs() + z.abs() + a[idx(m + 1, m + 1)].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a[idx(i, i - 2)] = 0.0;
                        if i != m + 2 {
                            a[idx(i, i - 3)] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = a[idx(k, k - 1)];
                            q = a[idx(k + 1, k - 1)];
                            r = 0.0;
                            if k != nn - 1 {
                                r = a[idx(k + 2, k - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[idx(k, k - 1)] = -a[idx(k, k - 1)];
                                }
                            } else {
                                a[idx(k, k - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                let mut pp = a[idx(k, j)] + q * a[idx(k + 1, j)];
                                if k != nn - 1 {
                                    pp += r * a[idx(k + 2, j)];
                                    a[idx(k + 2, j)] -= pp * z;
                                }
                                a[idx(k + 1, j)] -= pp * y;
                                a[idx(k, j)] -= pp * x;
                            }
                            let mmin = nn.min(k + 3);
                            for i in l..=mmin {
                                let mut pp = x * a[idx(i, k)] + y * a[idx(i, k + 1)];
                                if k != nn - 1 {
                                    pp += z * a[idx(i, k + 2)];
                                    a[idx(i, k + 2)] -= pp * r;
                                }
                                a[idx(i, k + 1)] -= pp * q;
                                a[idx(i, k)] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 1 || l + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

/// Solves `m x = b` in place by Gaussian elimination with partial
/// pivoting; zero pivots are nudged to `tiny`.
fn solve_complex(m: &mut [Complex64], b: &mut [Complex64], n: usize, tiny: f64) {
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| m[i * n + k].norm().total_cmp(&m[j * n + k].norm()))
            .unwrap_or(k);
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            b.swap(k, piv);
        }
        if m[k * n + k].norm() < tiny {
            m[k * n + k] = Complex64::new(tiny, 0.0);
        }
        let d = m[k * n + k];
        for i in (k + 1)..n {
            let f = m[i * n + k] / d;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k..n {
                let v = m[k * n + j];
                m[i * n + j] -= f * v;
            }
            let v = b[k];
            b[i] -= f * v;
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in (k + 1)..n {
            s -= m[k * n + j] * b[j];
        }
        b[k] = s / m[k * n + k];
    }
}

/// Relative residual of the eigenvector inverse iteration finds for `lambda`.
fn eigen_residual(a: &Matrix, lambda: Complex64, norm: f64) -> f64 {
    let n = a.n;
    let tiny = f64::EPSILON * norm;
    // a fixed, generic start vector keeps the result deterministic
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + 0.37 * i as f64, 0.11 * (i % 3) as f64))
        .collect();
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let mut m: Vec<Complex64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let diag = if i == j {
                    lambda
                } else {
                    Complex64::new(0.0, 0.0)
                };
                Complex64::new(a.data[k], 0.0) - diag
            })
            .collect();
        solve_complex(&mut m, &mut v, n, tiny);
        let len = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(len > 0.0 && len.is_finite()) {
            break;
        }
        v.iter_mut().for_each(|c| *c /= len);
        let mut res = 0.0;
        for i in 0..n {
            let mut s = -lambda * v[i];
            for j in 0..n {
                s += a[(i, j)] * v[j];
            }
            res += s.norm_sqr();
        }
        best = best.min(res.sqrt() / norm);
    }
    best
}

/// Largest real part of a spectrum.
pub fn spectral_abscissa(spectrum: &[EigenPair]) -> f64 {
    spectrum
        .iter()
        .map(|e| e.value.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The two roots of `λ² + bλ + c = 0`, ordered by real part.
pub fn quadratic_roots(b: f64, c: f64) -> (Complex64, Complex64) {
    let disc = Complex64::new(b * b - 4.0 * c, 0.0).sqrt();
    let r1 = (-b - disc) / 2.0;
    let r2 = (-b + disc) / 2.0;
    if r1.re <= r2.re {
        (r1, r2)
    } else {
        (r2, r1)
    }
}

// ---------------------------------------------------------------------------
// Trajectories

struct ReducedSystem<'a> {
    model: &'a ReducedModel,
    initial: &'a ReducedState,
}

impl ReducedSystem<'_> {
    fn unpack(&self, state: &[f64]) -> ReducedState {
        let n = self.model.n();
        ReducedState {
            x_btl: state[..n].to_vec(),
            q: state[n],
        }
    }
}

impl DdeSystem for ReducedSystem<'_> {
    fn state_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.model.n()).map(|i| format!("xbtl_{i}")).collect();
        v.push("q".into());
        v
    }

    fn signal_names(&self) -> Vec<String> {
        self.state_names()
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut v = self.initial.x_btl.clone();
        v.push(self.initial.q);
        v
    }

    fn horizon(&self) -> f64 {
        0.0
    }

    fn min_delay(&self) -> Option<f64> {
        None
    }

    fn record(&self, _: f64, state: &[f64], h: &mut SignalHistory) -> Result<(), SolverError> {
        for (k, v) in state.iter().enumerate() {
            h.set(k, *v);
        }
        Ok(())
    }

    fn derivatives(
        &self,
        _t: f64,
        state: &[f64],
        _h: &SignalHistory,
        out: &mut [f64],
    ) -> Result<(), SolverError> {
        let d = self.model.rhs(&self.unpack(state));
        let n = self.model.n();
        out[..n].copy_from_slice(&d.x_btl);
        out[n] = d.q;
        Ok(())
    }

    fn post_step(&self, _t: f64, _previous: &[f64], state: &mut [f64]) {
        let n = self.model.n();
        let b = self.model.buffer.unwrap_or(f64::INFINITY);
        state[n] = state[n].clamp(0.0, b);
    }
}

/// Sampled trajectory of a reduced model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    pub states: Vec<ReducedState>,
    /// Largest derivative component at the end, relative to capacity.
    pub final_residual: f64,
}

impl ConvergenceReport {
    pub fn final_state(&self) -> &ReducedState {
        self.states.last().expect("at least the initial sample")
    }

    /// Largest relative deviation of the estimates from `target` at each
    /// sample.
    pub fn rate_error(&self, target: &[f64]) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| {
                s.x_btl
                    .iter()
                    .zip(target)
                    .map(|(x, t)| ((x - t) / t).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// First sample time after which the rate error stays below `tol`.
    pub fn settling_time(&self, target: &[f64], tol: f64) -> Option<f64> {
        let err = self.rate_error(target);
        let last_bad = err.iter().rposition(|&e| e >= tol);
        match last_bad {
            None => self.times.first().copied(),
            Some(k) if k + 1 < self.times.len() => Some(self.times[k + 1]),
            Some(_) => None,
        }
    }
}

/// Integrates a reduced model from `initial` for `horizon` time units
/// with explicit Euler steps of `step`, sampling every `sample` units.
pub fn convergence_check(
    model: &ReducedModel,
    initial: &ReducedState,
    horizon: f64,
    step: f64,
    sample: f64,
) -> Result<ConvergenceReport, AnalysisError> {
    if initial.x_btl.len() != model.n() {
        return Err(AnalysisError::parameter(
            "initial",
            "one estimate per agent",
        ));
    }
    if initial.x_btl.iter().any(|x| !(*x > 0.0)) || !(initial.q >= 0.0) {
        return Err(AnalysisError::parameter(
            "initial",
            "must lie in the positive orthant",
        ));
    }
    if !(step > 0.0 && horizon > 0.0 && sample >= step) {
        return Err(AnalysisError::parameter(
            "step",
            "need 0 < step <= sample and horizon > 0",
        ));
    }
    let system = ReducedSystem { model, initial };
    let settings = IntegrationSettings {
        step,
        duration: horizon,
        sample_interval: sample,
        record_from: 0.0,
    };
    let trace = integrate(&system, &settings).map_err(|e| match e {
        SolverError::NonFinite { time, .. } => AnalysisError::Diverged { time },
        other => AnalysisError::parameter("solver", other.to_string()),
    })?;
    let n = model.n();
    let cols: Vec<&[f64]> = system
        .state_names()
        .iter()
        .map(|name| trace.column(name).expect("state column"))
        .collect();
    let mut states = Vec::with_capacity(trace.len());
    for (k, &t) in trace.times().iter().enumerate() {
        let s = ReducedState {
            x_btl: (0..n).map(|i| cols[i][k]).collect(),
            q: cols[n][k],
        };
        if s.x_btl
            .iter()
            .chain([&s.q])
            .any(|v| v.abs() > 1e12 * model.capacity)
        {
            return Err(AnalysisError::Diverged { time: t });
        }
        states.push(s);
    }
    let last = states.last().cloned().unwrap_or_else(|| initial.clone());
    let r = model.rhs(&last);
    let final_residual = r
        .x_btl
        .iter()
        .chain([&r.q])
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        / model.capacity;
    Ok(ConvergenceReport {
        times: trace.times().to_vec(),
        states,
        final_residual,
    })
}

/// Fixed point of a reduced model by damped iteration of its dynamics,
/// usable for heterogeneous delays where no closed form exists. Returns
/// the state and the final relative residual.
pub fn find_equilibrium(
    model: &ReducedModel,
    initial: &ReducedState,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(ReducedState, f64), AnalysisError> {
    let damping = 0.2;
    let mut s = initial.clone();
    let b = model.buffer.unwrap_or(f64::INFINITY);
    let d_max = model.delays.iter().copied().fold(0.0, f64::max);
    for _ in 0..max_iterations {
        let r = model.rhs(&s);
        let residual = r
            .x_btl
            .iter()
            .chain([&r.q])
            .map(|v| v.abs())
            .fold(0.0, f64::max)
            / model.capacity;
        if residual < tolerance {
            return Ok((s, residual));
        }
        for (x, dx) in s.x_btl.iter_mut().zip(&r.x_btl) {
            *x = (*x + damping * dx).max(f64::MIN_POSITIVE);
        }
        // the queue moves on the slower of the two time scales
        s.q = (s.q + damping * d_max.min(1.0) * r.q).clamp(0.0, b);
    }
    Err(AnalysisError::NoConvergence {
        iterations: max_iterations,
    })
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisKind {
    Bbr1Deep,
    Bbr1Shallow,
    Bbr2,
}

impl std::str::FromStr for AnalysisKind {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bbr1-deep" => Ok(Self::Bbr1Deep),
            "bbr1-shallow" => Ok(Self::Bbr1Shallow),
            "bbr2" => Ok(Self::Bbr2),
            other => Err(AnalysisError::parameter(
                "cca",
                format!("unknown model `{other}`; expected bbr1-deep, bbr1-shallow or bbr2"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenValueReport {
    pub value: ComplexValue,
    pub residual: f64,
}

/// Closed-form values to compare the numerics with.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct References {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_btl: Option<f64>,
    pub q: f64,
    pub lambda_max: f64,
    /// Eigenvalues with their multiplicities.
    pub spectrum: Vec<(f64, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub model: AnalysisKind,
    pub n: usize,
    pub capacity: f64,
    pub delay: f64,
    /// Equilibrium estimates. For the deep BBRv1 model any split with the
    /// required sum is an equilibrium; the equal split is shown.
    pub x_btl: Vec<f64>,
    pub q: f64,
    /// Constraint on the sum of estimates, where the split is free.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_sum: Option<f64>,
    /// Largest violation of the equilibrium conditions, relative to capacity.
    pub residual: f64,
    pub jacobian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<EigenValueReport>,
    pub lambda_max: f64,
    pub stable: bool,
    pub reference: References,
}

/// Equilibrium, Jacobian and spectrum of one of the reduced models.
pub fn analyze(
    kind: AnalysisKind,
    n: usize,
    capacity: f64,
    delay: f64,
) -> Result<EquilibriumReport, AnalysisError> {
    check_n_c(n, capacity)?;
    check_delay(delay)?;
    let nf = n as f64;
    let k = 4.0 * nf + 1.0;
    let (x_btl, q, rate_sum, residual, jacobian, reference) = match kind {
        AnalysisKind::Bbr1Deep => {
            let eq = equilibrium_bbr1_deep(n, capacity, &vec![delay; n])?;
            let model = ReducedModel::homogeneous(BbrVersion::V1, n, capacity, delay)?;
            let s = ReducedState {
                x_btl: vec![capacity / nf; n],
                q: eq.q,
            };
            let (l1, l2): (f64, f64) = (-1.0, -1.0 / (2.0 * delay));
            let reference = References {
                x_btl: None,
                q: eq.q,
                lambda_max: l1.max(l2),
                spectrum: if l1 == l2 {
                    vec![(l1, 2)]
                } else {
                    vec![(l1, 1), (l2, 1)]
                },
                loss_rate: None,
            };
            (
                s.x_btl.clone(),
                eq.q,
                Some(eq.rate_sum),
                bbr1_deep_residual(&model, &s),
                jacobian_bbr1(delay)?,
                reference,
            )
        }
        AnalysisKind::Bbr1Shallow => {
            let x = equilibrium_bbr1_shallow(n, capacity)?;
            // any backlog short of 3/5 of a propagation delay keeps the
            // window limit slack; a tenth is representative
            let q = 0.1 * delay * capacity;
            let model =
                ReducedModel::homogeneous(BbrVersion::V1, n, capacity, delay)?.with_buffer(q);
            let s = ReducedState {
                x_btl: vec![x; n],
                q,
            };
            let r = model.rhs(&s);
            let residual = r.x_btl.iter().map(|v| v.abs()).fold(0.0, f64::max) / capacity;
            let mut spectrum = vec![(-1.0, 1)];
            if n > 1 {
                spectrum.insert(0, (-1.0 / k, n - 1));
            }
            let reference = References {
                x_btl: Some(x),
                q,
                lambda_max: if n > 1 { -1.0 / k } else { -1.0 },
                spectrum,
                loss_rate: Some(bbr1_shallow_loss(n)),
            };
            (
                s.x_btl,
                q,
                None,
                residual,
                jacobian_bbr1_shallow(n)?,
                reference,
            )
        }
        AnalysisKind::Bbr2 => {
            let (x, q) = equilibrium_bbr2(n, capacity, delay)?;
            let model = ReducedModel::homogeneous(BbrVersion::V2, n, capacity, delay)?;
            let s = ReducedState {
                x_btl: vec![x; n],
                q,
            };
            let r = model.rhs(&s);
            let queue_balance = (model.arrival(&s) - capacity).abs();
            let residual = r
                .x_btl
                .iter()
                .map(|v| v.abs())
                .fold(queue_balance, f64::max)
                / capacity;
            let fast = -k / (5.0 * nf * delay);
            let mut spectrum = vec![(-1.0, 1), (fast, 1)];
            if n > 1 {
                spectrum.push((-1.0 / k, n - 1));
            }
            let reference = References {
                x_btl: Some(x),
                q,
                lambda_max: spectrum
                    .iter()
                    .map(|s| s.0)
                    .fold(f64::NEG_INFINITY, f64::max),
                spectrum,
                loss_rate: None,
            };
            (
                s.x_btl,
                q,
                None,
                residual,
                jacobian_bbr2(n, delay)?,
                reference,
            )
        }
    };
    let spectrum = eigenvalues_dense(&jacobian)?;
    let lambda_max = spectral_abscissa(&spectrum);
    Ok(EquilibriumReport {
        model: kind,
        n,
        capacity,
        delay,
        x_btl,
        q,
        rate_sum,
        residual,
        jacobian: jacobian.rows(),
        eigenvalues: spectrum
            .iter()
            .map(|e| EigenValueReport {
                value: ComplexValue {
                    re: e.value.re,
                    im: e.value.im,
                },
                residual: e.residual,
            })
            .collect(),
        lambda_max,
        stable: lambda_max < 0.0,
        reference,
    })
}
