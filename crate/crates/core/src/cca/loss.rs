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

//! Reno and CUBIC window dynamics.

/// CUBIC scaling constant c.
pub const CUBIC_C: f64 = 0.4;
/// CUBIC multiplicative decrease b.
pub const CUBIC_BETA: f64 = 0.7;

/// Reno: one segment per RTT of acknowledged data, halve per loss.
/// `rate` and `loss` are the sender rate and path loss one round trip ago.
pub fn reno_window_derivative(window: f64, rate: f64, loss: f64) -> f64 {
    rate * (1.0 - loss) / window - rate * loss * window / 2.0
}

/// Derivatives of the time since the last loss and of the window at the
/// last loss.
pub fn cubic_aux_derivatives(
    since_loss: f64,
    w_max: f64,
    window: f64,
    rate: f64,
    loss: f64,
) -> (f64, f64) {
    let loss_events = rate * loss;
    (
        1.0 - since_loss * loss_events,
        (window - w_max) * loss_events,
    )
}

/// CUBIC growth function, clamped below by `floor`.
pub fn cubic_window(since_loss: f64, w_max: f64, floor: f64) -> f64 {
    let k = (w_max * CUBIC_BETA / CUBIC_C).cbrt();
    let w = CUBIC_C * (since_loss - k).powi(3) + w_max;
    w.max(floor)
}

pub fn window_rate(window: f64, latency: f64) -> f64 {
    window / latency
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reno_examples() {
        let (w, tau) = (20.0, 0.05);
        assert!((reno_window_derivative(w, w / tau, 0.0) - 1.0 / tau).abs() < 1e-12);
        assert_eq!(reno_window_derivative(w, 0.0, 0.3), 0.0);
    }

    #[test]
    fn reno_fixed_point() {
        // Closed form: w^2 = 2 (1 - p) / p.
        let p: f64 = 0.02;
        let w = (2.0 * (1.0 - p) / p).sqrt();
        assert!((w - 98f64.sqrt()).abs() < 1e-12);
        assert!(reno_window_derivative(w, 123.0, p).abs() < 1e-12);

        // Integrate with a frozen loss and a rate tied to the window.
        let tau = 0.04;
        let mut x = 2.0;
        let h = 1e-4;
        for _ in 0..(200.0 / h) as usize {
            x += h * reno_window_derivative(x, x / tau, p);
        }
        assert!((x - w).abs() < 1e-6, "{x}");
    }

    #[test]
    fn cubic_aux_examples() {
        assert_eq!(
            cubic_aux_derivatives(3.0, 50.0, 40.0, 100.0, 0.0),
            (1.0, 0.0)
        );
        let (ds, _) = cubic_aux_derivatives(2.0, 50.0, 40.0, 50.0, 0.01);
        assert!(ds.abs() < 1e-15);
        let (_, dw) = cubic_aux_derivatives(2.0, 50.0, 50.0, 50.0, 0.01);
        assert_eq!(dw, 0.0);
    }

    #[test]
    fn cubic_window_examples() {
        let w_max: f64 = 100.0;
        let k = (w_max * CUBIC_BETA / CUBIC_C).cbrt();
        assert!((cubic_window(k, w_max, 1.0) - w_max).abs() < 1e-12);
        // Right after a loss the window is (1 - b) w_max.
        assert!((cubic_window(0.0, w_max, 1.0) - 30.0).abs() < 1e-9);
        assert!((cubic_window(2.0, 0.0, 0.0) - CUBIC_C * 8.0).abs() < 1e-12);
        assert_eq!(cubic_window(0.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn cubic_curvature_changes_sign_once() {
        let w_max: f64 = 200.0;
        let h = 1e-3;
        let mut signs = Vec::new();
        let mut s = h;
        while s < 20.0 {
            let d2 = cubic_window(s + h, w_max, 1.0) - 2.0 * cubic_window(s, w_max, 1.0)
                + cubic_window(s - h, w_max, 1.0);
            if d2.abs() > 1e-9 {
                signs.push(d2 > 0.0);
            }
            s += h;
        }
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
        assert!(!signs[0] && *signs.last().unwrap());
    }

    #[test]
    fn window_rate_examples() {
        assert_eq!(window_rate(100.0, 0.01), 10_000.0);
        assert_eq!(window_rate(1.0, 0.02), 50.0);
        assert_eq!(window_rate(100.0, 0.02), 0.5 * window_rate(100.0, 0.01));
    }
}
