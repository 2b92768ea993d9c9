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

//! Unit conventions.
//!
//! Internally everything is expressed in seconds, segments and
//! segments per second. User-facing quantities (Mbps, milliseconds,
//! BDP multiples) are converted at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Default segment size: 1500 bytes.
pub const DEFAULT_SEGMENT_BITS: f64 = 12_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitConventions {
    /// Data volume of one segment, in bits.
    pub segment_size: f64,
}

impl Default for UnitConventions {
    fn default() -> Self {
        Self {
            segment_size: DEFAULT_SEGMENT_BITS,
        }
    }
}

impl UnitConventions {
    pub fn new(segment_size: f64) -> Result<Self, ConfigError> {
        if !(segment_size > 0.0 && segment_size.is_finite()) {
            return Err(ConfigError::invalid(
                "segment_size",
                format!("must be positive, got {segment_size}"),
            ));
        }
        Ok(Self { segment_size })
    }

    /// Megabits per second to segments per second.
    pub fn convert_rate(&self, mbps: f64) -> Result<f64, ConfigError> {
        if !(mbps >= 0.0 && mbps.is_finite()) {
            return Err(ConfigError::invalid(
                "rate",
                format!("must be non-negative, got {mbps} Mbps"),
            ));
        }
        Ok(mbps * 1e6 / self.segment_size)
    }

    /// Segments per second back to megabits per second.
    pub fn rate_to_mbps(&self, segments_per_sec: f64) -> f64 {
        segments_per_sec * self.segment_size / 1e6
    }

    /// Bandwidth-delay product of `capacity` (segments/s) over `rtt` (s), in segments.
    pub fn bdp(&self, capacity: f64, rtt: f64) -> f64 {
        capacity * rtt
    }

    /// A buffer given as a multiple of the BDP, in segments.
    pub fn bdp_multiple_to_segments(&self, multiple: f64, capacity: f64, rtt: f64) -> f64 {
        multiple * self.bdp(capacity, rtt)
    }

    pub fn segments_to_bdp_multiple(&self, segments: f64, capacity: f64, rtt: f64) -> f64 {
        segments / self.bdp(capacity, rtt)
    }
}

pub fn ms(value: f64) -> f64 {
    value * 1e-3
}
