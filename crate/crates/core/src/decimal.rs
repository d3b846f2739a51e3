//! Exact decimal parsing into integer load units.
//!
//! Fees and amounts are kept as integers scaled by a fixed power of ten so
//! that all workload aggregation is exact. The default scale of 9 fractional
//! digits matches a gwei-sized smallest unit. Values leave integer space only
//! at the diffusion boundary, where a single division by the scale converts
//! them to floating point.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of fractional decimal digits carried by integer load units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecimalScale(pub u32);

impl Default for DecimalScale {
    fn default() -> Self {
        DecimalScale(9)
    }
}

impl DecimalScale {
    /// 10^scale as an integer.
    pub fn denominator(self) -> u64 {
        10u64.pow(self.0)
    }

    /// Parse a non-negative decimal string into scaled integer units.
    ///
    /// Rejects negative values, malformed input, and inputs with more
    /// fractional digits than the scale can represent.
    pub fn parse(self, s: &str) -> Result<u64> {
        let s = s.trim();
        let bad = |msg: &str| Error::Parse {
            line: 0,
            msg: format!("{msg}: {s:?}"),
        };
        if s.is_empty() {
            return Err(bad("empty decimal"));
        }
        if s.starts_with('-') {
            return Err(bad("negative value"));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad("malformed decimal"));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad("malformed decimal"));
        }
        if frac_part.len() > self.0 as usize {
            // More precision than the configured unit can hold; refuse rather
            // than silently round.
            if frac_part[self.0 as usize..].chars().any(|c| c != '0') {
                return Err(bad("more fractional digits than the decimal scale"));
            }
        }
        let int_units: u64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse::<u64>()
                .map_err(|_| bad("integer part out of range"))?
        };
        let mut frac_units: u64 = 0;
        for (pos, c) in frac_part.chars().take(self.0 as usize).enumerate() {
            let digit = c as u64 - '0' as u64;
            frac_units += digit * 10u64.pow(self.0 - 1 - pos as u32);
        }
        int_units
            .checked_mul(self.denominator())
            .and_then(|v| v.checked_add(frac_units))
            .ok_or_else(|| bad("value out of range"))
    }

    /// Format scaled units back into a canonical decimal string
    /// (no trailing fractional zeros, no fractional point when whole).
    pub fn format(self, units: u64) -> String {
        let denom = self.denominator();
        let whole = units / denom;
        let frac = units % denom;
        if frac == 0 {
            return whole.to_string();
        }
        let mut frac_s = format!("{frac:0width$}", width = self.0 as usize);
        while frac_s.ends_with('0') {
            frac_s.pop();
        }
        format!("{whole}.{frac_s}")
    }

    /// Convert scaled units to the floating-point value used by diffusion.
    pub fn to_f64(self, units: u64) -> f64 {
        units as f64 / self.denominator() as f64
    }
}
