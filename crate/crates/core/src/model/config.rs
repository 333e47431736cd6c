use serde::{Deserialize, Serialize};

use super::{ConnType, ModelError};

/// Every scalar of the single-cell model.
///
/// Subchannel quantities are integers; rates are per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Subchannels in the cell.
    pub channels: u32,
    /// Subchannels held back for recovering calls only.
    pub recovery_reserve: u32,
    /// Subchannels held back for recovering and handoff calls.
    pub handoff_reserve: u32,
    /// Subchannels used by a wide-band (T1) connection.
    pub t1_subchannels: u32,
    /// Subchannels used by a narrow-band (T2) connection.
    pub t2_subchannels: u32,
    /// Connection arrival rate per user.
    pub call_rate: f64,
    /// Probability that a new connection is T1.
    pub t1_share: f64,
    /// Probability that a new connection is T2.
    pub t2_share: f64,
    /// Reciprocal mean T1 connection duration.
    pub t1_end_rate: f64,
    /// Reciprocal mean T2 connection duration.
    pub t2_end_rate: f64,
    /// Reciprocal mean cell residence time. Zero switches mobility off.
    pub residence_rate: f64,
    /// Users in the cell.
    pub users: u32,
    /// Context feedback (conversion) period in seconds.
    pub period: f64,
    /// Substates per macro state in the stair approximation of the period.
    pub stairs: u32,
    /// Subchannels withdrawn from a background connection per period.
    pub withdraw_step: u32,
    /// Average data rate of one subchannel (bits/s).
    pub subchannel_bitrate: f64,
}

impl Default for ModelConfig {
    /// The reference cell used throughout the test suite.
    fn default() -> Self {
        Self {
            channels: 8,
            recovery_reserve: 1,
            handoff_reserve: 2,
            t1_subchannels: 2,
            t2_subchannels: 1,
            call_rate: 0.5,
            t1_share: 0.5,
            t2_share: 0.5,
            t1_end_rate: 1.0,
            t2_end_rate: 1.0,
            residence_rate: 0.2,
            users: 4,
            period: 1.0,
            stairs: 16,
            withdraw_step: 1,
            subchannel_bitrate: 1.0,
        }
    }
}

const SHARE_TOLERANCE: f64 = 1e-12;

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &str, reason: String| {
            Err(ModelError::InvalidConfig { field: field.to_string(), reason })
        };

        if self.recovery_reserve > self.handoff_reserve {
            return bad(
                "recovery_reserve",
                format!(
                    "guard nesting requires recovery_reserve <= handoff_reserve ({} > {})",
                    self.recovery_reserve, self.handoff_reserve
                ),
            );
        }
        if self.handoff_reserve > self.channels {
            return bad(
                "handoff_reserve",
                format!(
                    "guard nesting requires handoff_reserve <= channels ({} > {})",
                    self.handoff_reserve, self.channels
                ),
            );
        }
        if self.t2_subchannels < 1 {
            return bad("t2_subchannels", "must be at least 1".into());
        }
        if self.t1_subchannels <= self.t2_subchannels {
            return bad(
                "t1_subchannels",
                format!(
                    "must exceed t2_subchannels ({} <= {})",
                    self.t1_subchannels, self.t2_subchannels
                ),
            );
        }
        for (field, p) in [("t1_share", self.t1_share), ("t2_share", self.t2_share)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(field, format!("must lie in [0, 1], got {p}"));
            }
        }
        if (self.t1_share + self.t2_share - 1.0).abs() > SHARE_TOLERANCE {
            return bad(
                "t2_share",
                format!("t1_share + t2_share must equal 1, got {}", self.t1_share + self.t2_share),
            );
        }
        for (field, v) in [
            ("t1_end_rate", self.t1_end_rate),
            ("t2_end_rate", self.t2_end_rate),
            ("period", self.period),
            ("subchannel_bitrate", self.subchannel_bitrate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, format!("must be positive and finite, got {v}"));
            }
        }
        // a silent cell or one without mobility is still a well-defined chain
        for (field, v) in [("call_rate", self.call_rate), ("residence_rate", self.residence_rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, format!("must be nonnegative and finite, got {v}"));
            }
        }
        if self.stairs < 1 {
            return bad("stairs", "must be at least 1".into());
        }
        if self.withdraw_step < 1 {
            return bad("withdraw_step", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn width(&self, ty: ConnType) -> u32 {
        match ty {
            ConnType::T1 => self.t1_subchannels,
            ConnType::T2 => self.t2_subchannels,
        }
    }

    pub fn share(&self, ty: ConnType) -> f64 {
        match ty {
            ConnType::T1 => self.t1_share,
            ConnType::T2 => self.t2_share,
        }
    }

    pub fn end_rate(&self, ty: ConnType) -> f64 {
        match ty {
            ConnType::T1 => self.t1_end_rate,
            ConnType::T2 => self.t2_end_rate,
        }
    }

    /// Rate of one stair step, `M / tau`.
    pub fn stair_rate(&self) -> f64 {
        f64::from(self.stairs) / self.period
    }

    /// Highest load after admitting a new call.
    pub fn new_call_limit(&self) -> u32 {
        self.channels - self.handoff_reserve
    }

    /// Highest load after admitting a handoff.
    pub fn handoff_limit(&self) -> u32 {
        self.channels - self.recovery_reserve
    }

    /// Names of the numeric fields, in declaration order.
    pub const FIELDS: [&'static str; 16] = [
        "channels",
        "recovery_reserve",
        "handoff_reserve",
        "t1_subchannels",
        "t2_subchannels",
        "call_rate",
        "t1_share",
        "t2_share",
        "t1_end_rate",
        "t2_end_rate",
        "residence_rate",
        "users",
        "period",
        "stairs",
        "withdraw_step",
        "subchannel_bitrate",
    ];

    /// Sets a field by name. Integer fields reject fractional or negative values.
    pub fn set_field(&mut self, field: &str, value: f64) -> Result<(), ModelError> {
        let as_int = |v: f64| -> Result<u32, ModelError> {
            if v.fract() != 0.0 || v < 0.0 || v > f64::from(u32::MAX) {
                Err(ModelError::InvalidConfig {
                    field: field.to_string(),
                    reason: format!("expects a nonnegative integer, got {v}"),
                })
            } else {
                Ok(v as u32)
            }
        };
        match field {
            "channels" => self.channels = as_int(value)?,
            "recovery_reserve" => self.recovery_reserve = as_int(value)?,
            "handoff_reserve" => self.handoff_reserve = as_int(value)?,
            "t1_subchannels" => self.t1_subchannels = as_int(value)?,
            "t2_subchannels" => self.t2_subchannels = as_int(value)?,
            "users" => self.users = as_int(value)?,
            "stairs" => self.stairs = as_int(value)?,
            "withdraw_step" => self.withdraw_step = as_int(value)?,
            "call_rate" => self.call_rate = value,
            "t1_share" => self.t1_share = value,
            "t2_share" => self.t2_share = value,
            "t1_end_rate" => self.t1_end_rate = value,
            "t2_end_rate" => self.t2_end_rate = value,
            "residence_rate" => self.residence_rate = value,
            "period" => self.period = value,
            "subchannel_bitrate" => self.subchannel_bitrate = value,
            other => {
                return Err(ModelError::UnknownField(other.to_string()));
            }
        }
        Ok(())
    }
}
