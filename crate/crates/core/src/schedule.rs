//! Regularization (`α_k`) and accuracy (`ε_k`) schedules.
//!
//! Rules have a compact text form that round-trips exactly:
//!
//! | rule                 | text          |
//! |----------------------|---------------|
//! | constant `c`         | `0.1`         |
//! | power `c · k^p`      | `1*k^-1.5`    |
//! | geometric `c · r^k`  | `2*0.5^k`     |
//!
//! `k^-1.5` is accepted as shorthand for `1*k^-1.5`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleRule {
    Constant(f64),
    Power { scale: f64, exponent: f64 },
    Geometric { scale: f64, ratio: f64 },
}

impl ScheduleRule {
    /// Value at iteration `k ≥ 1`.
    pub fn value(&self, k: usize) -> f64 {
        let kf = k as f64;
        match *self {
            ScheduleRule::Constant(c) => c,
            ScheduleRule::Power { scale, exponent } => scale * kf.powf(exponent),
            ScheduleRule::Geometric { scale, ratio } => scale * ratio.powf(kf),
        }
    }

    /// Supremum over `k ≥ 1`, `+∞` when unbounded.
    pub fn supremum(&self) -> f64 {
        match *self {
            ScheduleRule::Constant(c) => c,
            ScheduleRule::Power { scale, exponent } => {
                if exponent <= 0.0 || scale == 0.0 {
                    scale.max(0.0)
                } else {
                    f64::INFINITY
                }
            }
            ScheduleRule::Geometric { scale, ratio } => {
                if ratio <= 1.0 || scale == 0.0 {
                    (scale * ratio).max(0.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn all_positive(&self) -> bool {
        match *self {
            ScheduleRule::Constant(c) => c > 0.0,
            ScheduleRule::Power { scale, .. } => scale > 0.0,
            ScheduleRule::Geometric { scale, ratio } => scale > 0.0 && ratio > 0.0,
        }
    }

    fn all_nonnegative(&self) -> bool {
        match *self {
            ScheduleRule::Constant(c) => c >= 0.0,
            ScheduleRule::Power { scale, .. } => scale >= 0.0,
            ScheduleRule::Geometric { scale, ratio } => scale >= 0.0 && ratio >= 0.0,
        }
    }
}

impl fmt::Display for ScheduleRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScheduleRule::Constant(c) => write!(f, "{c}"),
            ScheduleRule::Power { scale, exponent } => write!(f, "{scale}*k^{exponent}"),
            ScheduleRule::Geometric { scale, ratio } => write!(f, "{scale}*{ratio}^k"),
        }
    }
}

impl FromStr for ScheduleRule {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        let fail = |reason: &str| Error::ScheduleParse {
            input: input.chars().take(64).collect(),
            reason: reason.to_string(),
        };
        let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(fail("empty rule"));
        }
        let number = |t: &str| -> Result<f64> {
            let v: f64 = t.parse().map_err(|_| fail(&format!("`{t}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(fail("numbers must be finite"))
            }
        };

        let (scale, rest) = match s.split_once('*') {
            Some((c, rest)) => (number(c)?, rest),
            None if s.contains('^') => (1.0, s.as_str()),
            None => return Ok(ScheduleRule::Constant(number(&s)?)),
        };
        let (base, power) = rest.split_once('^').ok_or_else(|| fail("expected `^`"))?;
        if base == "k" {
            Ok(ScheduleRule::Power {
                scale,
                exponent: number(power)?,
            })
        } else if power == "k" {
            Ok(ScheduleRule::Geometric {
                scale,
                ratio: number(base)?,
            })
        } else {
            Err(fail("expected `k^p` or `r^k`"))
        }
    }
}

/// The pair of schedules driving the inexact Bregman iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedules {
    alpha: ScheduleRule,
    epsilon: ScheduleRule,
}

impl Schedules {
    /// Validates that `α_k` is positive and bounded and `ε_k` nonnegative.
    pub fn new(alpha: ScheduleRule, epsilon: ScheduleRule) -> Result<Self> {
        if !alpha.all_positive() || !alpha.supremum().is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha schedule `{alpha}` must be positive and bounded"
            )));
        }
        if !epsilon.all_nonnegative() {
            return Err(Error::InvalidParameter(format!(
                "epsilon schedule `{epsilon}` must be nonnegative"
            )));
        }
        Ok(Self { alpha, epsilon })
    }

    pub fn alpha_rule(&self) -> ScheduleRule {
        self.alpha
    }

    pub fn epsilon_rule(&self) -> ScheduleRule {
        self.epsilon
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha.value(k)
    }

    pub fn epsilon(&self, k: usize) -> f64 {
        self.epsilon.value(k)
    }
}

impl Default for Schedules {
    /// `α_k = 0.1`, `ε_k = k^{-3/2}`.
    fn default() -> Self {
        Self {
            alpha: ScheduleRule::Constant(0.1),
            epsilon: ScheduleRule::Power {
                scale: 1.0,
                exponent: -1.5,
            },
        }
    }
}
