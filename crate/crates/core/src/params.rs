//! Payoff and contagion constants of the distancing game.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// All payoff/contagion constants of the game.
///
/// * `b` — benefit of ending the round healthy (points)
/// * `c` — cost of practicing distancing (points)
/// * `gamma` — infection probability of a distancing patient zero
/// * `alpha` — per-contact transmission probability
/// * `fine` — points deducted per round of not distancing
/// * `nudge` — informational treatment flag; never enters payoffs
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: serde::de::DeserializeOwned"
))]
pub struct GameParams<S: Scalar> {
    pub n: usize,
    pub b: S,
    pub c: S,
    pub gamma: S,
    pub alpha: S,
    pub fine: S,
    pub nudge: bool,
}

impl<S: Scalar> GameParams<S> {
    pub fn new(n: usize, b: S, c: S, gamma: S, alpha: S, fine: S, nudge: bool) -> Result<Self> {
        let p = GameParams {
            n,
            b,
            c,
            gamma,
            alpha,
            fine,
            nudge,
        };
        p.validate()?;
        Ok(p)
    }

    /// n=5, b=100, c=35, gamma=1/2, alpha=13/20, f=0.
    pub fn default_calibration() -> Self {
        GameParams {
            n: 5,
            b: S::from_int(100),
            c: S::from_int(35),
            gamma: S::from_ratio(1, 2),
            alpha: S::from_ratio(13, 20),
            fine: S::zero(),
            nudge: false,
        }
    }

    pub fn with_fine(mut self, fine: S) -> Self {
        self.fine = fine;
        self
    }

    pub fn with_nudge(mut self, nudge: bool) -> Self {
        self.nudge = nudge;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > crate::graph::MAX_POSITIONS {
            return Err(Error::BadPositionCount(self.n));
        }
        if !(self.b > self.c && self.c > S::zero()) {
            return Err(Error::BadParams(format!(
                "need b > c > 0, got b={}, c={}",
                self.b, self.c
            )));
        }
        if self.gamma < S::zero() || self.gamma >= S::one() {
            return Err(Error::BadParams(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.alpha < S::zero() || self.alpha > S::one() {
            return Err(Error::BadParams(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.fine < S::zero() {
            return Err(Error::BadParams(format!(
                "fine must be nonnegative, got {}",
                self.fine
            )));
        }
        Ok(())
    }
}

impl GameParams<f64> {
    /// Lossy conversion for the simulation layers, which run in f64.
    pub fn from_scalar<S: Scalar>(p: &GameParams<S>) -> Self {
        GameParams {
            n: p.n,
            b: p.b.as_f64(),
            c: p.c.as_f64(),
            gamma: p.gamma.as_f64(),
            alpha: p.alpha.as_f64(),
            fine: p.fine.as_f64(),
            nudge: p.nudge,
        }
    }
}
