use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Follower,
}

/// Index into the game's agent set. Index 0 is always the leader.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId(usize);

impl AgentId {
    pub const LEADER: AgentId = AgentId(0);

    pub fn new(index: usize) -> Self {
        AgentId(index)
    }

    /// Follower at zero-based position `position` (agent index `position + 1`).
    pub fn follower(position: usize) -> Self {
        AgentId(position + 1)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn role(self) -> Role {
        if self.0 == 0 {
            Role::Leader
        } else {
            Role::Follower
        }
    }

    /// Zero-based follower position, `None` for the leader.
    pub fn follower_position(self) -> Option<usize> {
        self.0.checked_sub(1)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role() {
            Role::Leader => write!(f, "leader"),
            Role::Follower => write!(f, "follower {}", self.0),
        }
    }
}

/// Leader-controlled environment parameters. Every write is clamped into the
/// per-component bounds; the dimension is fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Characteristics {
    values: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl Characteristics {
    pub fn new(values: Vec<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if values.len() != bounds.len() {
            return Err(Error::param(format!(
                "characteristics has {} values but {} bounds",
                values.len(),
                bounds.len()
            )));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::param(format!("invalid bound [{lo}, {hi}]")));
            }
        }
        let mut c = Characteristics {
            values: vec![0.0; bounds.len()],
            bounds,
        };
        c.set(&values)?;
        Ok(c)
    }

    /// Lower corner of the bounds.
    pub fn at_lower(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let values = bounds.iter().map(|b| b.0).collect();
        Self::new(values, bounds)
    }

    pub fn set(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.bounds.len() {
            return Err(Error::param(format!(
                "expected {} characteristics, got {}",
                self.bounds.len(),
                values.len()
            )));
        }
        for (slot, (&v, &(lo, hi))) in self.values.iter_mut().zip(values.iter().zip(&self.bounds)) {
            if v.is_nan() {
                return Err(Error::param("characteristic value is NaN"));
            }
            *slot = v.clamp(lo, hi);
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(Vec<(f64, f64)>),
}

impl ActionSpace {
    pub fn contains(&self, action: &ActionValue) -> bool {
        match (self, action) {
            (ActionSpace::Discrete(k), ActionValue::Discrete(i)) => i < k,
            (ActionSpace::Continuous(bounds), ActionValue::Continuous(v)) => {
                v.len() == bounds.len()
                    && v.iter().zip(bounds).all(|(x, &(lo, hi))| *x >= lo && *x <= hi)
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionValue {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl ActionValue {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            ActionValue::Discrete(i) => Some(*i),
            ActionValue::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            ActionValue::Continuous(v) => Some(v),
            ActionValue::Discrete(_) => None,
        }
    }
}

/// One environment step from a single agent's perspective.
///
/// `action` is `None` on steps where the agent did not act (the leader between
/// decision points); the reward is still recorded so it can be credited to the
/// preceding decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Observation,
    pub action: Option<ActionValue>,
    /// Sample in the policy's own coordinates; `log_prob` refers to this.
    pub sample: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent: AgentId,
    pub horizon: usize,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new(agent: AgentId, horizon: usize) -> Self {
        Trajectory {
            agent,
            horizon,
            transitions: Vec::with_capacity(horizon),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    /// Discounted return of the recorded rewards; 0 for an empty trajectory.
    pub fn discounted_return(&self, gamma: f64) -> Result<f64> {
        if self.transitions.is_empty() {
            return Ok(0.0);
        }
        discounted_return(&self.rewards(), gamma)
    }

    pub fn decisions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.action.is_some())
    }
}

/// `Σ_t γ^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param(format!("discount {gamma} outside [0, 1]")));
    }
    if rewards.is_empty() {
        return Err(Error::param("discounted return of an empty reward list"));
    }
    // Horner form from the back keeps γ = 0 exact.
    Ok(rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc))
}
