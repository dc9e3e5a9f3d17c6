//! Survey session state machine.
//!
//! A session is a pure function of its event log: the creation record fixes
//! the seed and protocol, and every later state follows from the issued
//! queries and recorded answers. Posteriors are resampled deterministically
//! from `(seed, dataset)`, so replay reproduces them exactly.

use fareopt_core::learning::{validation_accuracy, LearningError};
use fareopt_core::protocol::Protocol;
use fareopt_core::{OptionSet, Posterior, ResponseRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyCondition {
    PrePandemic,
    PostPandemic,
}

impl SurveyCondition {
    pub fn label(self) -> &'static str {
        match self {
            SurveyCondition::PrePandemic => "pre",
            SurveyCondition::PostPandemic => "post",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantMeta {
    pub residence: String,
    #[serde(default)]
    pub prior_covid_infection: bool,
    /// Missing counts as not given.
    #[serde(default)]
    pub consent: bool,
    /// Whether the participant can drive their own car; decides which
    /// options they face when their posterior is used for fare optimization.
    #[serde(default)]
    pub car_owner: bool,
}

/// Position in the protocol. Indices count from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phase {
    Active { index: usize, of: usize },
    RandomHoldout { index: usize, of: usize },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created { v: u32, id: String, meta: ParticipantMeta, condition: SurveyCondition, seed: u64, protocol: Protocol<f64> },
    QueryIssued { step: usize, query: OptionSet },
    Answered { step: usize, choice: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("participant consent is required")]
    ConsentRequired,
    #[error("session is complete")]
    SessionDone,
    #[error("session is not complete yet")]
    NotDone,
    #[error("no query is pending; fetch one first")]
    NoPendingQuery,
    #[error("answer is for step {got} but the pending query is step {expected}")]
    StaleStep { expected: usize, got: usize },
    #[error("choice {index} out of range for {len} options")]
    ChoiceOutOfRange { index: usize, len: usize },
    #[error("option {0} is dominated by another option of the same mode")]
    DominatedChoice(usize),
    #[error("event log is inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Learning(#[from] LearningError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub meta: ParticipantMeta,
    pub condition: SurveyCondition,
    pub seed: u64,
    pub protocol: Protocol<f64>,
    /// Answers to active queries; the posterior conditions on these only.
    pub dataset: Vec<ResponseRecord>,
    /// Answers to hold-out queries, used for validation.
    pub holdout: Vec<ResponseRecord>,
    pub pending: Option<OptionSet>,
    pub posterior: Posterior,
}

impl Session {
    /// New session with the prior as posterior.
    pub fn create(id: String, meta: ParticipantMeta, condition: SurveyCondition, seed: u64, protocol: Protocol<f64>) -> Result<(Self, Event), SessionError> {
        if !meta.consent {
            return Err(SessionError::ConsentRequired);
        }
        let posterior = protocol.posterior(&[], seed)?;
        let event = Event::Created { v: 1, id: id.clone(), meta: meta.clone(), condition, seed, protocol: protocol.clone() };
        Ok((Self { id, meta, condition, seed, protocol, dataset: Vec::new(), holdout: Vec::new(), pending: None, posterior }, event))
    }

    /// Number of answered queries; also the step of the next query.
    pub fn step(&self) -> usize {
        self.dataset.len() + self.holdout.len()
    }

    pub fn phase(&self) -> Phase {
        let (a, h) = (self.protocol.active_queries, self.protocol.holdout_queries);
        if self.dataset.len() < a {
            Phase::Active { index: self.dataset.len() + 1, of: a }
        } else if self.holdout.len() < h {
            Phase::RandomHoldout { index: self.holdout.len() + 1, of: h }
        } else {
            Phase::Done
        }
    }

    /// The pending query, generating it if needed. The event is `Some` only
    /// when a new query was generated.
    pub fn query(&mut self) -> Result<(OptionSet, Option<Event>), SessionError> {
        if let Some(q) = &self.pending {
            return Ok((q.clone(), None));
        }
        let query = match self.phase() {
            Phase::Active { index, .. } => self.protocol.active_query(&self.posterior, self.seed, index - 1)?,
            Phase::RandomHoldout { index, .. } => self.protocol.holdout_query(self.seed, index - 1),
            Phase::Done => return Err(SessionError::SessionDone),
        };
        self.pending = Some(query.clone());
        Ok((query.clone(), Some(Event::QueryIssued { step: self.step(), query })))
    }

    /// Checks an answer against the pending query without changing state.
    pub fn check_answer(&self, choice: usize, step: Option<usize>) -> Result<Event, SessionError> {
        if self.phase() == Phase::Done {
            return Err(SessionError::SessionDone);
        }
        let Some(query) = &self.pending else { return Err(SessionError::NoPendingQuery) };
        if let Some(got) = step {
            if got != self.step() {
                return Err(SessionError::StaleStep { expected: self.step(), got });
            }
        }
        ResponseRecord::new(query.clone(), choice).map_err(|e| match e {
            LearningError::ChoiceOutOfRange { index, len } => SessionError::ChoiceOutOfRange { index, len },
            LearningError::DominatedChoice(i) => SessionError::DominatedChoice(i),
            other => SessionError::Learning(other),
        })?;
        Ok(Event::Answered { step: self.step(), choice })
    }

    /// Records a checked answer. In the active phase the posterior is
    /// resampled before returning.
    pub fn record_answer(&mut self, choice: usize) -> Result<(), SessionError> {
        let query = self.pending.take().ok_or(SessionError::NoPendingQuery)?;
        let record = ResponseRecord::new(query, choice)?;
        match self.phase() {
            Phase::Active { .. } => {
                self.dataset.push(record);
                self.posterior = self.protocol.posterior(&self.dataset, self.seed)?;
            }
            Phase::RandomHoldout { .. } => self.holdout.push(record),
            Phase::Done => return Err(SessionError::SessionDone),
        }
        Ok(())
    }

    /// Rebuilds a session from its event log.
    pub fn replay(events: &[Event]) -> Result<Self, SessionError> {
        let corrupt = |m: &str| SessionError::Corrupt(m.to_string());
        let mut it = events.iter();
        let Some(Event::Created { id, meta, condition, seed, protocol, .. }) = it.next() else {
            return Err(corrupt("log does not start with a creation record"));
        };
        let (mut s, _) = Session::create(id.clone(), meta.clone(), *condition, *seed, protocol.clone())?;
        for e in it {
            match e {
                Event::Created { .. } => return Err(corrupt("duplicate creation record")),
                Event::QueryIssued { step, query } => {
                    if *step != s.step() || s.pending.is_some() {
                        return Err(corrupt("query issued out of order"));
                    }
                    s.pending = Some(query.clone());
                }
                Event::Answered { step, choice } => {
                    if *step != s.step() {
                        return Err(corrupt("answer out of order"));
                    }
                    s.record_answer(*choice)?;
                }
            }
        }
        Ok(s)
    }

    pub fn results(&self) -> Result<SessionResults, SessionError> {
        if self.phase() != Phase::Done {
            return Err(SessionError::NotDone);
        }
        let accuracy = validation_accuracy(&self.posterior, &self.holdout, &self.protocol.scales)?;
        let entry = fareopt_core::UserEntry {
            id: self.id.clone(),
            car_owner: self.meta.car_owner,
            condition: Some(self.condition.label().to_string()),
            posterior: self.posterior.clone(),
        };
        let mut population = fareopt_core::Population::new(vec![entry], self.protocol.scales);
        population.label = Some(format!("survey session {}", self.id));
        Ok(SessionResults {
            v: 1,
            id: self.id.clone(),
            condition: self.condition,
            posterior_mean: self.posterior.mean().0,
            validation_accuracy: accuracy,
            dataset: self.dataset.clone(),
            holdout: self.holdout.clone(),
            population,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResults {
    pub v: u32,
    pub id: String,
    pub condition: SurveyCondition,
    pub posterior_mean: [f64; 7],
    /// Share of hold-out answers the posterior predicts; absent with no hold-out.
    pub validation_accuracy: Option<f64>,
    pub dataset: Vec<ResponseRecord>,
    pub holdout: Vec<ResponseRecord>,
    /// One-user population file for the fare optimizer.
    pub population: fareopt_core::Population,
}
