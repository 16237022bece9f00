use serde::{Deserialize, Serialize};

use crate::error::{EhdError, Result};

/// A categorical mark observed at a point in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub mark: usize,
    pub time: f64,
}

impl Event {
    pub fn new(mark: usize, time: f64) -> Self {
        Event { mark, time }
    }
}

/// Time-ordered events observed on `[t0, t_end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub events: Vec<Event>,
    pub t0: f64,
    pub t_end: f64,
}

impl EventSequence {
    pub fn new(events: Vec<Event>, t0: f64, t_end: f64) -> Self {
        EventSequence { events, t0, t_end }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks mark range, window bounds and strict time ordering.
    pub fn validate(&self, marks: usize) -> Result<()> {
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t0 <= self.t_end) {
            return Err(EhdError::InvalidData(format!(
                "bad observation window [{}, {}]",
                self.t0, self.t_end
            )));
        }
        validate_events(&self.events, marks)?;
        if let (Some(first), Some(last)) = (self.events.first(), self.events.last()) {
            if first.time < self.t0 || last.time > self.t_end {
                return Err(EhdError::InvalidData(format!(
                    "events span [{}, {}] outside window [{}, {}]",
                    first.time, last.time, self.t0, self.t_end
                )));
            }
        }
        Ok(())
    }
}

/// Checks mark range and strictly increasing finite times.
pub fn validate_events(events: &[Event], marks: usize) -> Result<()> {
    for (i, e) in events.iter().enumerate() {
        if e.mark >= marks {
            return Err(EhdError::InvalidData(format!(
                "event {i}: mark {} outside [0, {marks})",
                e.mark
            )));
        }
        if !e.time.is_finite() {
            return Err(EhdError::InvalidData(format!("event {i}: non-finite time")));
        }
        if i > 0 && e.time <= events[i - 1].time {
            return Err(EhdError::InvalidData(format!(
                "event {i}: time {} does not follow {}",
                e.time,
                events[i - 1].time
            )));
        }
    }
    Ok(())
}

/// One (history, future) pair cut from a source sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillInstance {
    pub seq_id: u64,
    pub offset: usize,
    pub history: Vec<Event>,
    pub future: Vec<Event>,
}

impl DistillInstance {
    /// Time origin of the window: the first history event.
    pub fn origin(&self) -> f64 {
        self.history.first().or(self.future.first()).map_or(0.0, |e| e.time)
    }

    /// Stable identifier `seq_id:offset`.
    pub fn id(&self) -> String {
        format!("{}:{}", self.seq_id, self.offset)
    }

    pub fn validate(&self, marks: usize) -> Result<()> {
        if self.history.is_empty() || self.future.is_empty() {
            return Err(EhdError::InvalidData(format!(
                "instance {} needs a non-empty history and future",
                self.id()
            )));
        }
        let all: Vec<Event> = self.history.iter().chain(&self.future).copied().collect();
        validate_events(&all, marks).map_err(|e| EhdError::InvalidData(format!("instance {}: {e}", self.id())))
    }

    /// History events whose bit is `false` (kept), in order.
    pub fn kept(&self, distilled: &[bool]) -> Vec<Event> {
        self.history
            .iter()
            .zip(distilled)
            .filter(|(_, &d)| !d)
            .map(|(e, _)| *e)
            .collect()
    }

    /// History events whose bit is `true` (distilled), in order.
    pub fn distilled(&self, distilled: &[bool]) -> Vec<Event> {
        self.history
            .iter()
            .zip(distilled)
            .filter(|(_, &d)| d)
            .map(|(e, _)| *e)
            .collect()
    }
}

/// True when `sub` can be obtained from `full` by deleting events.
pub fn is_subsequence(sub: &[Event], full: &[Event]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|s| it.any(|f| f == s))
}
