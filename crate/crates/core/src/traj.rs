//! Time-stamped trajectories with per-sample invariant diagnostics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: Vec<f64>,
    pub diagnostics: Vec<f64>,
}

/// Events worth surfacing alongside the samples, e.g. chart changes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub t: f64,
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub diagnostic_labels: Vec<String>,
    pub samples: Vec<Sample>,
    pub events: Vec<TrajectoryEvent>,
}

impl Trajectory {
    pub fn new(labels: Vec<String>, diagnostic_labels: Vec<String>) -> Self {
        Trajectory {
            labels,
            diagnostic_labels,
            samples: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: Vec<f64>, diagnostics: Vec<f64>) {
        debug_assert_eq!(state.len(), self.labels.len());
        debug_assert_eq!(diagnostics.len(), self.diagnostic_labels.len());
        self.samples.push(Sample {
            t,
            state,
            diagnostics,
        });
    }

    pub fn record_event(&mut self, t: f64, description: impl Into<String>) {
        self.events.push(TrajectoryEvent {
            t,
            description: description.into(),
        });
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.samples.last().map(|s| s.state.as_slice())
    }

    /// Largest absolute value a diagnostic column attains along the run.
    pub fn max_diagnostic(&self, name: &str) -> Option<f64> {
        let idx = self.diagnostic_labels.iter().position(|l| l == name)?;
        Some(
            self.samples
                .iter()
                .fold(0.0, |m, s| m.max(s.diagnostics[idx].abs())),
        )
    }

    /// State column by label.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.labels.iter().position(|l| l == name)?;
        Some(self.samples.iter().map(|s| s.state[idx]).collect())
    }
}
