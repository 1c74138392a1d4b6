use crate::error::{invalid, LabError, Result};
use crate::grid::{Field, GridSpec, Sample};

/// Anything that lives on a grid.
pub trait OnGrid {
    fn grid(&self) -> &GridSpec;
}

impl<T: Sample> OnGrid for Field<T> {
    fn grid(&self) -> &GridSpec {
        Field::grid(self)
    }
}

/// Time samples of an evolving state; times strictly increase and all
/// states share one grid.
#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    times: Vec<f64>,
    states: Vec<S>,
}

impl<S> Default for Trajectory<S> {
    fn default() -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
        }
    }
}

impl<S: OnGrid> Trajectory<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, state: S) -> Result<()> {
        if !t.is_finite() {
            return Err(LabError::NonFinite("trajectory time"));
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(invalid("t", format!("{t} does not follow {last}")));
            }
            self.states[0].grid().ensure_same(state.grid())?;
        }
        self.times.push(t);
        self.states.push(state);
        Ok(())
    }

    pub fn from_parts(times: Vec<f64>, states: Vec<S>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(LabError::LengthMismatch {
                expected: times.len(),
                got: states.len(),
            });
        }
        let mut t = Self::new();
        for (a, b) in times.into_iter().zip(states) {
            t.push(a, b)?;
        }
        Ok(t)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &S)> {
        self.times.last().map(|t| (*t, self.states.last().unwrap()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &S)> {
        self.times.iter().copied().zip(self.states.iter())
    }

    /// Whether two trajectories share sample times (to 1e-12 relative).
    pub fn aligned_with<T: OnGrid>(&self, other: &Trajectory<T>) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }
}
