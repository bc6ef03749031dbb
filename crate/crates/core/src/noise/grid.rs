use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid whose nodes are integer multiples of `dt`.
///
/// Node `i` sits at `(first + i) * dt`, so `t = 0` is always an exact node when
/// the grid straddles the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    first: i64,
    n_steps: usize,
    dt: f64,
}

fn as_multiple(t: f64, dt: f64, what: &str) -> Result<i64> {
    let k = (t / dt).round();
    if (k * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Error::config(format!(
            "{what} = {t} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(k as i64)
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= t_start) {
            return Err(Error::config(format!(
                "t_end ({t_end}) must not precede t_start ({t_start})"
            )));
        }
        let first = as_multiple(t_start, dt, "t_start")?;
        let last = as_multiple(t_end, dt, "t_end")?;
        Ok(Self {
            first,
            n_steps: (last - first) as usize,
            dt,
        })
    }

    /// Grid covering `[-past, future]`.
    pub fn two_sided(past: f64, future: f64, dt: f64) -> Result<Self> {
        Self::new(-past, future, dt)
    }

    pub(crate) fn from_raw(first: i64, n_steps: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { first, n_steps, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn t_start(&self) -> f64 {
        self.first as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        (self.first + self.n_steps as i64) as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        (self.first + i as i64) as f64 * self.dt
    }

    pub fn first_index(&self) -> i64 {
        self.first
    }

    /// Index of the node at time zero, if the grid contains it.
    pub fn zero_index(&self) -> Option<usize> {
        let i = -self.first;
        (i >= 0 && i as usize <= self.n_steps).then_some(i as usize)
    }

    /// Index of the node at time `t` (must be a grid node).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = as_multiple(t, self.dt, "t")?;
        let i = k - self.first;
        if i < 0 || i as usize > self.n_steps {
            return Err(Error::range(format!(
                "t = {t} outside grid [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        Ok(i as usize)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |i| self.time(i))
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start() - 1e-12 && t <= self.t_end() + 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_an_exact_node() {
        let g = TimeGrid::new(-1.0, 2.0, 0.1).unwrap();
        let i0 = g.zero_index().unwrap();
        assert_eq!(g.time(i0), 0.0);
        assert_eq!(g.n_nodes(), 31);
        assert!((g.t_end() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(matches!(TimeGrid::new(0.0, 1.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(TimeGrid::new(0.0, 1.0, -0.5), Err(Error::Config(_))));
        assert!(TimeGrid::new(-0.05, 1.0, 0.1).is_err());
    }

    #[test]
    fn forward_grid_has_origin_at_zero() {
        let g = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        assert_eq!(g.zero_index(), Some(0));
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.index_of(1.0).unwrap(), 2);
        assert!(g.index_of(1.5).is_err());
    }
}
