use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Axis-aligned box. As an obstacle only its open interior is blocked, so
/// points on its faces are feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl AaBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Self {
        Self { min, max }
    }

    fn contains_open(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(x, (lo, hi))| x > lo && x < hi)
    }

    /// Parameter in `[0, 1]` at which the segment `p + t·d` first enters the
    /// open interior, if it does.
    fn entry_time(&self, p: &[f64], d: &[f64]) -> Option<f64> {
        let mut t_in = 0.0f64;
        let mut t_out = 1.0f64;
        for i in 0..p.len() {
            let (lo, hi) = (self.min[i], self.max[i]);
            if d[i] == 0.0 {
                if !(p[i] > lo && p[i] < hi) {
                    return None;
                }
            } else {
                let a = (lo - p[i]) / d[i];
                let b = (hi - p[i]) / d[i];
                let (near, far) = if a < b { (a, b) } else { (b, a) };
                t_in = t_in.max(near);
                t_out = t_out.min(far);
            }
        }
        (t_in < t_out).then_some(t_in)
    }
}

/// Closed rectangular domain with open rectangular obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub obstacles: Vec<AaBox>,
}

impl Geometry {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, obstacles: Vec<AaBox>) -> Result<Self> {
        check_dim("domain upper bound", lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config("domain lower bound must be below upper bound".into()));
        }
        for o in &obstacles {
            check_dim("obstacle min", lower.len(), o.min.len())?;
            check_dim("obstacle max", lower.len(), o.max.len())?;
        }
        Ok(Self {
            lower,
            upper,
            obstacles,
        })
    }

    pub fn is_feasible(&self, p: &[f64]) -> bool {
        p.len() == self.lower.len()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| x.is_finite() && x >= lo && x <= hi)
            && !self.obstacles.iter().any(|o| o.contains_open(p))
    }

    /// Moves from `p` along `d`, stopping at the first contact with the domain
    /// boundary or an obstacle. The result is feasible whenever `p` is.
    pub fn blocked_move(&self, p: &[f64], d: &[f64]) -> Vec<f64> {
        let mut t = 1.0f64;
        for i in 0..p.len() {
            if d[i] > 0.0 {
                t = t.min((self.upper[i] - p[i]) / d[i]);
            } else if d[i] < 0.0 {
                t = t.min((self.lower[i] - p[i]) / d[i]);
            }
        }
        for o in &self.obstacles {
            if let Some(hit) = o.entry_time(p, d) {
                t = t.min(hit);
            }
        }
        let t = t.clamp(0.0, 1.0);
        let at = |t: f64| -> Vec<f64> { p.iter().zip(d).map(|(x, dx)| x + t * dx).collect() };
        let candidate = at(t);
        if self.is_feasible(&candidate) {
            return candidate;
        }
        // Rounding put the contact point a hair inside; back off.
        let mut back = 1e-12;
        while back < t {
            let c = at(t - back);
            if self.is_feasible(&c) {
                return c;
            }
            back *= 4.0;
        }
        p.to_vec()
    }
}
