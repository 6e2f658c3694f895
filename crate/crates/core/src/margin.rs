//! Signed inequality margins and the report that collects them.

use serde::{Deserialize, Serialize};

use crate::grid::GridFn;

/// Relative tolerance used by every shape and moment margin unless stated.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// Minimum of a quantity that should be nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityMargin {
    pub name: String,
    pub min_margin: f64,
    pub argmin_x: f64,
    pub pass: bool,
    pub tol: f64,
}

impl InequalityMargin {
    pub fn new(name: impl Into<String>, min_margin: f64, argmin_x: f64, tol: f64) -> Self {
        // NaN margins fail.
        let pass = min_margin >= -tol;
        Self { name: name.into(), min_margin, argmin_x, pass, tol }
    }

    /// Margin of a single value with tolerance `rel_tol * max(1, |value|)`.
    pub fn scalar(name: impl Into<String>, value: f64, at: f64, rel_tol: f64) -> Self {
        Self::new(name, value, at, rel_tol * value.abs().max(1.0))
    }

    /// A residual that should vanish, reported as `-|residual|`.
    pub fn equality(name: impl Into<String>, residual: f64, at: f64, tol: f64) -> Self {
        Self::new(name, -residual.abs(), at, tol)
    }
}

/// Samples of a quantity on `[0, pi]` at the nodes that a check covers.
#[derive(Clone, Debug, Default)]
pub struct Checked {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
}

impl Checked {
    pub fn push(&mut self, x: f64, q: f64) {
        self.x.push(x);
        self.q.push(q);
    }

    /// Nodes `lo..=hi` of `q`.
    pub fn nodes(q: &GridFn, lo: usize, hi: usize) -> Self {
        let grid = q.grid();
        let mut c = Self::default();
        for j in lo..=hi {
            c.push(grid.node(j), q.at(j));
        }
        c
    }

    /// Nodes `0..=pi` with the endpoint values replaced by the given limits
    /// and the nodes next to the endpoints dropped.
    pub fn masked(q: &GridFn, at_zero: f64, at_pi: f64) -> Self {
        let grid = q.grid();
        let p = grid.pi_index();
        let mut c = Self::default();
        c.push(0.0, at_zero);
        for j in 2..=p - 2 {
            c.push(grid.node(j), q.at(j));
        }
        c.push(grid.node(p), at_pi);
        c
    }

    fn argmin(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &q) in self.q.iter().enumerate() {
            if q.is_nan() {
                return Some(i);
            }
            if best.is_none_or(|b| q < self.q[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// `max(1, sup |q|)`.
    pub fn scale(&self) -> f64 {
        self.q.iter().fold(1.0f64, |m, q| m.max(q.abs()))
    }

    /// The minimum as a margin with tolerance `rel_tol * scale`.
    ///
    /// When `smooth` holds a band-limited version of the same quantity and
    /// the minimum sits at an interior sample, the minimum is refined on the
    /// interpolant between the neighboring samples, so the reported value
    /// does not depend on where the nodes happen to fall.
    pub fn margin(&self, name: &str, rel_tol: f64, smooth: Option<&GridFn>) -> InequalityMargin {
        let tol = rel_tol * self.scale();
        let Some(i) = self.argmin() else {
            return InequalityMargin::new(name, f64::NAN, f64::NAN, tol);
        };
        let (mut xmin, mut qmin) = (self.x[i], self.q[i]);
        if let Some(g) = smooth {
            if i > 0 && i + 1 < self.x.len() && qmin.is_finite() {
                let interp = g.interpolant();
                let (x, q) = golden_min(|x| interp.eval(x), self.x[i - 1], self.x[i + 1]);
                if q < qmin {
                    xmin = x;
                    qmin = q;
                }
            }
        }
        InequalityMargin::new(name, qmin, xmin, tol)
    }
}

/// Golden-section minimization on `[a, b]`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..80 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Ordered collection of margins; serializes as a plain JSON list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginReport {
    pub margins: Vec<InequalityMargin>,
}

impl MarginReport {
    pub fn push(&mut self, m: InequalityMargin) {
        self.margins.push(m);
    }

    pub fn extend(&mut self, other: MarginReport) {
        self.margins.extend(other.margins);
    }

    pub fn get(&self, name: &str) -> Option<&InequalityMargin> {
        self.margins.iter().find(|m| m.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.margins.iter().all(|m| m.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.margins.iter().filter(|m| !m.pass).map(|m| m.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn pass_flag_follows_tolerance() {
        assert!(InequalityMargin::new("a", -1e-9, 0.0, 1e-8).pass);
        assert!(!InequalityMargin::new("b", -1e-7, 0.0, 1e-8).pass);
        assert!(!InequalityMargin::new("c", f64::NAN, 0.0, 1e-8).pass);
    }

    #[test]
    fn refined_minimum_is_grid_independent() {
        // 1 + cos(x - 1) has its minimum 0 at x = 1 + pi, off the grid.
        let mut mins = Vec::new();
        for m in [64, 128] {
            let g = make_grid(m).unwrap();
            let q = GridFn::from_fn(&g, |x| 1.0 + (x - 1.0).cos());
            let c = Checked::nodes(&q, 0, m - 1);
            let mg = c.margin("q", DEFAULT_REL_TOL, Some(&q));
            assert!((mg.argmin_x - (1.0 + std::f64::consts::PI)).abs() < 1e-6);
            mins.push(mg.min_margin);
        }
        assert!(mins[0].abs() < 1e-14 && mins[1].abs() < 1e-14);
    }

    #[test]
    fn report_serializes_as_list() {
        let mut r = MarginReport::default();
        r.push(InequalityMargin::new("a", 1.0, 0.5, 1e-8));
        let text = r.to_json().unwrap();
        assert!(text.trim_start().starts_with('['));
        let back: MarginReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
