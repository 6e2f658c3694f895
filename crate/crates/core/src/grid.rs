//! Uniform periodic grid on the torus with Fourier differentiation,
//! trapezoid quadrature and band-limited interpolation.
//!
//! Differentiation uses the dense Fourier differentiation matrix, applied in
//! its circulant form. The first-derivative matrix is antisymmetric, so each
//! row is evaluated as `sum_d c_d (f[i-d] - f[i+d])`; pairing the samples
//! before multiplying keeps the roundoff proportional to the local variation
//! of `f` rather than to its magnitude.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

#[derive(Debug)]
pub struct TorusGrid {
    m: usize,
    spacing: f64,
    nodes: Vec<f64>,
    /// `diff1[d]` for d = 0..M/2: circulant weights of the first derivative.
    diff1: Vec<f64>,
    /// Full circulant column of the squared first-derivative matrix.
    diff2: Vec<f64>,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
}

pub fn make_grid(m: usize) -> Result<Arc<TorusGrid>> {
    TorusGrid::new(m).map(Arc::new)
}

impl TorusGrid {
    pub fn new(m: usize) -> Result<Self> {
        if !m.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("M must be even, got {m}")));
        }
        if m < MIN_NODES {
            return Err(Error::InvalidGrid(format!("M must be at least {MIN_NODES}, got {m}")));
        }
        let mf = m as f64;
        let spacing = 2.0 * PI / mf;
        // x_j = pi * (2j/M) puts node M/2 exactly on pi.
        let nodes: Vec<f64> = (0..m).map(|j| PI * (2.0 * j as f64 / mf)).collect();
        // Tables from exact integer angle reduction, so they carry no trace of
        // the rounding in x_j (which the second derivative would amplify).
        let sin_table: Vec<f64> = (0..m).map(|j| sin_pi_ratio(2 * j, m)).collect();
        let cos_table: Vec<f64> = (0..m).map(|j| sin_pi_ratio(2 * j + m / 2, m)).collect();

        let half = m / 2;
        let mut diff1 = vec![0.0; half + 1];
        for (d, c) in diff1.iter_mut().enumerate().take(half).skip(1) {
            let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
            *c = 0.5 * sign / (0.5 * d as f64 * spacing).tan();
        }

        // Square of the first-derivative matrix: the second derivative of the
        // periodic sinc interpolant minus its Nyquist component.
        let quarter = mf / 4.0;
        let mut diff2 = vec![0.0; m];
        diff2[0] = -PI * PI / (3.0 * spacing * spacing) - 1.0 / 6.0 + quarter;
        for (d, c) in diff2.iter_mut().enumerate().skip(1) {
            let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
            let s = (0.5 * d as f64 * spacing).sin();
            *c = sign * (quarter - 0.5 / (s * s));
        }

        Ok(Self { m, spacing, nodes, diff1, diff2, cos_table, sin_table })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    /// Index of the node at x = pi.
    pub fn pi_index(&self) -> usize {
        self.m / 2
    }

    /// `cos(x_j)` with exact zeros and units where the node allows.
    pub fn cos_at(&self, j: usize) -> f64 {
        self.cos_table[j % self.m]
    }

    pub fn sin_at(&self, j: usize) -> f64 {
        self.sin_table[j % self.m]
    }

    /// Mirror index of `j` about 0 (i.e. the node at `-x_j`).
    pub fn mirror(&self, j: usize) -> usize {
        (self.m - j) % self.m
    }

    /// Applies the Fourier first derivative to raw samples.
    pub fn diff_slice(&self, f: &[f64], out: &mut [f64]) {
        let m = self.m;
        debug_assert_eq!(f.len(), m);
        debug_assert_eq!(out.len(), m);
        let half = m / 2;
        let mut ext = Vec::with_capacity(2 * m);
        ext.extend_from_slice(f);
        ext.extend_from_slice(f);
        for (i, o) in out.iter_mut().enumerate() {
            let centre = i + m;
            let mut acc = 0.0;
            for d in 1..half {
                acc += self.diff1[d] * (ext[centre - d] - ext[i + d]);
            }
            *o = acc;
        }
    }

    /// Circulant entry of the first-derivative matrix, `D[i][j] = entry(i - j)`.
    pub(crate) fn diff1_entry(&self, offset: usize) -> f64 {
        let m = self.m;
        let d = offset % m;
        if d == 0 || d == m / 2 {
            0.0
        } else if d < m / 2 {
            self.diff1[d]
        } else {
            -self.diff1[m - d]
        }
    }

    /// Circulant entry of the squared first-derivative matrix.
    pub(crate) fn diff2_entry(&self, offset: usize) -> f64 {
        self.diff2[offset % self.m]
    }

    /// Fourier coefficients `(a_k, b_k)` for k = 0..=M/2 so that the
    /// interpolant is `a_0 + sum_k a_k cos(kx) + b_k sin(kx)`.
    fn fourier_coefficients(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let half = m / 2;
        let mf = m as f64;
        let mut a = vec![0.0; half + 1];
        let mut b = vec![0.0; half + 1];
        for k in 0..=half {
            let mut ca = 0.0;
            let mut cb = 0.0;
            for (j, fj) in f.iter().enumerate() {
                let idx = (k * j) % m;
                ca += fj * self.cos_table[idx];
                cb += fj * self.sin_table[idx];
            }
            let w = if k == 0 || k == half { 1.0 / mf } else { 2.0 / mf };
            a[k] = w * ca;
            b[k] = if k == 0 || k == half { 0.0 } else { w * cb };
        }
        (a, b)
    }
}

/// Real samples of a function on a [`TorusGrid`].
#[derive(Clone, Debug)]
pub struct GridFn {
    grid: Arc<TorusGrid>,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(grid: Arc<TorusGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec(grid: &Arc<TorusGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid: Arc::clone(grid), values }
    }

    pub fn from_fn(grid: &Arc<TorusGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::from_vec(grid, values)
    }

    pub fn constant(grid: &Arc<TorusGrid>, c: f64) -> Self {
        Self::from_vec(grid, vec![c; grid.len()])
    }

    pub fn cos(grid: &Arc<TorusGrid>) -> Self {
        Self::from_vec(grid, (0..grid.len()).map(|j| grid.cos_at(j)).collect())
    }

    pub fn sin(grid: &Arc<TorusGrid>) -> Self {
        Self::from_vec(grid, (0..grid.len()).map(|j| grid.sin_at(j)).collect())
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, j: usize) -> f64 {
        self.values[j % self.values.len()]
    }

    /// Spectral derivative; exact for trigonometric polynomials of degree < M/2.
    pub fn diff(&self) -> GridFn {
        let mut out = vec![0.0; self.len()];
        self.grid.diff_slice(&self.values, &mut out);
        Self::from_vec(&self.grid, out)
    }

    /// Periodic trapezoid rule over one full period.
    pub fn integrate(&self) -> f64 {
        self.grid.spacing() * self.values.iter().sum::<f64>()
    }

    /// Band-limited interpolation at an arbitrary angle.
    pub fn eval_offgrid(&self, x: f64) -> f64 {
        self.interpolant().eval(x)
    }

    pub fn interpolant(&self) -> TrigInterpolant {
        let (a, b) = self.grid.fourier_coefficients(&self.values);
        TrigInterpolant { cos_coef: a, sin_coef: b, nyquist: self.grid.len() / 2 }
    }

    /// `x -> int_0^x f` sampled at the nodes, computed from the interpolant.
    pub fn cumulative_integral(&self) -> GridFn {
        let interp = self.interpolant();
        Self::from_fn(&self.grid, |x| interp.integral_from_zero(x))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        Self::from_vec(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise map that also receives the node angle.
    pub fn map_with_x(&self, f: impl Fn(f64, f64) -> f64) -> GridFn {
        let values = self
            .values
            .iter()
            .zip(self.grid.nodes())
            .map(|(&v, &x)| f(x, v))
            .collect();
        Self::from_vec(&self.grid, values)
    }

    pub fn zip_map(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> GridFn {
        debug_assert_eq!(self.len(), other.len());
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::from_vec(&self.grid, values)
    }

    pub fn scale(&self, c: f64) -> GridFn {
        self.map(|v| c * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &GridFn) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest violation of `f(-x) = f(x)`.
    pub fn even_defect(&self) -> f64 {
        (0..self.len()).fold(0.0, |m, j| {
            m.max((self.values[j] - self.values[self.grid.mirror(j)]).abs())
        })
    }

    /// Largest violation of `f(-x) = -f(x)`.
    pub fn odd_defect(&self) -> f64 {
        (0..self.len()).fold(0.0, |m, j| {
            m.max((self.values[j] + self.values[self.grid.mirror(j)]).abs())
        })
    }

    /// Largest violation of `f(pi + y) = f(pi - y)`.
    pub fn even_about_pi_defect(&self) -> f64 {
        let m = self.len();
        let p = m / 2;
        (0..m).fold(0.0, |acc, j| {
            acc.max((self.values[(p + j) % m] - self.values[(p + m - j) % m]).abs())
        })
    }

    /// Largest violation of `f(pi + y) = -f(pi - y)`.
    pub fn odd_about_pi_defect(&self) -> f64 {
        let m = self.len();
        let p = m / 2;
        (0..m).fold(0.0, |acc, j| {
            acc.max((self.values[(p + j) % m] + self.values[(p + m - j) % m]).abs())
        })
    }

    /// Replaces `f` by `(f(x) + f(-x)) / 2`, returning the largest change.
    pub fn symmetrize_even(&mut self) -> f64 {
        let m = self.len();
        let mut defect: f64 = 0.0;
        for j in 1..m / 2 {
            let k = m - j;
            let mean = 0.5 * (self.values[j] + self.values[k]);
            defect = defect.max((self.values[j] - mean).abs());
            self.values[j] = mean;
            self.values[k] = mean;
        }
        defect
    }
}

/// `sin(pi * num / den)` with the angle reduced in integer arithmetic.
fn sin_pi_ratio(num: usize, den: usize) -> f64 {
    let mut n = num % (2 * den);
    let mut sign = 1.0;
    if n >= den {
        n -= den;
        sign = -1.0;
    }
    if 2 * n > den {
        n = den - n;
    }
    if n == 0 {
        return 0.0;
    }
    if 2 * n == den {
        return sign;
    }
    sign * (PI * n as f64 / den as f64).sin()
}

impl Add for &GridFn {
    type Output = GridFn;
    fn add(self, rhs: &GridFn) -> GridFn {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &GridFn {
    type Output = GridFn;
    fn sub(self, rhs: &GridFn) -> GridFn {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &GridFn {
    type Output = GridFn;
    fn mul(self, rhs: &GridFn) -> GridFn {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Neg for &GridFn {
    type Output = GridFn;
    fn neg(self) -> GridFn {
        self.map(|v| -v)
    }
}

/// Trigonometric interpolant `a_0 + sum_{k>=1} a_k cos(kx) + b_k sin(kx)`.
#[derive(Clone, Debug)]
pub struct TrigInterpolant {
    cos_coef: Vec<f64>,
    sin_coef: Vec<f64>,
    nyquist: usize,
}

impl TrigInterpolant {
    /// Drops trailing modes whose coefficients are below `rel_tol` times the
    /// largest one. Used to make repeated evaluation cheap.
    pub fn truncated(mut self, rel_tol: f64) -> Self {
        let scale = self
            .cos_coef
            .iter()
            .chain(&self.sin_coef)
            .fold(0.0f64, |m, c| m.max(c.abs()));
        let cut = rel_tol * scale;
        let mut last = 0;
        for k in 0..self.cos_coef.len() {
            if self.cos_coef[k].abs() > cut || self.sin_coef[k].abs() > cut {
                last = k;
            }
        }
        self.cos_coef.truncate(last + 1);
        self.sin_coef.truncate(last + 1);
        self
    }

    pub fn degree(&self) -> usize {
        self.cos_coef.len().saturating_sub(1)
    }

    pub fn mean(&self) -> f64 {
        self.cos_coef[0]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.rem_euclid(2.0 * PI);
        let (s1, c1) = x.sin_cos();
        let mut acc = self.cos_coef[0];
        let (mut ck, mut sk) = (1.0, 0.0);
        for k in 1..self.cos_coef.len() {
            let c_next = ck * c1 - sk * s1;
            let s_next = sk * c1 + ck * s1;
            ck = c_next;
            sk = s_next;
            acc += self.cos_coef[k] * ck + self.sin_coef[k] * sk;
        }
        acc
    }

    /// Value and first derivative at `x`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let x = x.rem_euclid(2.0 * PI);
        let (s1, c1) = x.sin_cos();
        let mut val = self.cos_coef[0];
        let mut der = 0.0;
        let (mut ck, mut sk) = (1.0, 0.0);
        for k in 1..self.cos_coef.len() {
            let c_next = ck * c1 - sk * s1;
            let s_next = sk * c1 + ck * s1;
            ck = c_next;
            sk = s_next;
            let kf = k as f64;
            val += self.cos_coef[k] * ck + self.sin_coef[k] * sk;
            der += kf * (self.sin_coef[k] * ck - self.cos_coef[k] * sk);
        }
        (val, der)
    }

    /// Derivative of the given order at `x`.
    pub fn derivative(&self, x: f64, order: u32) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.cos_coef.len() {
            let kx = k as f64 * x;
            // d^n/dx^n cos(kx) = k^n cos(kx + n pi/2), likewise for sin.
            let phase = kx + order as f64 * FRAC_PI_2;
            let kn = (k as f64).powi(order as i32);
            acc += kn * (self.cos_coef[k] * phase.cos() + self.sin_coef[k] * phase.sin());
        }
        if order == 0 {
            acc += self.cos_coef[0];
        }
        acc
    }

    /// `int_0^x` of the interpolant for any real `x` (not reduced mod 2pi).
    pub fn integral_from_zero(&self, x: f64) -> f64 {
        let (s1, c1) = x.sin_cos();
        let mut acc = self.cos_coef[0] * x;
        let (mut ck, mut sk) = (1.0, 0.0);
        for k in 1..self.cos_coef.len() {
            let c_next = ck * c1 - sk * s1;
            let s_next = sk * c1 + ck * s1;
            ck = c_next;
            sk = s_next;
            let kf = k as f64;
            acc += self.cos_coef[k] * sk / kf + self.sin_coef[k] * (1.0 - ck) / kf;
        }
        acc
    }

    pub fn nyquist(&self) -> usize {
        self.nyquist
    }
}
