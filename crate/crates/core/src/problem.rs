//! Problem description: parameters, the radial grid, grid functions and the
//! nonlinearity.

use crate::error::{Result, SolverError};

/// Physical and discretization parameters of a radial problem
/// `-Δφ + ωφ - |φ|^{p-1}φ = 0` posed on the ball of radius `radius` in `ℝ^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub d: usize,
    pub omega: f64,
    pub p: f64,
    pub radius: f64,
    pub n: usize,
}

impl SolverParams {
    pub fn new(d: usize, omega: f64, p: f64, radius: f64, n: usize) -> Result<Self> {
        let params = SolverParams {
            d,
            omega,
            p,
            radius,
            n,
        };
        params.validate()?;
        Ok(params)
    }

    /// Upper end of the subcritical range, `(d+2)/(d-2)` for `d ≥ 3` and
    /// infinity otherwise.
    pub fn critical_power(d: usize) -> f64 {
        if d >= 3 {
            (d as f64 + 2.0) / (d as f64 - 2.0)
        } else {
            f64::INFINITY
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(SolverError::InvalidParameter("dimension d must be >= 1".into()));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(SolverError::InvalidParameter(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        let upper = Self::critical_power(self.d);
        if !(self.p.is_finite() && self.p > 1.0 && self.p < upper) {
            return Err(SolverError::SupercriticalPower {
                p: self.p,
                d: self.d,
                upper,
            });
        }
        check_grid_args(self.radius, self.n)
    }

    pub fn grid(&self) -> RadialGrid {
        RadialGrid {
            radius: self.radius,
            n: self.n,
            h: self.radius / self.n as f64,
        }
    }

    pub fn nonlinearity(&self) -> PowerNonlinearity {
        PowerNonlinearity::new_unchecked(self.p)
    }

    pub fn with_grid(self, radius: f64, n: usize) -> Self {
        SolverParams { radius, n, ..self }
    }
}

fn check_grid_args(radius: f64, n: usize) -> Result<()> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(SolverError::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if n < 4 {
        return Err(SolverError::InvalidParameter(format!(
            "grid size N must be at least 4, got {n}"
        )));
    }
    Ok(())
}

/// Uniform grid `r_i = i·h`, `i = 0..=n`, `h = R/n` on `[0, R]`.
///
/// Indices are zero-based: `node(0) = 0` and `node(n) = R`. Grid functions
/// only store the `n` samples at `node(0)..node(n-1)`; the value at `R` is
/// the homogeneous Dirichlet value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    radius: f64,
    n: usize,
    h: f64,
}

pub fn make_grid(radius: f64, n: usize) -> Result<RadialGrid> {
    check_grid_args(radius, n)?;
    Ok(RadialGrid {
        radius,
        n,
        h: radius / n as f64,
    })
}

impl RadialGrid {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of stored samples (and of cells).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.radius
        } else {
            i as f64 * self.h
        }
    }

    /// The `n` sample positions (excluding `R`).
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// `r_i^{d-1}` for every sample position.
    pub fn radial_weights(&self, d: usize) -> Vec<f64> {
        (0..self.n).map(|i| radial_weight(self.node(i), d)).collect()
    }
}

/// `r^{d-1}` with `0^0 = 1`.
#[inline]
pub fn radial_weight(r: f64, d: usize) -> f64 {
    match d {
        1 => 1.0,
        2 => r,
        3 => r * r,
        _ => r.powi(d as i32 - 1),
    }
}

/// Samples of a radial profile at `r_0..r_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(SolverError::LengthMismatch {
                expected: grid.n,
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SolverError::NonFinite { index, value });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.n],
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
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

    pub fn scaled(&self, t: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    /// Restriction to a coarser nested grid by taking every `stride`-th sample.
    pub fn subsample(&self, stride: usize) -> Result<GridFunction> {
        if stride == 0 || self.grid.n % stride != 0 {
            return Err(SolverError::NonNestedGrids {
                n: self.grid.n / stride.max(1),
                n_ref: self.grid.n,
            });
        }
        let grid = make_grid(self.grid.radius, self.grid.n / stride)?;
        let values = self.values.iter().step_by(stride).copied().collect();
        Ok(GridFunction { grid, values })
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Samples `profile` at the `n` stored grid positions.
pub fn sample<F: Fn(f64) -> f64>(profile: F, grid: &RadialGrid) -> Result<GridFunction> {
    let values = (0..grid.n).map(|i| profile(grid.node(i))).collect();
    GridFunction::new(*grid, values)
}

/// Odd nonlinearity `f` together with its primitive `F(s) = ∫_0^{|s|} f`.
pub trait Nonlinearity {
    fn f(&self, s: f64) -> f64;
    fn primitive(&self, s: f64) -> f64;
    fn f_times_s(&self, s: f64) -> f64 {
        self.f(s) * s
    }
}

/// `f(s) = |s|^{p-1}s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerNonlinearity {
    p: f64,
    // integer exponent p-1, when p is integral
    int_pm1: Option<i32>,
}

pub fn power_nonlinearity(p: f64) -> Result<PowerNonlinearity> {
    if !(p.is_finite() && p > 1.0) {
        return Err(SolverError::InvalidParameter(format!(
            "power exponent must exceed 1, got {p}"
        )));
    }
    Ok(PowerNonlinearity::new_unchecked(p))
}

impl PowerNonlinearity {
    fn new_unchecked(p: f64) -> Self {
        let int_pm1 = if p.fract() == 0.0 && p < 64.0 {
            Some(p as i32 - 1)
        } else {
            None
        };
        PowerNonlinearity { p, int_pm1 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `|s|^{p-1}`.
    #[inline]
    pub fn abs_pow_pm1(&self, s: f64) -> f64 {
        match self.int_pm1 {
            Some(1) => s.abs(),
            Some(2) => s * s,
            Some(k) => s.abs().powi(k),
            None => s.abs().powf(self.p - 1.0),
        }
    }

    /// `|s|^q` with a fast path for small integral `q`.
    #[inline]
    pub fn abs_pow(s: f64, q: f64) -> f64 {
        let a = s.abs();
        if q == 2.0 {
            a * a
        } else if q.fract() == 0.0 && q < 64.0 {
            a.powi(q as i32)
        } else {
            a.powf(q)
        }
    }
}

impl Nonlinearity for PowerNonlinearity {
    #[inline]
    fn f(&self, s: f64) -> f64 {
        self.abs_pow_pm1(s) * s
    }

    #[inline]
    fn primitive(&self, s: f64) -> f64 {
        self.abs_pow_pm1(s) * s * s / (self.p + 1.0)
    }

    #[inline]
    fn f_times_s(&self, s: f64) -> f64 {
        self.abs_pow_pm1(s) * s * s
    }
}

/// `f ≡ 0`; turns the radial equation into the linear one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroNonlinearity;

impl Nonlinearity for ZeroNonlinearity {
    fn f(&self, _s: f64) -> f64 {
        0.0
    }

    fn primitive(&self, _s: f64) -> f64 {
        0.0
    }
}
