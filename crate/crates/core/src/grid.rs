use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Tolerance on total mass for a valid grid.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Cell-averaged probability density on a uniform partition of `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    values: Vec<f64>,
    tau: f64,
}

impl DensityGrid {
    /// Takes cell averages that already integrate to one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_cells(&values)?;
        let grid = DensityGrid { values, tau: 0.0 };
        let mass = grid.mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid("grid", format!("total mass {mass} differs from 1")));
        }
        Ok(grid)
    }

    /// Rescales nonnegative cell values to unit mass.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        check_cells(&values)?;
        let h = 2.0 / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * h;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid("grid", "total mass must be positive and finite"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(DensityGrid { values, tau: 0.0 })
    }

    pub fn uniform(cells: usize) -> Result<Self> {
        Self::new(vec![0.5; cells.max(1)])
    }

    /// Cell averages of a density on `[-1, 1]` by adaptive quadrature,
    /// rescaled to unit mass.
    pub fn from_density(cells: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 2.0 / cells as f64;
        let values = (0..cells)
            .map(|j| {
                let a = -1.0 + j as f64 * h;
                quadrature::integrate(&density, a, a + h, 1e-12, 1e-14).map(|q| q.value / h)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::normalized(values)
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub(crate) fn set_tau(&mut self, tau: f64) {
        self.tau = tau;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> f64 {
        2.0 / self.values.len() as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        cell_center(self.values.len(), j)
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.center(j))
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.width()
    }

    /// Midpoint-rule integral of `phi(w) g(w)`.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let h = self.width();
        self.values
            .iter()
            .enumerate()
            .map(|(j, g)| phi(self.center(j)) * g)
            .sum::<f64>()
            * h
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|w| w)
    }

    pub fn second_moment(&self) -> f64 {
        self.integrate(|w| w * w)
    }

    /// Spread `C = M2 - m^2`, computed about the mean.
    pub fn spread(&self) -> f64 {
        let m = self.mean();
        self.integrate(|w| (w - m) * (w - m))
    }

    /// Merges groups of `factor` adjacent cells.
    pub fn coarsen(&self, factor: usize) -> Result<DensityGrid> {
        if factor == 0 || !self.len().is_multiple_of(factor) {
            return Err(Error::invalid("coarsen", format!("{} cells not divisible by {factor}", self.len())));
        }
        let values = self
            .values
            .chunks(factor)
            .map(|c| c.iter().sum::<f64>() / factor as f64)
            .collect();
        Ok(DensityGrid { values, tau: self.tau })
    }
}

pub(crate) fn cell_center(cells: usize, j: usize) -> f64 {
    -1.0 + (j as f64 + 0.5) * 2.0 / cells as f64
}

/// Cell index of `w` on `cells` uniform bins over `[-1, 1]`. A value on an
/// interior edge goes to the right cell; `w = 1` goes to the last cell.
#[inline]
pub fn bin_index(w: f64, cells: usize) -> usize {
    let x = (w + 1.0) * cells as f64 * 0.5;
    (x.max(0.0).floor() as usize).min(cells - 1)
}

fn check_cells(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("grid", "needs at least one cell"));
    }
    if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::NegativeDensity { cell: j, value: *v });
    }
    Ok(())
}
