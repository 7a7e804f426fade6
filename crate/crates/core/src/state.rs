use crate::grid::{Mesh1D, Quadrature};

/// Measure of the velocity set `V = [-1, 1]`.
pub const VELOCITY_MEASURE: f64 = 2.0;

/// Cell averages `f[i][m]` of a distribution function, stored row-major by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    n_cells: usize,
    n_ord: usize,
    data: Vec<f64>,
}

impl KineticState {
    pub fn zeros(n_cells: usize, n_ord: usize) -> Self {
        Self {
            n_cells,
            n_ord,
            data: vec![0.0; n_cells * n_ord],
        }
    }

    /// Wraps row-major data (`n_cells × n_ord`).
    pub fn from_vec(n_cells: usize, n_ord: usize, data: Vec<f64>) -> crate::error::Result<Self> {
        if data.len() != n_cells * n_ord {
            return Err(crate::error::Error::InvalidArgument(format!(
                "{} values for {n_cells} cells and {n_ord} ordinates",
                data.len()
            )));
        }
        Ok(Self {
            n_cells,
            n_ord,
            data,
        })
    }

    /// Samples `f(x_i, μ_m)` at the cell centres.
    pub fn from_fn(mesh: &Mesh1D, quad: &Quadrature, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut s = Self::zeros(mesh.n_cells, quad.len());
        for i in 0..mesh.n_cells {
            let x = mesh.center(i);
            for (m, &mu) in quad.mu.iter().enumerate() {
                s.data[i * s.n_ord + m] = f(x, mu);
            }
        }
        s
    }

    /// Isotropic state with the given per-cell value.
    pub fn isotropic(values: &[f64], n_ord: usize) -> Self {
        let mut s = Self::zeros(values.len(), n_ord);
        for (i, &v) in values.iter().enumerate() {
            s.cell_mut(i).fill(v);
        }
        s
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_ord(&self) -> usize {
        self.n_ord
    }

    #[inline]
    pub fn cell(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_ord..(i + 1) * self.n_ord]
    }

    #[inline]
    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_ord..(i + 1) * self.n_ord]
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize) -> f64 {
        self.data[i * self.n_ord + m]
    }

    #[inline]
    pub fn set(&mut self, i: usize, m: usize, v: f64) {
        self.data[i * self.n_ord + m] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `ρ_i = (1/|V|) Σ_m ω_m f_{i,m}` (chemotaxis and neutron normalization).
    pub fn mean_density(&self, quad: &Quadrature) -> Vec<f64> {
        (0..self.n_cells)
            .map(|i| quad.sum(self.cell(i)) / VELOCITY_MEASURE)
            .collect()
    }

    /// `ρ_i = Σ_m ω_m I_{i,m}` (radiative normalization).
    pub fn total_density(&self, quad: &Quadrature) -> Vec<f64> {
        (0..self.n_cells).map(|i| quad.sum(self.cell(i))).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
