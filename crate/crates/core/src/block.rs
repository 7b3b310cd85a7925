//! Dense `n x p` blocks and the Frobenius-product kernels of the global Krylov methods.
//!
//! In a global method a whole block plays the role of a vector: inner products
//! are Frobenius products, and a basis combination `𝒱(y ⊗ I_p)` is the linear
//! combination `Σ y_i V_i` of blocks.

use nalgebra::DMatrix;

use crate::error::{shape_err, Error, Result};

/// A dense real `n x p` block, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    data: DMatrix<f64>,
}

impl Block {
    /// Wraps a matrix, checking `rows >= cols >= 1` and finiteness.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() < data.ncols() {
            return Err(Error::InvalidInput(format!(
                "block must satisfy rows >= cols >= 1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("block has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: DMatrix::zeros(rows, cols),
        }
    }

    /// Builds a block from column-major data.
    pub fn from_column_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(shape_err(
                format!("{} values", rows * cols),
                format!("{} values", values.len()),
            ));
        }
        Self::new(DMatrix::from_column_slice(rows, cols, values))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(rows, cols, f))
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_mut_slice()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.rows();
        &self.data.as_slice()[j * n..(j + 1) * n]
    }

    pub(crate) fn column_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.rows();
        &mut self.data.as_mut_slice()[j * n..(j + 1) * n]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn scaled(&self, alpha: f64) -> Block {
        Block {
            data: &self.data * alpha,
        }
    }

    pub(crate) fn scale_mut(&mut self, alpha: f64) {
        self.data *= alpha;
    }

    /// `self += alpha * other`
    pub(crate) fn axpy(&mut self, alpha: f64, other: &Block) {
        debug_assert_eq!(self.shape(), other.shape());
        for (y, x) in self.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *y += alpha * x;
        }
    }

    pub fn sub(&self, other: &Block) -> Result<Block> {
        check_same_shape(self, other)?;
        Ok(Block {
            data: &self.data - &other.data,
        })
    }
}

fn check_same_shape(x: &Block, y: &Block) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(shape_err(
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", y.rows(), y.cols()),
        ));
    }
    Ok(())
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `⟨X, Y⟩_F = trace(Yᵀ X)`.
pub fn frobenius_inner(x: &Block, y: &Block) -> Result<f64> {
    check_same_shape(x, y)?;
    Ok(dot(x.as_slice(), y.as_slice()))
}

/// The ⋄-product `Mᵀ ⋄ N`: the `s x l` matrix with entries `⟨N_j, M_i⟩_F`.
pub fn diamond_product(m: &[Block], n: &[Block]) -> Result<DMatrix<f64>> {
    let first = m
        .first()
        .or(n.first())
        .ok_or_else(|| Error::InvalidInput("diamond product of empty block lists".into()))?;
    if m.is_empty() || n.is_empty() {
        return Err(Error::InvalidInput("diamond product of empty block lists".into()));
    }
    for b in m.iter().chain(n) {
        check_same_shape(first, b)?;
    }
    Ok(DMatrix::from_fn(m.len(), n.len(), |i, j| {
        dot(n[j].as_slice(), m[i].as_slice())
    }))
}

/// The block realization of `𝒱 (y ⊗ I_p)`, i.e. `Σ_i y_i V_i`.
pub fn basis_combine(blocks: &[Block], y: &[f64]) -> Result<Block> {
    if blocks.is_empty() {
        return Err(Error::InvalidInput("basis_combine needs at least one block".into()));
    }
    if blocks.len() != y.len() {
        return Err(shape_err(
            format!("{} coefficients", blocks.len()),
            format!("{} coefficients", y.len()),
        ));
    }
    let (rows, cols) = blocks[0].shape();
    let mut out = Block::zeros(rows, cols);
    for (b, &c) in blocks.iter().zip(y) {
        check_same_shape(&out, b)?;
        if c != 0.0 {
            out.axpy(c, b);
        }
    }
    Ok(out)
}
