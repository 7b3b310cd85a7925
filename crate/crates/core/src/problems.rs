//! Test operators and starting blocks.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::Block;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// The three convection–diffusion operators on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfddOperator {
    /// `-Δu + 50(x+y)u_x + 50(x+y)u_y`
    L1,
    /// `-Δu + sin(xy)u_x + e^x u_y + (x+y)u`
    L2,
    /// `-Δu + (x+y)u_x + (x-y)u_y`
    L3,
}

impl CfddOperator {
    /// `(b1, b2, c)` at `(x, y)` for `-Δu + b1 u_x + b2 u_y + c u`.
    pub fn coefficients(self, x: f64, y: f64) -> (f64, f64, f64) {
        match self {
            CfddOperator::L1 => (50.0 * (x + y), 50.0 * (x + y), 0.0),
            CfddOperator::L2 => ((x * y).sin(), x.exp(), x + y),
            CfddOperator::L3 => (x + y, x - y, 0.0),
        }
    }
}

impl std::str::FromStr for CfddOperator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(CfddOperator::L1),
            "L2" => Ok(CfddOperator::L2),
            "L3" => Ok(CfddOperator::L3),
            _ => Err(Error::InvalidInput(format!("unknown operator {s:?}"))),
        }
    }
}

/// Centered differences for `-Δu + b1 u_x + b2 u_y + c u` with Dirichlet
/// boundaries on an `n0 x n0` interior grid, `h = 1/(n0+1)`.
///
/// Unknown `(i, j)` (1-based, `i` along `x`) is row `(i-1) n0 + (j-1)`.
pub fn gen_convection_diffusion(n0: usize, coeffs: impl Fn(f64, f64) -> (f64, f64, f64)) -> Result<CsrMatrix> {
    if n0 < 3 {
        return Err(Error::InvalidInput(format!("grid size n0 = {n0} is below 3")));
    }
    let h = 1.0 / (n0 as f64 + 1.0);
    let h2 = h * h;
    let n = n0 * n0;
    let mut trip = Vec::with_capacity(5 * n);
    for i in 1..=n0 {
        for j in 1..=n0 {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let (b1, b2, c) = coeffs(x, y);
            let k = (i - 1) * n0 + (j - 1);
            trip.push((k, k, 4.0 / h2 + c));
            if i > 1 {
                trip.push((k, k - n0, -1.0 / h2 - b1 / (2.0 * h)));
            }
            if i < n0 {
                trip.push((k, k + n0, -1.0 / h2 + b1 / (2.0 * h)));
            }
            if j > 1 {
                trip.push((k, k - 1, -1.0 / h2 - b2 / (2.0 * h)));
            }
            if j < n0 {
                trip.push((k, k + 1, -1.0 / h2 + b2 / (2.0 * h)));
            }
        }
    }
    CsrMatrix::from_triplets(n, &trip)
}

pub fn gen_cfdd(op: CfddOperator, n0: usize) -> Result<CsrMatrix> {
    gen_convection_diffusion(n0, |x, y| op.coefficients(x, y))
}

/// Symmetric positive definite Toeplitz matrix `a_ij = 1/(1+|i-j|)`.
pub fn gen_toeplitz(n: usize) -> Result<CsrMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let d = nalgebra::DMatrix::from_fn(n, n, |i, j| 1.0 / (1.0 + i.abs_diff(j) as f64));
    CsrMatrix::from_dense(&d)
}

/// The Hankel-type matrix `a_ij = 1/(1+i+j)` with 1-based indices.
///
/// Numerically singular for moderate `n`.
pub fn gen_hankel(n: usize) -> Result<CsrMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let d = nalgebra::DMatrix::from_fn(n, n, |i, j| 1.0 / (3.0 + (i + j) as f64));
    CsrMatrix::from_dense(&d)
}

/// Block diagonal with 2x2 blocks `[[a_i, c], [-c, a_i]]`, `a_i = (2i-1)/(n+1)`, `c = 1/2`.
pub fn gen_blockdiag(n: usize) -> Result<CsrMatrix> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "block diagonal order must be even, got {n}"
        )));
    }
    let c = 0.5;
    let mut trip = Vec::with_capacity(2 * n);
    for i in 1..=n / 2 {
        let a = (2 * i - 1) as f64 / (n as f64 + 1.0);
        let k = 2 * (i - 1);
        trip.extend([(k, k, a), (k, k + 1, c), (k + 1, k, -c), (k + 1, k + 1, a)]);
    }
    CsrMatrix::from_triplets(n, &trip)
}

/// Samples `sin(πx)sin(πy)`, `sin(2πx)sin(πy)`, `sin(2πx)sin(2πy)` at
/// `x_i = (i-1)/(n0-1)`, `y_j = (j-1)/(n0-1)`; entry `(i, j)` is row `n0(i-1) + j-1`.
pub fn gen_pde_block(n0: usize) -> Result<Block> {
    if n0 < 2 {
        return Err(Error::InvalidInput(format!("grid size n0 = {n0} is below 2")));
    }
    use std::f64::consts::PI;
    let step = 1.0 / (n0 as f64 - 1.0);
    Block::from_fn(n0 * n0, 3, |row, k| {
        let (i, j) = (row / n0, row % n0);
        let (x, y) = (i as f64 * step, j as f64 * step);
        match k {
            0 => (PI * x).sin() * (PI * y).sin(),
            1 => (2.0 * PI * x).sin() * (PI * y).sin(),
            _ => (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
        }
    })
}

/// Uniform `[0, 1)` entries from ChaCha8 seeded with `seed`, filled column by column.
pub fn random_uniform_block(n: usize, p: usize, seed: u64) -> Result<Block> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..n * p).map(|_| rng.random::<f64>()).collect();
    Block::from_column_slice(n, p, &values)
}

/// The first `p` columns of the identity.
pub fn unit_block(n: usize, p: usize) -> Result<Block> {
    Block::from_fn(n, p, |i, j| if i == j { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSource {
    Cfdd { op: CfddOperator, n0: usize },
    Toeplitz { n: usize },
    Hankel { n: usize },
    BlockDiag { n: usize },
    MatrixMarket(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    RandomUniform,
    PdeSines,
    Unit,
}

/// A fully determined `(A, V)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub source: MatrixSource,
    pub block: BlockKind,
    pub p: usize,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn matrix(&self) -> Result<CsrMatrix> {
        match &self.source {
            MatrixSource::Cfdd { op, n0 } => gen_cfdd(*op, *n0),
            MatrixSource::Toeplitz { n } => gen_toeplitz(*n),
            MatrixSource::Hankel { n } => gen_hankel(*n),
            MatrixSource::BlockDiag { n } => gen_blockdiag(*n),
            MatrixSource::MatrixMarket(path) => crate::mmio::read_matrix_market(path),
        }
    }

    pub fn start_block(&self, n: usize) -> Result<Block> {
        match self.block {
            BlockKind::RandomUniform => random_uniform_block(n, self.p, self.seed),
            BlockKind::Unit => unit_block(n, self.p),
            BlockKind::PdeSines => {
                let n0 = (n as f64).sqrt().round() as usize;
                if n0 * n0 != n {
                    return Err(Error::InvalidInput(format!("sine block needs a square grid, n = {n}")));
                }
                if self.p != 3 {
                    return Err(Error::InvalidInput("sine block has exactly 3 columns".into()));
                }
                gen_pde_block(n0)
            }
        }
    }

    pub fn build(&self) -> Result<(CsrMatrix, Block)> {
        let a = self.matrix()?;
        let v = self.start_block(a.n())?;
        Ok((a, v))
    }
}
