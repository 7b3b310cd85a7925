//! Dense eigendecompositions used for `f(T)` on projected matrices and for
//! reference values `f(A)V` on moderate `A`.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::block::Block;
use crate::error::{shape_err, Error, Result};
use crate::sparse::CsrMatrix;

/// Eigenvector matrices with a larger 2-norm condition number are not used.
pub const MAX_EIGVEC_COND: f64 = 1e6;

/// Spectral decomposition of a real square matrix.
#[derive(Debug, Clone)]
pub enum EigenDecomposition {
    /// `A = Q Λ Qᵀ`
    Symmetric {
        values: DVector<f64>,
        vectors: DMatrix<f64>,
    },
    /// `A = X Λ X⁻¹`
    General {
        values: DVector<Complex64>,
        vectors: DMatrix<Complex64>,
        inverse: DMatrix<Complex64>,
        cond: f64,
    },
}

impl EigenDecomposition {
    /// Uses the symmetric solver when `a` is exactly symmetric.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(shape_err(
                "nonempty square matrix",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        if a == &a.transpose() {
            let eig = SymmetricEigen::new(a.clone());
            return Ok(Self::Symmetric {
                values: eig.eigenvalues,
                vectors: eig.eigenvectors,
            });
        }
        let (values, vectors) = complex_eigenvectors(a)?;
        let svd = vectors.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let inverse = if cond.is_finite() {
            vectors
                .clone()
                .lu()
                .try_inverse()
                .unwrap_or_else(|| DMatrix::zeros(0, 0))
        } else {
            DMatrix::zeros(0, 0)
        };
        let cond = if inverse.nrows() == 0 { f64::INFINITY } else { cond };
        Ok(Self::General {
            values,
            vectors,
            inverse,
            cond,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Symmetric { values, .. } => values.len(),
            Self::General { values, .. } => values.len(),
        }
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        match self {
            Self::Symmetric { values, .. } => values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            Self::General { values, .. } => values.iter().copied().collect(),
        }
    }

    /// Condition number of the eigenvector matrix (1 for the symmetric case).
    pub fn cond(&self) -> f64 {
        match self {
            Self::Symmetric { .. } => 1.0,
            Self::General { cond, .. } => *cond,
        }
    }

    pub fn is_well_conditioned(&self) -> bool {
        self.cond() <= MAX_EIGVEC_COND
    }

    /// `f(A) R` for a real right-hand side; the imaginary part is discarded.
    pub fn apply(&self, f: &dyn Fn(Complex64) -> Complex64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.dim() {
            return Err(shape_err(
                format!("{} rows", self.dim()),
                format!("{} rows", rhs.nrows()),
            ));
        }
        match self {
            Self::Symmetric { values, vectors } => {
                let mut c = vectors.transpose() * rhs;
                for (i, &lam) in values.iter().enumerate() {
                    let fl = f(Complex64::new(lam, 0.0)).re;
                    c.row_mut(i).scale_mut(fl);
                }
                Ok(vectors * c)
            }
            Self::General {
                values,
                vectors,
                inverse,
                cond,
            } => {
                if !cond.is_finite() {
                    return Err(Error::Domain("eigenvector matrix is singular".into()));
                }
                let rc = rhs.map(|x| Complex64::new(x, 0.0));
                let mut c = inverse * rc;
                for (i, &lam) in values.iter().enumerate() {
                    let fl = f(lam);
                    for z in c.row_mut(i).iter_mut() {
                        *z *= fl;
                    }
                }
                Ok((vectors * c).map(|z| z.re))
            }
        }
    }
}

/// Eigenvalues and unit eigenvectors from a complex Schur form.
fn complex_eigenvectors(a: &DMatrix<f64>) -> Result<(DVector<Complex64>, DMatrix<Complex64>)> {
    let n = a.nrows();
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let schur = Schur::try_new(ac, f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Domain("Schur iteration did not converge".into()))?;
    let (q, u) = schur.unpack();
    let unorm = u.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let tiny = f64::EPSILON * unorm.max(f64::MIN_POSITIVE);
    let values = DVector::from_fn(n, |i, _| u[(i, i)]);
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lam = u[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in i + 1..=k {
                acc += u[(i, l)] * y[(l, k)];
            }
            let mut d = u[(i, i)] - lam;
            if d.norm() < tiny {
                d = Complex64::new(tiny, 0.0);
            }
            y[(i, k)] = -acc / d;
        }
    }
    let mut x = q * y;
    for mut col in x.column_iter_mut() {
        let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        col.scale_mut(1.0 / nrm);
    }
    Ok((values, x))
}

/// Eigenvalues of a small projected matrix.
pub fn ritz_values(t: &DMatrix<f64>) -> Vec<Complex64> {
    if t.nrows() == 0 {
        return Vec::new();
    }
    t.complex_eigenvalues().iter().copied().collect()
}

/// Reference `f(A)V` through full eigendecompositions of the connected
/// components of `A`'s sparsity graph; suited to `n` up to a few thousand.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    n: usize,
    components: Vec<(Vec<usize>, EigenDecomposition, DMatrix<f64>)>,
}

impl DenseOracle {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for r in 0..n {
            for (c, _) in a.row(r) {
                let (x, y) = (find(&mut parent, r), find(&mut parent, c));
                if x != y {
                    parent[x.max(y)] = x.min(y);
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        let mut components = Vec::with_capacity(groups.len());
        for (_, idx) in groups {
            let k = idx.len();
            let pos: std::collections::HashMap<usize, usize> = idx.iter().enumerate().map(|(l, &g)| (g, l)).collect();
            let mut d = DMatrix::zeros(k, k);
            for (l, &g) in idx.iter().enumerate() {
                for (c, v) in a.row(g) {
                    d[(l, pos[&c])] = v;
                }
            }
            let eig = EigenDecomposition::new(&d)?;
            components.push((idx, eig, d));
        }
        Ok(Self { n, components })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.components.iter().flat_map(|(_, e, _)| e.eigenvalues()).collect()
    }

    pub fn apply(&self, f: &crate::matfun::MatFunSpec, v: &Block) -> Result<Block> {
        if v.rows() != self.n {
            return Err(shape_err(format!("{} rows", self.n), format!("{} rows", v.rows())));
        }
        let mut out = DMatrix::zeros(self.n, v.cols());
        for (idx, eig, dense) in &self.components {
            f.check_spectrum(&eig.eigenvalues())?;
            let rhs = DMatrix::from_fn(idx.len(), v.cols(), |l, j| v.as_matrix()[(idx[l], j)]);
            let res = crate::matfun::apply_with(eig, dense, f, &rhs)?;
            for (l, &g) in idx.iter().enumerate() {
                for j in 0..v.cols() {
                    out[(g, j)] = res[(l, j)];
                }
            }
        }
        Block::new(out)
    }
}
