//! Comparison subspaces: standard global Arnoldi, extended global Arnoldi
//! (all shifts zero) and global rational Arnoldi with prescribed poles.

use std::fmt;
use std::str::FromStr;

use crate::block::Block;
use crate::error::{shape_err, Error, Result};
use crate::factor::FactorCache;
use crate::gera::{cgs2, direct_projection, gera_build_cached, recover_t, KrylovBasis, ProjectedMatrix, BREAKDOWN_TOL};
use crate::matfun::{approx_fav, MatFunSpec};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Gera,
    Gea,
    Ra,
    Sga,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gera => "GERA",
            Self::Gea => "GEA",
            Self::Ra => "RA",
            Self::Sga => "SGA",
        })
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gera" => Ok(Self::Gera),
            "gea" => Ok(Self::Gea),
            "ra" => Ok(Self::Ra),
            "sga" => Ok(Self::Sga),
            _ => Err(Error::InvalidInput(format!("unknown method {s:?}"))),
        }
    }
}

/// Global Arnoldi on `span{V, AV, ..., A^{k-1}V}`.
///
/// Returns the basis (with `V_{k+1}` unless the space became invariant) and
/// `H_k` with the coupling `τ = [0, h_{k+1,k}]`.
pub fn sga_build(a: &CsrMatrix, v: &Block, k: usize) -> Result<(KrylovBasis, ProjectedMatrix)> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if v.rows() != a.n() {
        return Err(shape_err(format!("{} rows", a.n()), format!("{} rows", v.rows())));
    }
    let nv = v.frobenius_norm();
    if nv == 0.0 {
        return Err(Error::InvalidInput("starting block is zero".into()));
    }
    let mut blocks = vec![v.scaled(1.0 / nv)];
    let mut h = nalgebra::DMatrix::zeros(k + 1, k);
    let mut dim = k;
    for j in 0..k {
        let mut w = a.mul_block(&blocks[j])?;
        let raw = w.frobenius_norm();
        let c = cgs2(&mut w, &blocks);
        for (i, ci) in c.into_iter().enumerate() {
            h[(i, j)] = ci;
        }
        let norm = w.frobenius_norm();
        if norm <= BREAKDOWN_TOL * raw {
            dim = j + 1;
            break;
        }
        h[(j + 1, j)] = norm;
        w.scale_mut(1.0 / norm);
        blocks.push(w);
    }
    let t = h.view((0, 0), (dim, dim)).into_owned();
    let tau = [0.0, h[(dim, dim - 1)]];
    Ok((KrylovBasis::from_blocks(blocks)?, ProjectedMatrix { t, tau }))
}

/// The extended space: every shift zero.
pub fn gea_build(
    a: &CsrMatrix,
    v: &Block,
    m: usize,
    cache: &mut FactorCache,
) -> Result<(KrylovBasis, ProjectedMatrix)> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    let (basis, pd) = gera_build_cached(a, v, &vec![0.0; m], cache)?;
    let proj = recover_t(&pd)?;
    Ok((basis, proj))
}

/// Global rational Arnoldi: each new block is `(A - ξ_i I)^{-1}` applied to
/// the latest one. `T` is the direct projection; the basis has `poles + 1` blocks.
pub fn ra_build(
    a: &CsrMatrix,
    v: &Block,
    poles: &[f64],
    cache: &mut FactorCache,
) -> Result<(KrylovBasis, ProjectedMatrix)> {
    if v.rows() != a.n() {
        return Err(shape_err(format!("{} rows", a.n()), format!("{} rows", v.rows())));
    }
    let nv = v.frobenius_norm();
    if nv == 0.0 {
        return Err(Error::InvalidInput("starting block is zero".into()));
    }
    let mut blocks = vec![v.scaled(1.0 / nv)];
    for &pole in poles {
        let mut w = cache.solve(a, pole, blocks.last().expect("nonempty"))?;
        let raw = w.frobenius_norm();
        cgs2(&mut w, &blocks);
        let norm = w.frobenius_norm();
        if norm <= BREAKDOWN_TOL * raw {
            break;
        }
        w.scale_mut(1.0 / norm);
        blocks.push(w);
    }
    let dim = blocks.len();
    let mut proj = direct_projection(a, &blocks, dim)?;
    proj.tau = [0.0, 0.0];
    Ok((KrylovBasis::from_blocks(blocks)?, proj))
}

/// A subspace with its projected matrix, ready to approximate `f(A)V`.
#[derive(Debug, Clone)]
pub struct Projection {
    pub kind: MethodKind,
    pub basis: KrylovBasis,
    pub proj: ProjectedMatrix,
    pub norm_v: f64,
}

impl Projection {
    pub fn gera(a: &CsrMatrix, v: &Block, shifts: &[f64], cache: &mut FactorCache) -> Result<Self> {
        let (basis, pd) = gera_build_cached(a, v, shifts, cache)?;
        let proj = recover_t(&pd)?;
        Ok(Self {
            kind: MethodKind::Gera,
            basis,
            proj,
            norm_v: v.frobenius_norm(),
        })
    }

    pub fn gea(a: &CsrMatrix, v: &Block, m: usize, cache: &mut FactorCache) -> Result<Self> {
        let (basis, proj) = gea_build(a, v, m, cache)?;
        Ok(Self {
            kind: MethodKind::Gea,
            basis,
            proj,
            norm_v: v.frobenius_norm(),
        })
    }

    pub fn ra(a: &CsrMatrix, v: &Block, poles: &[f64], cache: &mut FactorCache) -> Result<Self> {
        let (basis, proj) = ra_build(a, v, poles, cache)?;
        Ok(Self {
            kind: MethodKind::Ra,
            basis,
            proj,
            norm_v: v.frobenius_norm(),
        })
    }

    pub fn sga(a: &CsrMatrix, v: &Block, k: usize) -> Result<Self> {
        let (basis, proj) = sga_build(a, v, k)?;
        Ok(Self {
            kind: MethodKind::Sga,
            basis,
            proj,
            norm_v: v.frobenius_norm(),
        })
    }

    pub fn dim(&self) -> usize {
        self.proj.dim()
    }

    pub fn approximate(&self, f: &MatFunSpec) -> Result<Block> {
        approx_fav(self.basis.blocks(), &self.proj.t, f, self.norm_v)
    }
}
