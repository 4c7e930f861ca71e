//! Dense operator algebra on the truncated transmon ⊗ resonator space.
//!
//! Product states are indexed transmon-major: |s, n⟩ ↦ s·n_fock + n.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix acting on a finite-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct QOperator {
    mat: DMatrix<C64>,
}

impl QOperator {
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "operator must be square and non-empty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(QOperator { mat })
    }

    pub fn identity(dim: usize) -> Self {
        QOperator {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        QOperator {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    /// |i⟩⟨j| on a space of dimension `dim`.
    pub fn ket_bra(dim: usize, i: usize, j: usize) -> Self {
        let mut mat = DMatrix::zeros(dim, dim);
        mat[(i, j)] = ONE;
        QOperator { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn dagger(&self) -> Self {
        QOperator {
            mat: self.mat.adjoint(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        QOperator {
            mat: &self.mat * c,
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// Kronecker product, `self` on the left (slow) index.
    pub fn tensor(&self, other: &QOperator) -> QOperator {
        QOperator {
            mat: self.mat.kronecker(&other.mat),
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.mat - self.mat.adjoint()).camax() <= tol
    }

    /// Frobenius-norm distance to another operator.
    pub fn distance(&self, other: &QOperator) -> f64 {
        (&self.mat - &other.mat).norm()
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.mat * v
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }
}

impl Add for &QOperator {
    type Output = QOperator;
    fn add(self, rhs: &QOperator) -> QOperator {
        QOperator {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Sub for &QOperator {
    type Output = QOperator;
    fn sub(self, rhs: &QOperator) -> QOperator {
        QOperator {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Mul for &QOperator {
    type Output = QOperator;
    fn mul(self, rhs: &QOperator) -> QOperator {
        QOperator {
            mat: &self.mat * &rhs.mat,
        }
    }
}

pub fn tensor(a: &QOperator, b: &QOperator) -> QOperator {
    a.tensor(b)
}

fn ladder(n: usize, what: &str) -> Result<QOperator> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "{what} needs at least 2 levels, got {n}"
        )));
    }
    let mut mat = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        mat[(i, i + 1)] = C64::new(((i + 1) as f64).sqrt(), 0.0);
    }
    Ok(QOperator { mat })
}

/// Transmon annihilation operator b̂ truncated to `n_levels`.
pub fn transmon_lowering(n_levels: usize) -> Result<QOperator> {
    ladder(n_levels, "transmon")
}

/// Resonator annihilation operator â on Fock states 0..n_fock-1.
///
/// The truncation makes [â, â†] differ from the identity in the last
/// diagonal entry.
pub fn resonator_lowering(n_fock: usize) -> Result<QOperator> {
    ladder(n_fock, "resonator")
}

/// Ket or density matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum QState {
    Ket(DVector<C64>),
    Density(DMatrix<C64>),
}

impl QState {
    /// Product basis ket |s, n⟩.
    pub fn basis(n_transmon: usize, n_fock: usize, s: usize, n: usize) -> Result<Self> {
        if s >= n_transmon || n >= n_fock {
            return Err(Error::InvalidDimension(format!(
                "|{s},{n}⟩ outside {n_transmon}x{n_fock} space"
            )));
        }
        let mut v = DVector::zeros(n_transmon * n_fock);
        v[s * n_fock + n] = ONE;
        Ok(QState::Ket(v))
    }

    pub fn dim(&self) -> usize {
        match self {
            QState::Ket(v) => v.len(),
            QState::Density(r) => r.nrows(),
        }
    }

    pub fn to_density(&self) -> DMatrix<C64> {
        match self {
            QState::Ket(v) => v * v.adjoint(),
            QState::Density(r) => r.clone(),
        }
    }

    /// Checks the density-matrix invariants: Hermitian, unit trace,
    /// no eigenvalue below −`tol`.
    pub fn validate_density(&self, tol: f64) -> Result<()> {
        let r = self.to_density();
        if !r.is_square() {
            return Err(Error::InvalidDimension("density matrix not square".into()));
        }
        if (&r - r.adjoint()).camax() > tol {
            return Err(Error::InvalidParameter("density matrix not Hermitian".into()));
        }
        let tr = r.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        if min_eigenvalue(&r) < -tol {
            return Err(Error::InvalidParameter(
                "density matrix has negative eigenvalues".into(),
            ));
        }
        Ok(())
    }
}

/// Smallest eigenvalue of the Hermitian part of `r`.
pub fn min_eigenvalue(r: &DMatrix<C64>) -> f64 {
    let h = (r + r.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(h);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
