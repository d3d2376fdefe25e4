//! Small dense linear algebra: a cyclic Jacobi eigensolver for complex
//! Hermitian matrices and a few helpers on fixed-size complex matrices.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// Convergence threshold on ‖offdiag(A)‖_F / ‖A‖_F.
pub const JACOBI_TOLERANCE: f64 = 1e-13;

/// Relative anti-Hermitian part tolerated on input.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

const MAX_SWEEPS: usize = 60;

/// Eigen-decomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted ascending; column `k` of `vectors` is the
/// eigenvector of `values[k]`. Each eigenvector carries a fixed phase: its
/// largest-magnitude component (first one, among near-ties) is real and
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEigen<const N: usize> {
    pub values: SVector<f64, N>,
    pub vectors: SMatrix<Complex64, N, N>,
}

pub fn frobenius<const N: usize>(m: &SMatrix<Complex64, N, N>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative deviation from Hermiticity, ‖A − A†‖_F / ‖A‖_F (0 for A = 0).
pub fn hermitian_deviation<const N: usize>(m: &SMatrix<Complex64, N, N>) -> f64 {
    let scale = frobenius(m);
    if scale == 0.0 {
        return 0.0;
    }
    frobenius(&(m - m.adjoint())) / scale
}

fn off_diagonal<const N: usize>(m: &SMatrix<Complex64, N, N>) -> f64 {
    let mut sum = 0.0;
    for p in 0..N {
        for q in 0..N {
            if p != q {
                sum += m[(p, q)].norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// Cyclic Jacobi diagonalisation of a Hermitian matrix.
///
/// Each rotation `U = D R D†` combines a phase `D = diag(1, e^{-iφ})` that
/// makes the (p, q) block real with the classical real Jacobi rotation `R`.
pub fn hermitian_eigen<const N: usize>(
    matrix: &SMatrix<Complex64, N, N>,
) -> Result<HermitianEigen<N>> {
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let deviation = hermitian_deviation(matrix);
    if deviation > HERMITIAN_TOLERANCE {
        return Err(Error::NonHermitian { deviation });
    }

    // symmetrise so rounding in the input does not leak into the rotations
    let mut a = (matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
    let mut v = SMatrix::<Complex64, N, N>::identity();
    let scale = frobenius(&a);

    if scale > 0.0 {
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            if off_diagonal(&a) <= JACOBI_TOLERANCE * scale {
                converged = true;
                break;
            }
            for p in 0..N {
                for q in (p + 1)..N {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
        if !converged {
            let off = off_diagonal(&a) / scale;
            if off > JACOBI_TOLERANCE {
                return Err(Error::EigenNoConvergence {
                    sweeps: MAX_SWEEPS,
                    off_diagonal: off,
                });
            }
        }
    }

    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re).then(i.cmp(&j)));

    let mut values = SVector::<f64, N>::zeros();
    let mut vectors = SMatrix::<Complex64, N, N>::zeros();
    for (k, &src) in order.iter().enumerate() {
        values[k] = a[(src, src)].re;
        let mut col = v.column(src).into_owned();
        fix_phase(&mut col);
        vectors.set_column(k, &col);
    }
    Ok(HermitianEigen { values, vectors })
}

fn rotate<const N: usize>(
    a: &mut SMatrix<Complex64, N, N>,
    v: &mut SMatrix<Complex64, N, N>,
    p: usize,
    q: usize,
) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let phase = apq / mag;
    let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let u_pp = Complex64::new(c, 0.0);
    let u_pq = phase * s;
    let u_qp = -phase.conj() * s;
    let u_qq = Complex64::new(c, 0.0);

    // A ← A U
    for k in 0..N {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u_pp + akq * u_qp;
        a[(k, q)] = akp * u_pq + akq * u_qq;
    }
    // A ← U† A
    for k in 0..N {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;

    // V ← V U
    for k in 0..N {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

/// Rotate the global phase so the dominant component is real and positive.
///
/// Components within a relative 1e-8 of the maximum magnitude count as ties
/// and the first of them is used, so equal-weight superpositions get a
/// reproducible phase.
pub fn fix_phase<const N: usize>(col: &mut SVector<Complex64, N>) {
    let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = col
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-8))
        .unwrap_or(0);
    let z = col[pivot];
    let rot = z.conj() / z.norm();
    for c in col.iter_mut() {
        *c *= rot;
    }
    col[pivot] = Complex64::new(col[pivot].norm(), 0.0);
}

/// ⟨u|A|v⟩.
pub fn sandwich<const N: usize>(
    u: &SVector<Complex64, N>,
    a: &SMatrix<Complex64, N, N>,
    v: &SVector<Complex64, N>,
) -> Complex64 {
    u.dotc(&(a * v))
}

/// Kronecker product of two 2×2 complex matrices.
pub fn kron2(
    a: &SMatrix<Complex64, 2, 2>,
    b: &SMatrix<Complex64, 2, 2>,
) -> SMatrix<Complex64, 4, 4> {
    let mut out = SMatrix::<Complex64, 4, 4>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}
