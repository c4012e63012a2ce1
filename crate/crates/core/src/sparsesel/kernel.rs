use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numcore::{BSplineBasis, MAX_DEGREE};

/// Relative floor applied to kernel eigenvalues before taking square roots.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Per-predictor Gram matrices `R_j[k1, k2] = E{B_{j,k1}(u) B_{j,k2}(u)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupKernel {
    pub matrices: Vec<DMatrix<f64>>,
}

impl GroupKernel {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.matrices.iter().map(DMatrix::nrows).collect()
    }
}

/// Empirical kernel: `R_j = (1/n) sum_i B_j(u_i) B_j(u_i)'`.
pub fn group_kernel(bases: &[BSplineBasis], u: &[f64]) -> Result<GroupKernel> {
    if u.is_empty() {
        return Err(Error::invalid("kernel needs a non-empty u sample"));
    }
    let n = u.len() as f64;
    let mut local = [0.0; MAX_DEGREE + 1];
    let matrices = bases
        .iter()
        .map(|basis| {
            let k = basis.n_basis();
            let d = basis.degree();
            let mut r = DMatrix::zeros(k, k);
            for &t in u {
                let s = basis.eval_local(t, &mut local);
                for a in 0..=d {
                    for b in 0..=d {
                        r[(s + a, s + b)] += local[a] * local[b];
                    }
                }
            }
            r / n
        })
        .collect();
    Ok(GroupKernel { matrices })
}

/// `R^{1/2}` and `R^{-1/2}` with eigenvalues floored at `EIGEN_FLOOR * max`.
#[derive(Debug, Clone)]
pub(crate) struct KernelRoots {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

pub(crate) fn kernel_roots(r: &DMatrix<f64>) -> KernelRoots {
    let k = r.nrows();
    let sym = (r + r.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let floor = if top > 0.0 { EIGEN_FLOOR * top } else { 1.0 };
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|&e| e.max(floor)).collect();
    let v = &eig.eigenvectors;
    let build = |f: &dyn Fn(f64) -> f64| {
        let d = DVector::from_iterator(k, vals.iter().map(|&e| f(e)));
        v * DMatrix::from_diagonal(&d) * v.transpose()
    };
    KernelRoots {
        sqrt: build(&|e| e.sqrt()),
        inv_sqrt: build(&|e| 1.0 / e.sqrt()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_basis_gives_unit_kernel() {
        let b = BSplineBasis::new(0, vec![], (0.0, 1.0)).unwrap();
        let r = group_kernel(&[b], &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(r.matrices[0], DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn disjoint_supports_are_orthogonal() {
        let b = BSplineBasis::new(0, vec![0.5], (0.0, 1.0)).unwrap();
        let r = group_kernel(&[b], &[0.1, 0.2, 0.7]).unwrap();
        let m = &r.matrices[0];
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert!((m[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_sample_matches_quadrature() {
        let basis = BSplineBasis::new(3, vec![0.25, 0.4, 0.8], (0.0, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let r = group_kernel(std::slice::from_ref(&basis), &u).unwrap();
        // composite Simpson on 2000 panels
        let m = 2000;
        let h = 1.0 / m as f64;
        let k = basis.n_basis();
        let mut q = DMatrix::zeros(k, k);
        for i in 0..=m {
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let b = basis.eval(i as f64 * h);
            q += DMatrix::from_fn(k, k, |a, c| w * b[a] * b[c]) * (h / 3.0);
        }
        for a in 0..k {
            for c in 0..k {
                assert!((r.matrices[0][(a, c)] - q[(a, c)]).abs() < 0.02);
            }
        }
    }

    #[test]
    fn kernel_is_symmetric_psd() {
        let basis = BSplineBasis::new(2, vec![0.3, 0.35, 0.9], (0.0, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let r = &group_kernel(&[basis], &u).unwrap().matrices[0];
        assert!((r - r.transpose()).amax() <= 1e-12);
        let eig = SymmetricEigen::new(r.clone());
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn roots_invert_each_other() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let roots = kernel_roots(&r);
        assert!((&roots.sqrt * &roots.sqrt - &r).amax() < 1e-12);
        assert!((&roots.sqrt * &roots.inv_sqrt - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn empty_sample_rejected() {
        let b = BSplineBasis::new(1, vec![], (0.0, 1.0)).unwrap();
        assert!(group_kernel(&[b], &[]).is_err());
    }
}
