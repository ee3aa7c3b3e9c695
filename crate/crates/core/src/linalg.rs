//! Dense complex matrices and a selected-eigenpair solver for symmetric
//! tridiagonal matrices (Sturm bisection plus inverse iteration).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::optics::C64;

pub type CMatrix = DMatrix<C64>;

/// Frobenius norm of `U†U − I`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let g = u.adjoint() * u;
    (g - CMatrix::identity(n, n)).norm()
}

pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}

/// Haar-distributed random unitary: QR of a complex Ginibre matrix with the
/// phases of `diag(R)` folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Real symmetric tridiagonal matrix stored as its diagonal and
/// first off-diagonal.
#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal must have n-1 entries");
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        self.count_below_with(x, f64::EPSILON * self.gershgorin().1.abs().max(1.0) * 1e-3)
    }

    fn count_below_with(&self, x: f64, tiny: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..self.len() {
            if i > 0 {
                let e = self.off[i - 1];
                q = self.diag[i] - x - e * e / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// All eigenvalues strictly greater than `threshold`, in descending order.
    pub fn eigenvalues_above(&self, threshold: f64) -> Vec<f64> {
        let n = self.len();
        let (_, hi) = self.gershgorin();
        if threshold >= hi {
            return Vec::new();
        }
        let below = self.count_below(threshold);
        let above = n - below;
        let hi = hi + hi.abs() * 1e-12 + 1e-12;
        // k-th eigenvalue from the top has index n-1-k in ascending order
        (0..above).map(|k| self.kth_eigenvalue(n - 1 - k, threshold, hi)).collect()
    }

    /// `index`-th smallest eigenvalue, known to lie in `(lo, hi)`.
    fn kth_eigenvalue(&self, index: usize, mut lo: f64, mut hi: f64) -> f64 {
        let tiny = f64::EPSILON * self.gershgorin().1.abs().max(1.0) * 1e-3;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below_with(mid, tiny) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve `(T − σ I) x = b` by Gaussian elimination with partial pivoting.
    fn shifted_solve(&self, sigma: f64, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        // rows stored as (a, b, c) = entries at columns i, i+1, i+2 after pivoting
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - sigma).collect();
        let mut du: Vec<f64> = self.off.clone();
        du.push(0.0);
        let mut du2 = vec![0.0; n];
        let mut dl: Vec<f64> = self.off.clone();
        let mut rhs = b.to_vec();
        let floor = f64::EPSILON * self.gershgorin().1.abs().max(1.0);
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = floor;
                }
                let f = dl[i] / d[i];
                d[i + 1] -= f * du[i];
                rhs[i + 1] -= f * rhs[i];
                dl[i] = f;
            } else {
                // swap rows i and i+1
                let f = d[i] / dl[i];
                d[i] = dl[i];
                let tmp = d[i + 1];
                d[i + 1] = du[i] - f * tmp;
                du[i] = tmp;
                if i + 1 < n - 1 {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du2[i];
                }
                rhs.swap(i, i + 1);
                rhs[i + 1] -= f * rhs[i];
                dl[i] = f;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = floor;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            if i + 1 < n {
                s -= du[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= du2[i] * x[i + 2];
            }
            x[i] = s / d[i];
        }
        x
    }

    /// Unit eigenvector for an accurately known eigenvalue.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.len();
        let scale = self.gershgorin().1.abs().max(1.0);
        let sigma = lambda + 4.0 * f64::EPSILON * scale;
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.754_877_666).sin()).collect();
        for _ in 0..4 {
            x = self.shifted_solve(sigma, &x);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        }
        x
    }

    /// Largest eigenvalue and its unit eigenvector.
    pub fn largest_eigenpair(&self) -> (f64, Vec<f64>) {
        let (lo, hi) = self.gershgorin();
        let pad = hi.abs().max(lo.abs()) * 1e-12 + 1e-12;
        let lambda = self.kth_eigenvalue(self.len() - 1, lo - pad, hi + pad);
        (lambda, self.eigenvector(lambda))
    }

    /// Eigenpairs with eigenvalue above `threshold`, descending, with the
    /// eigenvectors re-orthonormalized against each other.
    pub fn eigenpairs_above(&self, threshold: f64) -> Vec<(f64, Vec<f64>)> {
        let values = self.eigenvalues_above(threshold);
        let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(values.len());
        for lambda in values {
            let mut v = self.eigenvector(lambda);
            for _ in 0..2 {
                for (_, u) in &out {
                    let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= dot * ui);
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
            }
            out.push((lambda, v));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense(t: &SymTridiagonal) -> DMatrix<f64> {
        let n = t.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                t.diag[i]
            } else if i + 1 == j {
                t.off[i]
            } else if j + 1 == i {
                t.off[j]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn tridiagonal_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let diag: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let off: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = SymTridiagonal::new(diag, off);
        let mut reference: Vec<f64> = dense(&t).symmetric_eigenvalues().iter().copied().collect();
        reference.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let ours = t.eigenvalues_above(0.5);
        let expected: Vec<f64> = reference.iter().copied().filter(|&v| v > 0.5).collect();
        assert_eq!(ours.len(), expected.len());
        for (a, b) in ours.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let a = dense(&t);
        for (lambda, v) in t.eigenpairs_above(0.5) {
            let v = nalgebra::DVector::from_vec(v);
            let r = &a * &v - &v * lambda;
            assert!(r.norm() < 1e-9, "residual {}", r.norm());
        }
    }

    #[test]
    fn laplacian_eigenvectors_are_orthonormal() {
        let n = 400;
        let t = SymTridiagonal::new(vec![-2.0; n], vec![1.0; n - 1]);
        let pairs = t.eigenpairs_above(-0.05);
        assert!(!pairs.is_empty());
        for (i, (li, vi)) in pairs.iter().enumerate() {
            let k = (i + 1) as f64;
            let exact = -2.0 + 2.0 * (k * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((li - exact).abs() < 1e-12);
            for (_, vj) in pairs.iter().skip(i + 1) {
                let dot: f64 = vi.iter().zip(vj).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 5, 16] {
            let u = haar_unitary(n, &mut rng);
            assert!(unitarity_residual(&u) < 1e-12);
        }
    }
}
