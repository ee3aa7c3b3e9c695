//! Shared numeric vocabulary for the device models, centred on 2×2 transfer
//! matrices and decibel conversions.
//!
//! Decibels are always POWER decibels. An insertion loss of `x` dB scales
//! power by `10^(-x/10)` and field amplitude by `10^(-x/20)`.
//!
//! Matrix products follow the transfer-matrix convention: in `a · b` light
//! traverses `b` first.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// A quantity in power decibels.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Db(pub f64);

impl Db {
    pub fn value(self) -> f64 {
        self.0
    }

    /// `10·log10(ratio)`; a zero ratio maps to `-inf`.
    pub fn from_power_ratio(ratio: f64) -> Self {
        Db(10.0 * ratio.log10())
    }

    /// Insertion loss (positive dB) of a device transmitting `ratio` of the power.
    pub fn loss_from_transmission(ratio: f64) -> Self {
        Db(-10.0 * ratio.log10())
    }

    pub fn power_ratio(self) -> f64 {
        10f64.powf(self.0 / 10.0)
    }
}

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} dB", self.0)
    }
}

/// Amplitude factor of an insertion loss given in dB.
pub fn db_to_amplitude(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::Domain(format!("insertion loss must be >= 0 dB, got {loss_db}")));
    }
    Ok(10f64.powf(-loss_db / 20.0))
}

/// Power factor of an insertion loss given in dB.
pub fn db_to_power(loss_db: f64) -> Result<f64> {
    db_to_amplitude(loss_db).map(|a| a * a)
}

/// Complex refractive index `n + i·k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexIndex {
    pub n: f64,
    pub k: f64,
}

impl ComplexIndex {
    pub const fn new(n: f64, k: f64) -> Self {
        Self { n, k }
    }

    pub const fn lossless(n: f64) -> Self {
        Self { n, k: 0.0 }
    }

    pub fn as_complex(self) -> C64 {
        C64::new(self.n, self.k)
    }

    pub fn permittivity(self) -> C64 {
        let z = self.as_complex();
        z * z
    }
}

/// Complex 2×2 response of a two-port optical device.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferMatrix2x2 {
    pub m: [[C64; 2]; 2],
}

impl TransferMatrix2x2 {
    pub const fn new(t11: C64, t12: C64, t21: C64, t22: C64) -> Self {
        Self { m: [[t11, t12], [t21, t22]] }
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub fn diag(a: C64, b: C64) -> Self {
        Self::new(a, ZERO, ZERO, b)
    }

    /// Ideal lossless 50:50 coupler `(1/√2)[[1, i], [i, 1]]`.
    pub fn ideal_splitter() -> Self {
        Self::splitter(0.0, 0.0).expect("ideal splitter parameters are valid")
    }

    /// Symmetric coupler with bar power fraction `0.5 + deviation` and an
    /// excess loss in dB applied to both outputs.
    pub fn splitter(deviation: f64, loss_db: f64) -> Result<Self> {
        if !(deviation.abs() < 0.5) {
            return Err(Error::Domain(format!("|splitting deviation| must be < 0.5, got {deviation}")));
        }
        let amp = db_to_amplitude(loss_db)?;
        let t = C64::from((0.5 + deviation).sqrt() * amp);
        let k = I * ((0.5 - deviation).sqrt() * amp);
        Ok(Self::new(t, k, k, t))
    }

    pub fn t11(&self) -> C64 {
        self.m[0][0]
    }
    pub fn t12(&self) -> C64 {
        self.m[0][1]
    }
    pub fn t21(&self) -> C64 {
        self.m[1][0]
    }
    pub fn t22(&self) -> C64 {
        self.m[1][1]
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::new(self.m[0][0].conj(), self.m[1][0].conj(), self.m[0][1].conj(), self.m[1][1].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.m[0][0] * s, self.m[0][1] * s, self.m[1][0] * s, self.m[1][1] * s)
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [self.m[0][0] * v[0] + self.m[0][1] * v[1], self.m[1][0] * v[0] + self.m[1][1] * v[1]]
    }

    /// `|t_ij|²` for every entry.
    pub fn power_entries(&self) -> [[f64; 2]; 2] {
        [[self.m[0][0].norm_sqr(), self.m[0][1].norm_sqr()], [self.m[1][0].norm_sqr(), self.m[1][1].norm_sqr()]]
    }

    /// Largest singular value, from the closed-form eigenvalues of `M†M`.
    pub fn spectral_norm(&self) -> f64 {
        let h = self.dagger() * *self;
        let p = h.m[0][0].re;
        let r = h.m[1][1].re;
        let q = h.m[0][1].norm_sqr();
        let half = 0.5 * (p - r);
        (0.5 * (p + r) + (half * half + q).sqrt()).max(0.0).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        d
    }

    /// Max-entry deviation of `M†M` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        (self.dagger() * *self).max_abs_diff(&Self::identity())
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Mul for TransferMatrix2x2 {
    type Output = TransferMatrix2x2;

    fn mul(self, rhs: TransferMatrix2x2) -> TransferMatrix2x2 {
        let a = &self.m;
        let b = &rhs.m;
        TransferMatrix2x2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

/// Cascade two elements: `a · b`, where light meets `b` first.
pub fn compose(a: &TransferMatrix2x2, b: &TransferMatrix2x2) -> TransferMatrix2x2 {
    *a * *b
}

/// Complex field amplitudes across `N` waveguides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldVector(pub Vec<C64>);

impl FieldVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![ZERO; n])
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = ONE;
        v
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self(values.iter().map(|&x| C64::from(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn power(&self) -> f64 {
        power(&self.0)
    }

    /// Copy scaled to unit power; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let p = self.power();
        if p == 0.0 {
            return self.clone();
        }
        let s = 1.0 / p.sqrt();
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Total optical power `Σ|aᵢ|²`.
pub fn power(amplitudes: &[C64]) -> f64 {
    amplitudes.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &TransferMatrix2x2, b: &TransferMatrix2x2, tol: f64) -> bool {
        a.max_abs_diff(b) < tol
    }

    #[test]
    fn db_conversions() {
        assert_eq!(db_to_amplitude(0.0).unwrap(), 1.0);
        assert!((db_to_amplitude(20.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((db_to_power(20.0).unwrap() - 0.01).abs() < 1e-15);
        assert!((db_to_amplitude(0.2).unwrap() - 0.97724).abs() < 1e-5);
        assert!(matches!(db_to_amplitude(-0.1), Err(Error::Domain(_))));
        assert!(db_to_amplitude(f64::NAN).is_err());
    }

    #[test]
    fn db_value_round_trip() {
        let d = Db::loss_from_transmission(0.5);
        assert!((d.value() - 3.0103).abs() < 1e-4);
        assert!((Db::from_power_ratio(1e-4).value() + 40.0).abs() < 1e-12);
        assert!((Db(-30.0).power_ratio() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn compose_identity_and_inverse() {
        let m =
            TransferMatrix2x2::new(C64::new(0.3, 0.1), C64::new(-0.2, 0.5), C64::new(0.7, 0.0), C64::new(0.1, -0.4));
        assert!(close(&compose(&TransferMatrix2x2::identity(), &m), &m, 1e-15));
        let u = TransferMatrix2x2::diag(C64::from_polar(1.0, 0.4), C64::from_polar(1.0, -1.3))
            * TransferMatrix2x2::splitter(0.13, 0.0).unwrap()
            * TransferMatrix2x2::diag(C64::from_polar(1.0, 2.2), ONE);
        assert!(close(&compose(&u, &u.dagger()), &TransferMatrix2x2::identity(), 1e-12));
    }

    #[test]
    fn two_ideal_splitters_cross_fully() {
        let s = TransferMatrix2x2::ideal_splitter();
        let cross = TransferMatrix2x2::new(ZERO, I, I, ZERO);
        assert!(close(&compose(&s, &s), &cross, 1e-15));
    }

    #[test]
    fn vector_power() {
        assert_eq!(FieldVector::zeros(4).power(), 0.0);
        assert_eq!(FieldVector::basis(4, 2).power(), 1.0);
        let v = FieldVector(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        assert!((v.power() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_norm_of_lossy_splitter() {
        let s = TransferMatrix2x2::splitter(0.1, 3.0).unwrap();
        assert!((s.spectral_norm() - db_to_amplitude(3.0).unwrap()).abs() < 1e-12);
        let d = TransferMatrix2x2::diag(C64::new(0.5, 0.0), C64::new(0.0, -0.9));
        assert!((d.spectral_norm() - 0.9).abs() < 1e-15);
    }

    fn arb_matrix() -> impl Strategy<Value = TransferMatrix2x2> {
        proptest::collection::vec(-1.0f64..1.0, 8).prop_map(|v| {
            TransferMatrix2x2::new(
                C64::new(v[0], v[1]),
                C64::new(v[2], v[3]),
                C64::new(v[4], v[5]),
                C64::new(v[6], v[7]),
            )
        })
    }

    fn arb_passive() -> impl Strategy<Value = TransferMatrix2x2> {
        (-0.49f64..0.49, 0.0f64..3.0, 0.0f64..6.3, 0.0f64..6.3).prop_map(|(d, loss, a, b)| {
            TransferMatrix2x2::diag(C64::from_polar(1.0, a), C64::from_polar(1.0, b))
                * TransferMatrix2x2::splitter(d, loss).unwrap()
        })
    }

    proptest! {
        #[test]
        fn compose_is_associative(a in arb_matrix(), b in arb_matrix(), c in arb_matrix()) {
            let left = compose(&compose(&a, &b), &c);
            let right = compose(&a, &compose(&b, &c));
            prop_assert!(left.max_abs_diff(&right) < 1e-12);
        }

        #[test]
        fn passive_cascades_never_gain(ms in proptest::collection::vec(arb_passive(), 1..12),
                                       re in -1.0f64..1.0, im in -1.0f64..1.0) {
            let total = ms.iter().fold(TransferMatrix2x2::identity(), |acc, m| *m * acc);
            let input = [C64::new(re, im), C64::new(im, -re * 0.5)];
            let p_in = power(&input);
            let p_out = power(&total.apply(input));
            prop_assert!(p_out <= p_in + 1e-9);
            prop_assert!(total.spectral_norm() <= 1.0 + 1e-9);
        }

        #[test]
        fn db_amplitudes_multiply(a in 0.0f64..30.0, b in 0.0f64..30.0) {
            let lhs = db_to_amplitude(a + b).unwrap();
            let rhs = db_to_amplitude(a).unwrap() * db_to_amplitude(b).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
