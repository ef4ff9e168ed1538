//! Dense linear-algebra kernels for small real matrices: matrix exponential
//! and the continuous Lyapunov equation.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Matrix 1-norm (max absolute column sum).
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

// Padé numerator coefficients b_0..b_m for degrees 3, 5, 7, 9, 13 and the
// 1-norm bounds below which each degree reaches unit roundoff.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(f64, usize); 4] = [
    (1.495585217958292e-2, 3),
    (2.539_398_330_063_23e-1, 5),
    (9.504178996162932e-1, 7),
    (2.097847961257068, 9),
];
const THETA13: f64 = 5.371920351148152;

/// `exp(A)` by scaling and squaring with a diagonal Padé approximant
/// (degree 3 to 13 chosen from the 1-norm).
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!(
            "expm of a {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            message: "non-finite entry in matrix exponential argument".into(),
            condition: f64::INFINITY,
        });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let norm = norm1(a);

    for &(theta, m) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(a, coeffs, &eye);
            return pade_solve(&u, &v);
        }
    }

    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);
    let (u, v) = pade13(&scaled, &eye);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64], eye: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let a2 = a * a;
    let mut powers = vec![eye.clone(), a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let n = a.nrows();
    let mut odd = DMatrix::<f64>::zeros(n, n);
    let mut even = DMatrix::<f64>::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        if 2 * k + 1 < b.len() {
            odd += p * b[2 * k + 1];
        }
        even += p * b[2 * k];
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>, eye: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + eye * b[1]);
    let v_inner = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + eye * b[0];
    (u, v)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or_else(|| Error::Numerical {
        message: "singular Pade denominator".into(),
        condition: f64::INFINITY,
    })
}

/// Unit roundoff of [`DoubleDouble`] arithmetic.
pub const DD_EPSILON: f64 = 4.930380657631324e-32;

/// Solves `A X + X Aᵀ = −D` for square `A` and symmetric `D` through the
/// `n²`-unknown Kronecker system `(I ⊗ A + A ⊗ I) vec X = −vec D`. The system
/// is factored in double-double precision; the result is symmetrized.
pub fn solve_lyapunov(a: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || d.nrows() != n || d.ncols() != n {
        return Err(Error::Shape(
            "Lyapunov operands must be square and equal size".into(),
        ));
    }
    if a.iter().chain(d.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            message: "non-finite Lyapunov operand".into(),
            condition: f64::INFINITY,
        });
    }
    let nn = n * n;
    // unknown index i + n·j holds X[i, j]
    let mut k = vec![DoubleDouble::default(); nn * nn];
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for m in 0..n {
                let c = row * nn + m + n * j;
                k[c] = k[c] + DoubleDouble::new(a[(i, m)]);
                let c = row * nn + i + n * m;
                k[c] = k[c] + DoubleDouble::new(a[(j, m)]);
            }
        }
    }
    let norm_k = (0..nn)
        .map(|c| (0..nn).map(|r| k[r * nn + c].value().abs()).sum::<f64>())
        .fold(0.0, f64::max);

    let singular = |condition| Error::Numerical {
        message: "Lyapunov operator is singular".into(),
        condition,
    };
    let lu = DdLu::factor(k, nn).ok_or_else(|| singular(f64::INFINITY))?;
    let condition = norm_k * lu.inverse_norm1_estimate();
    if !condition.is_finite() || condition * DD_EPSILON >= 1.0 {
        return Err(singular(condition));
    }

    let rhs: Vec<DoubleDouble> = (0..nn)
        .map(|r| DoubleDouble::new(-d[(r % n, r / n)]))
        .collect();
    let x = lu.solve(&rhs);
    let sol = DMatrix::from_fn(n, n, |i, j| x[i + n * j].value());
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            message: "non-finite Lyapunov solution".into(),
            condition,
        });
    }
    Ok(symmetrize(&sol))
}

/// LU factorization with partial pivoting, `P K = L U`, in double-double.
struct DdLu {
    n: usize,
    lu: Vec<DoubleDouble>,
    perm: Vec<usize>,
}

impl DdLu {
    fn factor(mut a: Vec<DoubleDouble>, n: usize) -> Option<DdLu> {
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| {
                    a[x * n + col]
                        .value()
                        .abs()
                        .total_cmp(&a[y * n + col].value().abs())
                })
                .unwrap();
            if a[piv * n + col].value() == 0.0 {
                return None;
            }
            if piv != col {
                for c in 0..n {
                    a.swap(piv * n + c, col * n + c);
                }
                perm.swap(piv, col);
            }
            let p = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                a[r * n + col] = f;
                if f.hi == 0.0 {
                    continue;
                }
                for c in col + 1..n {
                    a[r * n + c] = a[r * n + c] - f * a[col * n + c];
                }
            }
        }
        Some(DdLu { n, lu: a, perm })
    }

    fn solve(&self, b: &[DoubleDouble]) -> Vec<DoubleDouble> {
        let n = self.n;
        let mut y: Vec<DoubleDouble> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            for c in 0..r {
                y[r] = y[r] - self.lu[r * n + c] * y[c];
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                y[r] = y[r] - self.lu[r * n + c] * y[c];
            }
            y[r] = y[r] / self.lu[r * n + r];
        }
        y
    }

    /// Solves `Kᵀ x = b`.
    fn solve_transpose(&self, b: &[DoubleDouble]) -> Vec<DoubleDouble> {
        let n = self.n;
        let mut z = b.to_vec();
        for r in 0..n {
            for c in 0..r {
                z[r] = z[r] - self.lu[c * n + r] * z[c];
            }
            z[r] = z[r] / self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                z[r] = z[r] - self.lu[c * n + r] * z[c];
            }
        }
        let mut x = vec![DoubleDouble::default(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    /// Hager's estimate of `‖K⁻¹‖₁`.
    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        let mut x = vec![DoubleDouble::new(1.0 / n as f64); n];
        let mut est = 0.0;
        let mut last = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.value().abs()).sum::<f64>();
            let sign: Vec<DoubleDouble> = y
                .iter()
                .map(|v| DoubleDouble::new(if v.value() >= 0.0 { 1.0 } else { -1.0 }))
                .collect();
            let z = self.solve_transpose(&sign);
            let (jmax, zmax) =
                z.iter()
                    .map(|v| v.value().abs())
                    .enumerate()
                    .fold(
                        (0, -1.0),
                        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                    );
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a.value() * b.value()).sum();
            if zmax <= ztx || jmax == last {
                break;
            }
            last = jmax;
            x = vec![DoubleDouble::default(); n];
            x[jmax] = DoubleDouble::new(1.0);
        }
        est
    }
}

/// `‖A X + X Aᵀ + D‖_F / ‖D‖_F`
pub fn lyapunov_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let r = a * x + x * a.transpose() + d;
    let dn = d.norm();
    if dn == 0.0 {
        r.norm()
    } else {
        r.norm() / dn
    }
}

/// Double-double scalar (unevaluated sum `hi + lo`), used where long chains
/// of matrix products would otherwise accumulate rounding error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    pub fn new(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }
}

impl Add for DoubleDouble {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        let (s, e) = Self::two_sum(self.hi, o.hi);
        let (t, f) = Self::two_sum(self.lo, o.lo);
        let (s, e) = Self::fast_two_sum(s, e + t);
        let (hi, lo) = Self::fast_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;

    fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = Self::fast_two_sum(p, e);
        DoubleDouble { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;

    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * DoubleDouble::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DoubleDouble::new(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = Self::fast_two_sum(q1, q2);
        DoubleDouble { hi, lo } + DoubleDouble::new(q3)
    }
}

/// Square matrix of [`DoubleDouble`] entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DdMatrix {
    n: usize,
    data: Vec<DoubleDouble>,
}

impl DdMatrix {
    pub fn from_f64(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let data = (0..n * n)
            .map(|k| DoubleDouble::new(m[(k / n, k % n)]))
            .collect();
        DdMatrix { n, data }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.data[i * self.n + j].value())
    }

    fn at(&self, i: usize, j: usize) -> DoubleDouble {
        self.data[i * self.n + j]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        DdMatrix {
            n,
            data: (0..n * n).map(|k| self.at(k % n, k / n)).collect(),
        }
    }

    /// `(X + Xᵀ)/2`
    pub fn symmetrized(&self) -> Self {
        let half = DoubleDouble::new(0.5);
        let t = self.transpose();
        DdMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&t.data)
                .map(|(a, b)| (*a + *b) * half)
                .collect(),
        }
    }
}

impl Mul for &DdMatrix {
    type Output = DdMatrix;

    fn mul(self, o: &DdMatrix) -> DdMatrix {
        let n = self.n;
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = DoubleDouble::default();
                for k in 0..n {
                    acc = acc + self.at(i, k) * o.at(k, j);
                }
                data.push(acc);
            }
        }
        DdMatrix { n, data }
    }
}

impl Add for &DdMatrix {
    type Output = DdMatrix;

    fn add(self, o: &DdMatrix) -> DdMatrix {
        DdMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(a, b)| *a + *b)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    /// Truncated Taylor series with many terms, for modest norms only.
    fn taylor_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..80 {
            term = &term * a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn exp_of_zero_and_scalar() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(4, 4));
        for a in [1e-3, 0.3, 2.0, 40.0, 1e4] {
            let m = DMatrix::<f64>::identity(6, 6) * -a;
            let e = expm(&m).unwrap();
            let expected = (-a).exp();
            for i in 0..6 {
                let rel = ((e[(i, i)] - expected) / expected).abs();
                assert!(
                    rel < 1e-12 || (expected == 0.0 && e[(i, i)] == 0.0),
                    "a={a} rel={rel}"
                );
            }
        }
    }

    #[test]
    fn exp_of_rotation_generator() {
        let w = 7.3;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]);
        let e = expm(&m).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[w.cos(), w.sin(), -w.sin(), w.cos()]);
        assert!((e - expected).norm() < 1e-12);
    }

    #[test]
    fn exp_nilpotent() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 2.0 + 1.5, 0.0, 1.0, 3.0, 0.0, 0.0, 1.0]);
        assert!((expm(&m).unwrap() - expected).norm() < 1e-14);
    }

    #[test]
    fn lyapunov_scalar_blocks() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -0.5]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0, 3.0]));
        let x = solve_lyapunov(&a, &d).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 3.0]));
        assert!((x - expected).norm() < 1e-14);
    }

    #[test]
    fn lyapunov_singular_operator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let d = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            solve_lyapunov(&a, &d),
            Err(Error::Numerical { .. })
        ));
    }

    fn small_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.5..1.5f64, n * n)
            .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
    }

    #[test]
    fn double_double_recovers_lost_bits() {
        let a = DoubleDouble::new(1.0) + DoubleDouble::new(1e-20);
        assert_eq!(a.hi, 1.0);
        assert_eq!(a.lo, 1e-20);
        let third = DoubleDouble::new(1.0 / 3.0);
        let p = third * DoubleDouble::new(3.0);
        assert!((p.hi - 1.0).abs() <= f64::EPSILON);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let dd = DdMatrix::from_f64(&m);
        assert_eq!((&dd * &dd).to_f64(), &m * &m);
        assert_eq!(dd.transpose().to_f64(), m.transpose());
    }

    #[test]
    fn double_double_division() {
        let q = DoubleDouble::new(1.0) / DoubleDouble::new(3.0);
        let back = q * DoubleDouble::new(3.0) - DoubleDouble::new(1.0);
        assert!(back.value().abs() < 1e-31);
        assert_eq!(
            (DoubleDouble::new(6.0) / DoubleDouble::new(2.0)).value(),
            3.0
        );
    }

    #[test]
    fn dd_lu_solves_and_estimates_condition() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 2.0, 0.5, 3.0, 1.0, 2.0, 1.0, 5.0]);
        let data = (0..9)
            .map(|k| DoubleDouble::new(m[(k / 3, k % 3)]))
            .collect();
        let lu = DdLu::factor(data, 3).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = lu.solve(&b.map(DoubleDouble::new));
        let xt = lu.solve_transpose(&b.map(DoubleDouble::new));
        let xs = DVector::from_iterator(3, x.iter().map(|v| v.value()));
        let xts = DVector::from_iterator(3, xt.iter().map(|v| v.value()));
        assert!((&m * xs - DVector::from_row_slice(&b)).norm() < 1e-15);
        assert!((m.transpose() * xts - DVector::from_row_slice(&b)).norm() < 1e-15);
        let exact = norm1(&m.clone().try_inverse().unwrap());
        let est = lu.inverse_norm1_estimate();
        assert!(est <= exact * (1.0 + 1e-12) && est >= exact / 3.0);
        let singular = vec![DoubleDouble::new(1.0); 4];
        assert!(DdLu::factor(singular, 2).is_none());
    }

    proptest! {
        #[test]
        fn expm_matches_taylor(a in small_matrix(5)) {
            let e = expm(&a).unwrap();
            let t = taylor_exp(&a);
            prop_assert!((&e - &t).norm() <= 1e-12 * t.norm());
        }

        #[test]
        fn expm_semigroup(a in small_matrix(4), s in 0.1..3.0f64) {
            let one = expm(&(&a * s)).unwrap();
            let two = expm(&(&a * (2.0 * s))).unwrap();
            prop_assert!((&one * &one - &two).norm() <= 1e-11 * two.norm().max(1.0));
        }

        #[test]
        fn lyapunov_residual_small(a in small_matrix(4)) {
            // shift to make the matrix Hurwitz
            let shift = norm1(&a) + 0.5;
            let a = a - DMatrix::<f64>::identity(4, 4) * shift;
            let d = DMatrix::<f64>::identity(4, 4);
            let x = solve_lyapunov(&a, &d).unwrap();
            prop_assert!(lyapunov_residual(&a, &x, &d) < 1e-13);
            prop_assert_eq!(x.clone(), x.transpose());
        }
    }
}
