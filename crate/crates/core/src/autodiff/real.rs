//! Scalar types the tape can run over.
//!
//! `f64` gives values and gradients. [`Dual`] carries a tangent alongside every
//! value, so running the tape's forward and backward passes over duals yields the
//! directional derivative of the gradient, i.e. an exact Hessian-vector product.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(x: f64) -> Self;

    /// Primal part.
    fn re(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn is_finite(self) -> bool;

    /// `c (+)= op(a) * op(b)` with row-major storage.
    ///
    /// `op(a)` is `m x k`; when `a_t` is set, `a` is stored as `k x m`.
    /// Likewise `op(b)` is `k x n`, stored `n x k` when `b_t` is set.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        c: &mut [Self],
        accumulate: bool,
    );
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    // logical (rows x cols) view
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

#[allow(clippy::too_many_arguments)]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs size");
    assert_eq!(b.len(), k * n, "gemm: rhs size");
    assert_eq!(c.len(), m * n, "gemm: out size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in c.iter_mut() {
            *x *= beta;
        }
        return;
    }
    let (rsa, csa) = strides(m, k, a_t);
    let (rsb, csb) = strides(k, n, b_t);
    // SAFETY: sizes were checked above and the strides describe in-bounds views.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        c: &mut [Self],
        accumulate: bool,
    ) {
        dgemm(m, k, n, a, a_t, b, b_t, c, if accumulate { 1.0 } else { 0.0 });
    }
}

/// First-order dual number `re + eps * tan` with `eps^2 = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub tan: f64,
}

impl Dual {
    pub const fn new(re: f64, tan: f64) -> Self {
        Self { re, tan }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.tan + o.tan)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.tan - o.tan)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.tan + self.tan * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let q = self.re / o.re;
        Dual::new(q, (self.tan - q * o.tan) / o.re)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.tan)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.re += o.re;
        self.tan += o.tan;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Dual) {
        self.re -= o.re;
        self.tan -= o.tan;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}

impl Real for Dual {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Dual::new(x, 0.0)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.tan)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.tan / self.re)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.tan / (2.0 * s))
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual::new(t, (1.0 - t * t) * self.tan)
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.tan.is_finite()
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        c: &mut [Self],
        accumulate: bool,
    ) {
        let (ar, at): (Vec<f64>, Vec<f64>) = a.iter().map(|d| (d.re, d.tan)).unzip();
        let (br, bt): (Vec<f64>, Vec<f64>) = b.iter().map(|d| (d.re, d.tan)).unzip();
        let mut cr = vec![0.0; m * n];
        let mut ct = vec![0.0; m * n];
        dgemm(m, k, n, &ar, a_t, &br, b_t, &mut cr, 0.0);
        dgemm(m, k, n, &at, a_t, &br, b_t, &mut ct, 0.0);
        dgemm(m, k, n, &ar, a_t, &bt, b_t, &mut ct, 1.0);
        for ((out, r), t) in c.iter_mut().zip(cr).zip(ct) {
            if accumulate {
                out.re += r;
                out.tan += t;
            } else {
                *out = Dual::new(r, t);
            }
        }
    }
}
