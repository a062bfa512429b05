//! Fixed-size truncated Taylor arithmetic.
//!
//! Two tiny series types back the exact differentiation of the boundary
//! projection map: univariate jets in the curve parameter (degree <= 8) and
//! bivariate jets in the evaluation-point offset (total degree <= 4). Both
//! are plain value types over `f64`; truncation is part of the ring, so every
//! operation is exact differentiation of the represented function.

/// Number of univariate coefficients (degrees 0..=8).
pub const LEN1: usize = 9;

/// Univariate truncated Taylor series `sum c[k] d^k`, degree <= 8.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Series1 {
    pub c: [f64; LEN1],
}

impl Series1 {
    pub fn zero() -> Self {
        Series1 { c: [0.0; LEN1] }
    }

    pub fn constant(v: f64) -> Self {
        let mut s = Self::zero();
        s.c[0] = v;
        s
    }

    /// The variable itself, `d`.
    pub fn var() -> Self {
        let mut s = Self::zero();
        s.c[1] = 1.0;
        s
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = *self;
        for k in 0..LEN1 {
            r.c[k] += o.c[k];
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut r = *self;
        for k in 0..LEN1 {
            r.c[k] -= o.c[k];
        }
        r
    }

    pub fn scale(&self, f: f64) -> Self {
        let mut r = *self;
        for k in 0..LEN1 {
            r.c[k] *= f;
        }
        r
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for i in 0..LEN1 {
            if self.c[i] == 0.0 {
                continue;
            }
            for j in 0..LEN1 - i {
                r.c[i + j] += self.c[i] * o.c[j];
            }
        }
        r
    }

    /// `sqrt(self)`; requires a positive constant term.
    pub fn sqrt(&self) -> Self {
        let a0 = self.c[0];
        assert!(a0 > 0.0, "sqrt of series with non-positive constant term");
        // self = a0 (1 + t), sqrt = sqrt(a0) * (1+t)^{1/2} via binomial series.
        let mut t = self.scale(1.0 / a0);
        t.c[0] = 0.0;
        // Binomial coefficients C(1/2, k) for k = 0..=8.
        let mut coef = [0.0; LEN1];
        coef[0] = 1.0;
        let mut acc = 1.0;
        for (k, ck) in coef.iter_mut().enumerate().skip(1) {
            acc *= (0.5 - (k as f64 - 1.0)) / k as f64;
            *ck = acc;
        }
        let mut r = Self::constant(coef[LEN1 - 1]);
        for k in (0..LEN1 - 1).rev() {
            r = r.mul(&t);
            r.c[0] += coef[k];
        }
        r.scale(a0.sqrt())
    }

    /// k-th derivative value at the expansion point: `c[k] * k!`.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 1..=k {
            fact *= i as f64;
        }
        self.c[k] * fact
    }

    /// Series of the derivative function (degree drops by one).
    pub fn derivative_series(&self) -> Self {
        let mut r = Self::zero();
        for k in 1..LEN1 {
            r.c[k - 1] = self.c[k] * k as f64;
        }
        r
    }
}

/// Maximum total degree of the bivariate series.
pub const DEG2: usize = 4;
/// Number of bivariate coefficients with total degree <= 4.
pub const LEN2: usize = 15;

/// Offset of the degree-`t` block inside the coefficient array.
#[inline]
const fn block(t: usize) -> usize {
    t * (t + 1) / 2
}

/// Index of the monomial `d1^i d2^j` (must satisfy `i + j <= DEG2`).
#[inline]
pub fn idx2(i: usize, j: usize) -> usize {
    debug_assert!(i + j <= DEG2);
    block(i + j) + j
}

/// Bivariate truncated Taylor series in offsets `(d1, d2)`, total degree <= 4.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Series2 {
    pub c: [f64; LEN2],
}

impl Series2 {
    pub fn zero() -> Self {
        Series2 { c: [0.0; LEN2] }
    }

    pub fn constant(v: f64) -> Self {
        let mut s = Self::zero();
        s.c[0] = v;
        s
    }

    /// The offset variable `d1` or `d2`.
    pub fn var(axis: usize) -> Self {
        let mut s = Self::zero();
        s.c[idx2(1 - axis, axis)] = 1.0;
        s
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = *self;
        for k in 0..LEN2 {
            r.c[k] += o.c[k];
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut r = *self;
        for k in 0..LEN2 {
            r.c[k] -= o.c[k];
        }
        r
    }

    pub fn scale(&self, f: f64) -> Self {
        let mut r = *self;
        for k in 0..LEN2 {
            r.c[k] *= f;
        }
        r
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for ta in 0..=DEG2 {
            for ja in 0..=ta {
                let a = self.c[block(ta) + ja];
                if a == 0.0 {
                    continue;
                }
                let ia = ta - ja;
                for tb in 0..=DEG2 - ta {
                    for jb in 0..=tb {
                        let b = o.c[block(tb) + jb];
                        if b == 0.0 {
                            continue;
                        }
                        let ib = tb - jb;
                        r.c[idx2(ia + ib, ja + jb)] += a * b;
                    }
                }
            }
        }
        r
    }

    /// Lowest total degree with a nonzero coefficient (`DEG2 + 1` if zero).
    pub fn valuation(&self) -> usize {
        for t in 0..=DEG2 {
            for j in 0..=t {
                if self.c[block(t) + j] != 0.0 {
                    return t;
                }
            }
        }
        DEG2 + 1
    }

    /// Compose a univariate series with this one; requires (numerically)
    /// zero constant term so that truncation commutes with composition.
    pub fn compose1(outer: &Series1, inner: &Series2) -> Series2 {
        debug_assert!(
            inner.c[0].abs() < 1e-8,
            "inner series constant term {} too large for composition",
            inner.c[0]
        );
        let mut r = Series2::constant(outer.c[LEN1 - 1]);
        for k in (0..LEN1 - 1).rev() {
            r = r.mul(inner);
            r.c[0] += outer.c[k];
        }
        r
    }

    /// `1 / self`; requires a nonzero constant term.
    pub fn recip(&self) -> Series2 {
        let a0 = self.c[0];
        assert!(a0 != 0.0, "recip of series with zero constant term");
        let mut t = self.scale(1.0 / a0);
        t.c[0] = 0.0;
        // 1/(1+t) = 1 - t + t^2 - t^3 + t^4 (truncated)
        let mut r = Series2::constant(1.0);
        for _ in 0..DEG2 {
            r = r.mul(&t).scale(-1.0);
            r.c[0] += 1.0;
        }
        r.scale(1.0 / a0)
    }

    /// `1 / sqrt(self)`; requires a positive constant term.
    pub fn inv_sqrt(&self) -> Series2 {
        let a0 = self.c[0];
        assert!(a0 > 0.0, "inv_sqrt of series with non-positive constant term");
        let mut t = self.scale(1.0 / a0);
        t.c[0] = 0.0;
        // (1+t)^{-1/2} = 1 - t/2 + 3t^2/8 - 5t^3/16 + 35t^4/128
        let coef = [1.0, -0.5, 0.375, -0.3125, 0.2734375];
        let mut r = Series2::constant(coef[DEG2]);
        for k in (0..DEG2).rev() {
            r = r.mul(&t);
            r.c[0] += coef[k];
        }
        r.scale(1.0 / a0.sqrt())
    }

    /// Partial derivative value `d^(i+j) f / d1^i d2^j` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> f64 {
        let mut fact = 1.0;
        for k in 1..=i {
            fact *= k as f64;
        }
        for k in 1..=j {
            fact *= k as f64;
        }
        self.c[idx2(i, j)] * fact
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series1_sqrt_matches_binomial() {
        // sqrt(4 + d) = 2 sqrt(1 + d/4)
        let mut q = Series1::constant(4.0);
        q.c[1] = 1.0;
        let s = q.sqrt();
        assert!((s.c[0] - 2.0).abs() < 1e-15);
        assert!((s.c[1] - 0.25).abs() < 1e-15);
        assert!((s.c[2] + 1.0 / 64.0).abs() < 1e-15);
        // check s*s == q
        let back = s.mul(&s);
        for k in 0..LEN1 {
            assert!((back.c[k] - q.c[k]).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn series2_mul_and_partials() {
        // f = (1 + d1)(2 + d2) => f = 2 + d2 + 2 d1 + d1 d2
        let a = Series2::constant(1.0).add(&Series2::var(0));
        let b = Series2::constant(2.0).add(&Series2::var(1));
        let f = a.mul(&b);
        assert_eq!(f.partial(0, 0), 2.0);
        assert_eq!(f.partial(1, 0), 2.0);
        assert_eq!(f.partial(0, 1), 1.0);
        assert_eq!(f.partial(1, 1), 1.0);
        assert_eq!(f.partial(2, 0), 0.0);
    }

    #[test]
    fn series2_recip_roundtrip() {
        let mut q = Series2::constant(2.0);
        q.c[idx2(1, 0)] = 0.3;
        q.c[idx2(0, 1)] = -0.7;
        q.c[idx2(1, 1)] = 0.11;
        let r = q.recip();
        let one = q.mul(&r);
        assert!((one.c[0] - 1.0).abs() < 1e-14);
        for k in 1..LEN2 {
            assert!(one.c[k].abs() < 1e-13, "k={k} -> {}", one.c[k]);
        }
    }

    #[test]
    fn series2_inv_sqrt_roundtrip() {
        let mut q = Series2::constant(3.0);
        q.c[idx2(1, 0)] = -0.4;
        q.c[idx2(0, 2)] = 0.9;
        let r = q.inv_sqrt();
        let prod = q.mul(&r).mul(&r);
        assert!((prod.c[0] - 1.0).abs() < 1e-14);
        for k in 1..LEN2 {
            assert!(prod.c[k].abs() < 1e-13, "k={k} -> {}", prod.c[k]);
        }
    }

    #[test]
    fn compose_univariate_into_bivariate() {
        // outer(u) = 1 + u + u^2, inner = d1 + d2^2
        let mut outer = Series1::zero();
        outer.c[0] = 1.0;
        outer.c[1] = 1.0;
        outer.c[2] = 1.0;
        let inner = Series2::var(0).add(&Series2::var(1).mul(&Series2::var(1)));
        let f = Series2::compose1(&outer, &inner);
        // f = 1 + d1 + d2^2 + (d1 + d2^2)^2 = 1 + d1 + d2^2 + d1^2 + 2 d1 d2^2 + d2^4
        assert_eq!(f.partial(0, 0), 1.0);
        assert_eq!(f.partial(1, 0), 1.0);
        assert_eq!(f.partial(0, 2), 2.0);
        assert_eq!(f.partial(2, 0), 2.0);
        assert_eq!(f.partial(1, 2), 4.0);
        assert_eq!(f.partial(0, 4), 24.0);
    }
}
