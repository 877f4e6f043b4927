use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Polynomial in `p` with exact rational coefficients, lowest degree first.
/// Trailing zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PPolynomial {
    coeffs: Vec<BigRational>,
}

impl PPolynomial {
    pub fn zero() -> Self {
        PPolynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: i64) -> Self {
        Self::from_coeffs(vec![BigRational::from_integer(c.into())])
    }

    pub fn from_coeffs(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        PPolynomial { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::from_coeffs(
            coeffs
                .iter()
                .map(|c| BigRational::from_integer((*c).into()))
                .collect(),
        )
    }

    /// `sum_k weight[k] p^k (1-p)^(m-k)` with `m = weight.len() - 1`.
    pub fn from_bernstein(weights: &[BigInt]) -> Self {
        let m = weights.len().saturating_sub(1);
        let mut out = vec![BigInt::zero(); m + 1];
        for (k, w) in weights.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            // (1-p)^(m-k) = sum_j C(m-k, j) (-1)^j p^j
            let mut binom = BigInt::one();
            for j in 0..=(m - k) {
                let term = w * &binom;
                if j % 2 == 0 {
                    out[k + j] += term;
                } else {
                    out[k + j] -= term;
                }
                binom = binom * BigInt::from(m - k - j) / BigInt::from(j + 1);
            }
        }
        Self::from_coeffs(out.into_iter().map(BigRational::from_integer).collect())
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn derivative(&self) -> Self {
        Self::from_coeffs(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * BigRational::from_integer(k.into()))
                .collect(),
        )
    }

    /// Exact value at a rational `p` (Horner).
    pub fn eval(&self, p: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * p + c)
    }

    pub fn eval_f64(&self, p: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * p + c.to_f64().unwrap_or(f64::NAN))
    }
}

fn binop(a: &PPolynomial, b: &PPolynomial, f: impl Fn(&BigRational, &BigRational) -> BigRational) -> PPolynomial {
    let n = a.coeffs.len().max(b.coeffs.len());
    let zero = BigRational::zero();
    PPolynomial::from_coeffs(
        (0..n)
            .map(|i| f(a.coeffs.get(i).unwrap_or(&zero), b.coeffs.get(i).unwrap_or(&zero)))
            .collect(),
    )
}

impl Add for &PPolynomial {
    type Output = PPolynomial;
    fn add(self, rhs: &PPolynomial) -> PPolynomial {
        binop(self, rhs, |x, y| x + y)
    }
}

impl Sub for &PPolynomial {
    type Output = PPolynomial;
    fn sub(self, rhs: &PPolynomial) -> PPolynomial {
        binop(self, rhs, |x, y| x - y)
    }
}

impl Mul for &PPolynomial {
    type Output = PPolynomial;
    fn mul(self, rhs: &PPolynomial) -> PPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return PPolynomial::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        PPolynomial::from_coeffs(out)
    }
}

impl fmt::Display for PPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let sign = if c.is_negative() { "-" } else { "+" };
            if first {
                if c.is_negative() {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let mag = c.abs();
            let show_coeff = k == 0 || !mag.is_one();
            if show_coeff {
                write!(f, "{mag}")?;
            }
            match k {
                0 => {}
                1 => f.write_str("p")?,
                _ => write!(f, "p^{k}")?,
            }
        }
        Ok(())
    }
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(num.into(), den.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernstein_expansion() {
        // Two edges, event "both open": weight only at k = 2.
        let w = vec![BigInt::zero(), BigInt::zero(), BigInt::one()];
        assert_eq!(PPolynomial::from_bernstein(&w), PPolynomial::from_i64(&[0, 0, 1]));
        // All configurations of three edges: total probability 1.
        let all: Vec<BigInt> = [1, 3, 3, 1].iter().map(|c| BigInt::from(*c)).collect();
        assert_eq!(PPolynomial::from_bernstein(&all), PPolynomial::constant(1));
        // Single edge closed: 1 - p.
        let closed = vec![BigInt::one(), BigInt::zero()];
        assert_eq!(PPolynomial::from_bernstein(&closed), PPolynomial::from_i64(&[1, -1]));
    }

    #[test]
    fn calculus_and_eval() {
        let q = PPolynomial::from_i64(&[0, 0, 2, 0, -1]);
        assert_eq!(q.derivative(), PPolynomial::from_i64(&[0, 4, 0, -4]));
        assert_eq!(q.eval(&rational(1, 2)), rational(7, 16));
        assert_eq!(q.to_string(), "2p^2 - p^4");
        let prod = &PPolynomial::from_i64(&[1, 1]) * &PPolynomial::from_i64(&[1, -1]);
        assert_eq!(prod, PPolynomial::from_i64(&[1, 0, -1]));
        assert!((&q - &q).is_zero());
    }
}
