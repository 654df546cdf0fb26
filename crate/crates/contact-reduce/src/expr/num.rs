//! Scalar abstraction used by the expression evaluator: plain `f64` for
//! values, forward-mode dual numbers for exact first derivatives.

/// Domain failures raised by scalar primitives. The evaluator wraps these
/// with the offending subexpression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumError {
    DivByZero,
    SqrtNegative,
    SqrtDerivAtZero,
    LogNonPositive,
    PowNegativeBase,
    PowZeroBase,
    AbsDerivAtZero,
    Atan2Origin,
}

impl NumError {
    pub fn message(self) -> &'static str {
        match self {
            NumError::DivByZero => "division by zero",
            NumError::SqrtNegative => "sqrt of a negative value",
            NumError::SqrtDerivAtZero => "derivative of sqrt at zero",
            NumError::LogNonPositive => "log of a non-positive value",
            NumError::PowNegativeBase => {
                "negative base raised to a non-integer or varying exponent"
            }
            NumError::PowZeroBase => "zero base raised to a non-positive exponent",
            NumError::AbsDerivAtZero => "derivative of abs at zero",
            NumError::Atan2Origin => "atan2 at the origin",
        }
    }
}

pub(crate) fn is_exact_integer(x: f64) -> bool {
    x.fract() == 0.0 && x.abs() < 9.0e15
}

/// Operations every evaluation scalar must provide. Fallible ops return
/// `NumError` on domain violations instead of producing NaN.
pub trait Scalar: Clone {
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;

    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn div(&self, o: &Self) -> Result<Self, NumError>;
    fn pow(&self, o: &Self) -> Result<Self, NumError>;

    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn sqrt(&self) -> Result<Self, NumError>;
    fn ln(&self) -> Result<Self, NumError>;
    fn abs(&self) -> Result<Self, NumError>;
    /// `self.atan2(x)` with `self` the y argument.
    fn atan2(&self, x: &Self) -> Result<Self, NumError>;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, o: &Self) -> Result<Self, NumError> {
        if *o == 0.0 {
            return Err(NumError::DivByZero);
        }
        Ok(self / o)
    }
    fn pow(&self, o: &Self) -> Result<Self, NumError> {
        pow_value(*self, *o)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sqrt(&self) -> Result<Self, NumError> {
        if *self < 0.0 {
            return Err(NumError::SqrtNegative);
        }
        Ok(f64::sqrt(*self))
    }
    fn ln(&self) -> Result<Self, NumError> {
        if *self <= 0.0 {
            return Err(NumError::LogNonPositive);
        }
        Ok(f64::ln(*self))
    }
    fn abs(&self) -> Result<Self, NumError> {
        Ok(f64::abs(*self))
    }
    fn atan2(&self, x: &Self) -> Result<Self, NumError> {
        Ok(f64::atan2(*self, *x))
    }
}

fn pow_value(a: f64, b: f64) -> Result<f64, NumError> {
    if a > 0.0 {
        return Ok(a.powf(b));
    }
    if a == 0.0 {
        if b > 0.0 {
            return Ok(0.0);
        }
        if b == 0.0 {
            return Ok(1.0);
        }
        return Err(NumError::PowZeroBase);
    }
    // Negative base: only exact integer exponents, no complex branch.
    if is_exact_integer(b) {
        Ok(a.powf(b))
    } else {
        Err(NumError::PowNegativeBase)
    }
}

/// Forward-mode dual number carrying one value and a vector of partials
/// aligned with the variable set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: Vec<f64>,
}

impl Dual {
    pub fn var(v: f64, index: usize, n: usize) -> Self {
        let mut d = vec![0.0; n];
        d[index] = 1.0;
        Dual { v, d }
    }

    /// Seed a single-slot dual whose partial is a directional component; the
    /// resulting derivative is the directional derivative in one pass.
    pub fn directional(v: f64, component: f64) -> Self {
        Dual {
            v,
            d: vec![component],
        }
    }

    fn lift(&self, v: f64) -> Self {
        Dual {
            v,
            d: vec![0.0; self.d.len()],
        }
    }

    fn map(&self, v: f64, scale: f64) -> Self {
        Dual {
            v,
            d: self.d.iter().map(|x| x * scale).collect(),
        }
    }

    fn is_const(&self) -> bool {
        self.d.iter().all(|x| *x == 0.0)
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual { v, d: Vec::new() }
    }
    fn value(&self) -> f64 {
        self.v
    }

    fn add(&self, o: &Self) -> Self {
        Dual {
            v: self.v + o.v,
            d: zip(&self.d, &o.d, |a, b| a + b),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Dual {
            v: self.v - o.v,
            d: zip(&self.d, &o.d, |a, b| a - b),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        Dual {
            v: self.v * o.v,
            d: zip_scaled(&self.d, &o.d, o.v, self.v),
        }
    }
    fn neg(&self) -> Self {
        self.map(-self.v, -1.0)
    }
    fn div(&self, o: &Self) -> Result<Self, NumError> {
        if o.v == 0.0 {
            return Err(NumError::DivByZero);
        }
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        Ok(Dual {
            v,
            d: zip_scaled(&self.d, &o.d, inv, -v * inv),
        })
    }
    fn pow(&self, o: &Self) -> Result<Self, NumError> {
        let (a, b) = (self, o);
        if b.is_const() || b.d.is_empty() {
            let e = b.v;
            if a.v > 0.0 {
                let v = a.v.powf(e);
                return Ok(a.map(v, e * a.v.powf(e - 1.0)));
            }
            if a.v == 0.0 {
                if e == 0.0 {
                    return Ok(a.lift(1.0));
                }
                if e > 1.0 {
                    return Ok(a.lift(0.0));
                }
                if e == 1.0 {
                    return Ok(a.clone());
                }
                return Err(NumError::PowZeroBase);
            }
            if is_exact_integer(e) {
                let v = a.v.powf(e);
                return Ok(a.map(v, e * a.v.powf(e - 1.0)));
            }
            return Err(NumError::PowNegativeBase);
        }
        if a.v <= 0.0 {
            return Err(if a.v == 0.0 {
                NumError::PowZeroBase
            } else {
                NumError::PowNegativeBase
            });
        }
        let v = a.v.powf(b.v);
        let la = a.v.ln();
        let fa = v * b.v / a.v;
        Ok(Dual {
            v,
            d: zip_scaled(&a.d, &b.d, fa, v * la),
        })
    }

    fn sin(&self) -> Self {
        self.map(self.v.sin(), self.v.cos())
    }
    fn cos(&self) -> Self {
        self.map(self.v.cos(), -self.v.sin())
    }
    fn exp(&self) -> Self {
        let v = self.v.exp();
        self.map(v, v)
    }
    fn sqrt(&self) -> Result<Self, NumError> {
        if self.v < 0.0 {
            return Err(NumError::SqrtNegative);
        }
        if self.v == 0.0 {
            if self.is_const() {
                return Ok(self.lift(0.0));
            }
            return Err(NumError::SqrtDerivAtZero);
        }
        let v = self.v.sqrt();
        Ok(self.map(v, 0.5 / v))
    }
    fn ln(&self) -> Result<Self, NumError> {
        if self.v <= 0.0 {
            return Err(NumError::LogNonPositive);
        }
        Ok(self.map(self.v.ln(), 1.0 / self.v))
    }
    fn abs(&self) -> Result<Self, NumError> {
        if self.v > 0.0 {
            Ok(self.clone())
        } else if self.v < 0.0 {
            Ok(self.neg())
        } else if self.is_const() {
            Ok(self.clone())
        } else {
            Err(NumError::AbsDerivAtZero)
        }
    }
    fn atan2(&self, x: &Self) -> Result<Self, NumError> {
        let (y, xx) = (self, x);
        let r2 = xx.v * xx.v + y.v * y.v;
        if r2 == 0.0 {
            return Err(NumError::Atan2Origin);
        }
        let v = y.v.atan2(xx.v);
        Ok(Dual {
            v,
            d: zip_scaled(&y.d, &xx.d, xx.v / r2, -y.v / r2),
        })
    }
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Vec::new(),
        (true, false) => b.iter().map(|y| f(0.0, *y)).collect(),
        (false, true) => a.iter().map(|x| f(*x, 0.0)).collect(),
        (false, false) => a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect(),
    }
}

/// ca*a + cb*b on the partials.
fn zip_scaled(a: &[f64], b: &[f64], ca: f64, cb: f64) -> Vec<f64> {
    zip(a, b, |x, y| ca * x + cb * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual::var(2.0, 0, 2);
        let y = Dual::var(3.0, 1, 2);
        let p = x.mul(&y);
        assert_eq!(p.v, 6.0);
        assert_eq!(p.d, vec![3.0, 2.0]);
    }

    #[test]
    fn dual_pow_constant_negative_base() {
        let x = Dual::var(-2.0, 0, 1);
        let e = Dual::constant(3.0);
        let p = x.pow(&e).unwrap();
        assert_eq!(p.v, -8.0);
        assert_eq!(p.d, vec![12.0]);
    }

    #[test]
    fn dual_pow_negative_base_fractional_errors() {
        let x = Dual::var(-2.0, 0, 1);
        let e = Dual::constant(0.5);
        assert_eq!(x.pow(&e), Err(NumError::PowNegativeBase));
    }

    #[test]
    fn abs_derivative_at_zero_is_an_error() {
        let x = Dual::var(0.0, 0, 1);
        assert_eq!(x.abs(), Err(NumError::AbsDerivAtZero));
        // plain value abs at zero stays fine
        assert_eq!(Scalar::abs(&0.0f64).unwrap(), 0.0);
    }

    #[test]
    fn atan2_partials() {
        let y = Dual::var(1.0, 0, 2);
        let x = Dual::var(1.0, 1, 2);
        let a = y.atan2(&x).unwrap();
        assert!((a.v - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((a.d[0] - 0.5).abs() < 1e-15);
        assert!((a.d[1] + 0.5).abs() < 1e-15);
    }
}
