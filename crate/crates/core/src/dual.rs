//! First-order forward-mode dual numbers in two variables.
//!
//! Used to push analytic first derivatives of the height function through the
//! frame construction (normals, Gram-Schmidt frames, curvature) without
//! hand-expanding every product rule.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: [f64; 2],
}

impl Dual {
    pub const fn new(re: f64, eps: [f64; 2]) -> Self {
        Self { re, eps }
    }

    pub const fn constant(re: f64) -> Self {
        Self { re, eps: [0.0, 0.0] }
    }

    pub fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let k = 0.5 / s;
        Self::new(s, [k * self.eps[0], k * self.eps[1]])
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.re;
        let k = -r * r;
        Self::new(r, [k * self.eps[0], k * self.eps[1]])
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, [self.eps[0] + o.eps[0], self.eps[1] + o.eps[1]])
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, [self.eps[0] - o.eps[0], self.eps[1] - o.eps[1]])
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(
            self.re * o.re,
            [
                self.eps[0] * o.re + self.re * o.eps[0],
                self.eps[1] * o.re + self.re * o.eps[1],
            ],
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Dual) -> Dual {
        self * o.recip()
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, [-self.eps[0], -self.eps[1]])
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual::new(self.re + o, self.eps)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        Dual::new(self.re * o, [self.eps[0] * o, self.eps[1] * o])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_rule() {
        // f = x / (1 + y^2) at (2, 1)
        let x = Dual::new(2.0, [1.0, 0.0]);
        let y = Dual::new(1.0, [0.0, 1.0]);
        let f = x / (y * y + 1.0);
        assert!((f.re - 1.0).abs() < 1e-15);
        assert!((f.eps[0] - 0.5).abs() < 1e-15);
        assert!((f.eps[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sqrt_chain() {
        let x = Dual::new(4.0, [1.0, 3.0]);
        let s = x.sqrt();
        assert_eq!(s.re, 2.0);
        assert_eq!(s.eps, [0.25, 0.75]);
    }
}
