//! Truncated Taylor series ("jets") for exact derivatives of the registry
//! profiles and of their compositions with `U^{-1}`.
//!
//! A jet of order `m` stores normalized coefficients `c_i = F^{(i)}(x0) / i!`
//! for `i = 0..=m`.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    c: Vec<f64>,
}

impl Jet {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = value;
        Jet { c }
    }

    /// The identity function expanded at `x0`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = x0;
        if order >= 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    pub fn from_coeffs(c: Vec<f64>) -> Self {
        assert!(!c.is_empty());
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `i`-th derivative at the expansion point.
    pub fn derivative(&self, i: usize) -> f64 {
        self.c[i] * factorial(i)
    }

    /// Drops the constant term and shifts down: the jet of `F'` has order `m-1`.
    pub fn differentiate(&self) -> Jet {
        if self.c.len() == 1 {
            return Jet::constant(0.0, 0);
        }
        let c = (1..self.c.len()).map(|i| self.c[i] * i as f64).collect();
        Jet { c }
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let mut c = self.c.clone();
        c.resize(order + 1, 0.0);
        Jet { c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    pub fn recip(&self) -> Jet {
        let m = self.order();
        let a0 = self.c[0];
        let mut r = vec![0.0; m + 1];
        r[0] = 1.0 / a0;
        for n in 1..=m {
            let s: f64 = (1..=n).map(|i| self.c[i] * r[n - i]).sum();
            r[n] = -s / a0;
        }
        Jet { c: r }
    }

    pub fn exp(&self) -> Jet {
        let m = self.order();
        let mut e = vec![0.0; m + 1];
        e[0] = self.c[0].exp();
        // e' = a' e  =>  n e_n = sum_{i=1}^{n} i a_i e_{n-i}
        for n in 1..=m {
            let s: f64 = (1..=n).map(|i| i as f64 * self.c[i] * e[n - i]).sum();
            e[n] = s / n as f64;
        }
        Jet { c: e }
    }

    pub fn sin_cos(&self) -> (Jet, Jet) {
        let m = self.order();
        let mut s = vec![0.0; m + 1];
        let mut c = vec![0.0; m + 1];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for n in 1..=m {
            let mut ss = 0.0;
            let mut cc = 0.0;
            for i in 1..=n {
                let w = i as f64 * self.c[i];
                ss += w * c[n - i];
                cc -= w * s[n - i];
            }
            s[n] = ss / n as f64;
            c[n] = cc / n as f64;
        }
        (Jet { c: s }, Jet { c })
    }

    /// Evaluates `self(inner)` where `inner` has zero constant term, i.e. the
    /// composition `F(x0 + δ(ζ))` expanded in `ζ`.
    pub fn compose(&self, inner: &Jet) -> Jet {
        let m = inner.order().min(self.order());
        debug_assert!(inner.c[0] == 0.0);
        let inner = inner.truncate(m);
        let mut acc = Jet::constant(self.c[m], m);
        for i in (0..m).rev() {
            acc = (&acc * &inner).add_scalar(self.c[i]);
        }
        acc
    }

    /// Series reversion: for `self(x0 + δ) = y0 + Σ a_i δ^i` with `a_1 ≠ 0`,
    /// returns the jet of `δ(ζ)` solving `self(x0 + δ) = y0 + ζ`.
    pub fn revert(&self) -> Jet {
        let m = self.order();
        let a1 = self.c[1];
        let mut tail = self.clone();
        tail.c[0] = 0.0;
        tail.c[1] = 0.0;
        let mut delta = Jet::variable(0.0, m).scale(1.0 / a1);
        // each sweep fixes one more coefficient
        for _ in 1..m {
            let mut correction = Jet::constant(0.0, m);
            let mut power = delta.clone();
            for i in 2..=m {
                power = &power * &delta;
                correction = &correction + &power.scale(tail.c[i]);
            }
            let id = Jet::variable(0.0, m);
            delta = (&id - &correction).scale(1.0 / a1);
        }
        delta
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let m = self.order().min(rhs.order());
        Jet { c: (0..=m).map(|i| self.c[i] + rhs.c[i]).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let m = self.order().min(rhs.order());
        Jet { c: (0..=m).map(|i| self.c[i] - rhs.c[i]).collect() }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let m = self.order().min(rhs.order());
        let c = (0..=m)
            .map(|n| (0..=n).map(|i| self.c[i] * rhs.c[n - i]).sum())
            .collect();
        Jet { c }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}
