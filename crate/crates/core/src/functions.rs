//! Smooth test functions with exact derivatives of every order, used by the
//! expansion identities and the Stein solver.

/// A test function f together with its derivatives. `deriv(0, x)` is f(x).
pub trait Smooth: Sync {
    fn deriv(&self, order: usize, x: f64) -> f64;

    fn eval(&self, x: f64) -> f64 {
        self.deriv(0, x)
    }

    /// Coefficients (ascending) when f is a polynomial; drives closed-form
    /// integration paths.
    fn poly_coeffs(&self) -> Option<&[f64]> {
        None
    }
}

/// Polynomial with ascending coefficients: `coeffs[j] * x^j`.
#[derive(Debug, Clone)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty());
        Poly { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficients of the order-th derivative.
    pub fn deriv_coeffs(&self, order: usize) -> Vec<f64> {
        let mut c = self.coeffs.clone();
        for _ in 0..order {
            if c.len() <= 1 {
                return vec![0.0];
            }
            c = c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &v)| j as f64 * v)
                .collect();
        }
        c
    }
}

pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

impl Smooth for Poly {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        poly_eval(&self.deriv_coeffs(order), x)
    }

    fn poly_coeffs(&self) -> Option<&[f64]> {
        Some(&self.coeffs)
    }
}

/// f(x) = sin(a x + b); derivatives cycle through the phase shifts.
#[derive(Debug, Clone)]
pub struct Sinusoid {
    pub freq: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn sin() -> Self {
        Sinusoid {
            freq: 1.0,
            phase: 0.0,
        }
    }
}

impl Smooth for Sinusoid {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        let shift = order as f64 * std::f64::consts::FRAC_PI_2;
        self.freq.powi(order as i32) * (self.freq * x + self.phase + shift).sin()
    }
}

/// f(x) = exp(a x).
#[derive(Debug, Clone)]
pub struct Expo {
    pub rate: f64,
}

impl Smooth for Expo {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        self.rate.powi(order as i32) * (self.rate * x).exp()
    }
}

/// f(x) = tanh(x). Derivatives are polynomials in tanh(x), generated by the
/// recurrence P_{n+1} = P_n' (1 - t^2).
#[derive(Debug, Clone)]
pub struct TanhFn;

impl Smooth for TanhFn {
    fn deriv(&self, order: usize, x: f64) -> f64 {
        let t = x.tanh();
        // p holds the coefficients of P_n(t) with f^(n)(x) = P_n(tanh x)
        let mut p = vec![0.0, 1.0]; // P_0(t) = t
        for _ in 0..order {
            // P' then multiply by (1 - t^2)
            let dp: Vec<f64> = p
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| j as f64 * c)
                .collect();
            let mut next = vec![0.0; dp.len() + 2];
            for (j, &c) in dp.iter().enumerate() {
                next[j] += c;
                next[j + 2] -= c;
            }
            p = next;
        }
        poly_eval(&p, t)
    }
}
