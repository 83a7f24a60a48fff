//! Empirical 0-1 risk and the kernel-smoothed surrogate risk
//!
//! `R(beta) = (1/n) sum_i w(y_i) L(y_i (x_i - beta'z_i) / delta)` with
//! `L(u) = int_u^inf K`, together with its exact gradient and Hessian.
//!
//! Differentiating directly gives
//!
//! ```text
//! grad R = (1/n) sum_i w(y_i) y_i z_i K(m_i / delta) / delta
//! hess R = -(1/n) sum_i w(y_i) y_i z_i z_i' K'(m_i / delta) / delta^2
//! ```
//!
//! with margins `m_i = x_i - beta'z_i` (kernel symmetry lets `y_i` move out
//! of the argument). All reductions are serial, so results are
//! bit-reproducible for fixed inputs.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::dataset::{Dataset, WeightFn};
use crate::kernels::Kernel;
use crate::stats::compensated_sum;

/// Data, weights, kernel and bandwidth defining one smoothed risk.
#[derive(Debug, Clone, Copy)]
pub struct RiskContext<'a> {
    pub data: &'a Dataset,
    pub weights: WeightFn,
    pub kernel: &'a Kernel,
    pub delta: f64,
}

impl<'a> RiskContext<'a> {
    pub fn new(data: &'a Dataset, weights: WeightFn, kernel: &'a Kernel, delta: f64) -> Self {
        assert!(
            delta > 0.0 && delta.is_finite(),
            "bandwidth must be positive, got {delta}"
        );
        Self {
            data,
            weights,
            kernel,
            delta,
        }
    }

    pub fn with_delta(&self, delta: f64) -> RiskContext<'a> {
        RiskContext::new(self.data, self.weights, self.kernel, delta)
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn d(&self) -> usize {
        self.data.d()
    }

    /// `x_i - beta'z_i`.
    pub fn margins(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        self.data.x() - &self.data.z().dot(&beta)
    }

    pub fn zero_one_risk(&self, beta: ArrayView1<f64>) -> f64 {
        zero_one_risk(self.data, &self.weights, beta)
    }

    pub fn smoothed_risk(&self, beta: ArrayView1<f64>) -> f64 {
        let m = self.margins(beta);
        self.smoothed_risk_from_margins(&m)
    }

    pub(crate) fn smoothed_risk_from_margins(&self, margins: &Array1<f64>) -> f64 {
        let y = self.data.y();
        let total = compensated_sum(margins.iter().zip(y).map(|(&m, &yi)| {
            self.weights.weight(yi) * self.kernel.complement_cdf(yi * m / self.delta)
        }));
        total / self.n() as f64
    }

    /// Per-observation scalars `c_i = w(y_i) y_i K(m_i/delta) / delta`; the
    /// i-th gradient summand is `c_i z_i`.
    pub fn gradient_coefficients(&self, margins: &Array1<f64>) -> Array1<f64> {
        let y = self.data.y();
        let inv = 1.0 / self.delta;
        Array1::from_iter(
            margins
                .iter()
                .zip(y)
                .map(|(&m, &yi)| self.weights.weight(yi) * yi * self.kernel.eval(m * inv) * inv),
        )
    }

    pub fn smoothed_gradient(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        let m = self.margins(beta);
        self.gradient_from_margins(&m)
    }

    pub(crate) fn gradient_from_margins(&self, margins: &Array1<f64>) -> Array1<f64> {
        let c = self.gradient_coefficients(margins);
        self.data.z().t().dot(&c) / self.n() as f64
    }

    /// Risk and gradient sharing one pass over the margins.
    pub fn value_and_gradient(&self, beta: ArrayView1<f64>) -> (f64, Array1<f64>) {
        let m = self.margins(beta);
        (
            self.smoothed_risk_from_margins(&m),
            self.gradient_from_margins(&m),
        )
    }

    /// `a_i = -w(y_i) y_i K'(m_i/delta) / delta^2`; the Hessian is
    /// `(1/n) sum_i a_i z_i z_i'`.
    pub fn hessian_coefficients(&self, margins: &Array1<f64>) -> Array1<f64> {
        let y = self.data.y();
        let inv = 1.0 / self.delta;
        Array1::from_iter(margins.iter().zip(y).map(|(&m, &yi)| {
            -self.weights.weight(yi) * yi * self.kernel.first_derivative(m * inv) * inv * inv
        }))
    }

    pub fn smoothed_hessian(&self, beta: ArrayView1<f64>) -> Array2<f64> {
        let m = self.margins(beta);
        let a = self.hessian_coefficients(&m);
        let z = self.data.z();
        let weighted = z * &a.insert_axis(Axis(1));
        let mut h = z.t().dot(&weighted) / self.n() as f64;
        let d = h.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                h[[i, j]] = h[[j, i]];
            }
        }
        h
    }

    /// `H v` without forming `H`, for coefficients from
    /// [`RiskContext::hessian_coefficients`].
    pub fn hessian_vector(&self, coeffs: &Array1<f64>, v: ArrayView1<f64>) -> Array1<f64> {
        let z = self.data.z();
        let zv = z.dot(&v) * coeffs;
        z.t().dot(&zv) / self.n() as f64
    }
}

/// `(1/n) sum_i w(y_i) L01(y_i (x_i - beta'z_i))` with `L01(u) = 1` for
/// `u < 0` and `0` for `u >= 0`.
pub fn zero_one_risk(data: &Dataset, weights: &WeightFn, beta: ArrayView1<f64>) -> f64 {
    let m = data.x() - &data.z().dot(&beta);
    let total = compensated_sum(m.iter().zip(data.y()).map(|(&mi, &yi)| {
        if yi * mi >= 0.0 {
            0.0
        } else {
            weights.weight(yi)
        }
    }));
    total / data.n() as f64
}
