//! Gaussian-family kernels of arbitrary even order.
//!
//! An order-`2r` kernel is `K(t) = phi(t) * sum_{k<r} c_k He_{2k}(t)` with
//! `c_k = (-1)^k / (2^k k!)` and `He` the probabilists' Hermite
//! polynomials. Because `d/dt [He_j(t) phi(t)] = -He_{j+1}(t) phi(t)`,
//! derivatives of every order and the tail integral `int_u^inf K` are all
//! available in closed form.
//!
//! The kernels are not compactly supported; the smoothing theory assumes
//! support on `[-1, 1]` but Gaussian kernels are what the experiments use,
//! and their tails are below `1e-30` outside `[-12, 12]`.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Half-width of the interval on which kernel integrals are evaluated.
pub const KERNEL_SUPPORT: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    GaussianHermite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    order: usize,
    coeffs: Vec<f64>,
}

/// Moment constants entering the bias (`gamma = int K(u) u^l / l! du`) and
/// variance (`mu_tilde = int K(u)^2 du`) formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub gamma: f64,
    pub mu_tilde: f64,
}

#[inline]
pub fn std_normal_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

/// `P(Z > u)` for a standard normal `Z`, accurate in both tails.
#[inline]
pub fn std_normal_sf(u: f64) -> f64 {
    0.5 * erfc(u / std::f64::consts::SQRT_2)
}

#[inline]
pub fn std_normal_cdf(u: f64) -> f64 {
    std_normal_sf(-u)
}

/// Fills `out[j] = He_j(t)` for `j < out.len()`.
fn hermite_into(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = t;
    }
    for j in 1..out.len().saturating_sub(1) {
        out[j + 1] = t * out[j] - j as f64 * out[j - 1];
    }
}

/// `He_j(t)` by the three-term recurrence.
pub fn hermite(j: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    if j == 0 {
        return prev;
    }
    for k in 1..j {
        let next = t * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

impl Kernel {
    /// Gaussian-Hermite kernel of even order `order >= 2`; order 2 is the
    /// standard normal density.
    pub fn gaussian(order: usize) -> Result<Self> {
        if order < 2 || !order.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel order must be even and at least 2, got {order}"
            )));
        }
        let r = order / 2;
        let mut coeffs = Vec::with_capacity(r);
        let mut c = 1.0;
        for k in 0..r {
            if k > 0 {
                c *= -1.0 / (2.0 * k as f64);
            }
            coeffs.push(c);
        }
        Ok(Self {
            family: KernelFamily::GaussianHermite,
            order,
            coeffs,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if self.order == 2 {
            return std_normal_pdf(t);
        }
        self.derivative_unchecked(0, t)
    }

    /// `m`-th derivative, `0 <= m <= order`.
    pub fn derivative(&self, m: usize, t: f64) -> Result<f64> {
        if m > self.order {
            return Err(Error::invalid(format!(
                "derivative order {m} exceeds kernel order {}",
                self.order
            )));
        }
        Ok(self.derivative_unchecked(m, t))
    }

    /// First derivative, used by the Hessian.
    #[inline]
    pub fn first_derivative(&self, t: f64) -> f64 {
        if self.order == 2 {
            return -t * std_normal_pdf(t);
        }
        self.derivative_unchecked(1, t)
    }

    pub(crate) fn derivative_unchecked(&self, m: usize, t: f64) -> f64 {
        let top = 2 * (self.coeffs.len() - 1) + m;
        let mut he = [0.0f64; 32];
        let he: &mut [f64] = if top < 32 {
            &mut he[..=top]
        } else {
            &mut vec![0.0; top + 1]
        };
        hermite_into(t, he);
        let s: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * he[2 * k + m])
            .sum();
        let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * s * std_normal_pdf(t)
    }

    /// `int_u^inf K(t) dt`.
    #[inline]
    pub fn complement_cdf(&self, u: f64) -> f64 {
        let tail = std_normal_sf(u);
        if self.order == 2 {
            return tail;
        }
        let mut he = vec![0.0; 2 * self.coeffs.len()];
        hermite_into(u, &mut he);
        let poly: f64 = self.coeffs[1..]
            .iter()
            .enumerate()
            .map(|(k, c)| c * he[2 * (k + 1) - 1])
            .sum();
        self.coeffs[0] * tail + poly * std_normal_pdf(u)
    }

    /// `gamma` from the Hermite expansion of `u^l`; `mu_tilde` in closed
    /// form for order 2 and by adaptive quadrature otherwise.
    pub fn moments(&self) -> Result<KernelMoments> {
        let l = self.order;
        // E[He_{2k}(Z) Z^l] / l! = 1 / (2^i i!) with i = (l - 2k) / 2.
        let gamma = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let i = (l - 2 * k) / 2;
                let denom: f64 = (1..=i).map(|j| 2.0 * j as f64).product();
                c / denom
            })
            .sum();
        let mu_tilde = if l == 2 {
            0.5 / std::f64::consts::PI.sqrt()
        } else {
            integrate(
                |t| self.eval(t).powi(2),
                -KERNEL_SUPPORT,
                KERNEL_SUPPORT,
                1e-13,
                1e-13,
            )?
        };
        Ok(KernelMoments { gamma, mu_tilde })
    }
}
