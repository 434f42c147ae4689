//! Gauss–Hermite rules normalized to the standard Gaussian measure
//! `Dz = exp(-z²/2) dz / √(2π)`, plus a composite Gauss–Legendre fallback
//! for integrands that are nearly steps on the scale of the Gaussian.

use std::sync::OnceLock;

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Node count used by the theory maps unless told otherwise.
pub const DEFAULT_NODES: usize = 129;

/// Largest ratio of field scale `√q` to feature width that the
/// Gauss–Hermite path handles. Beyond it the field-aware expectations switch
/// to composite Gauss–Legendre.
pub const RESOLVED_SCALE: f64 = 1.0;

const MAX_BISECTION: usize = 200;
const LEGENDRE_NODES: usize = 10;
/// Composite rules integrate over `|z| <= TAIL`; the Gaussian mass outside is
/// below 1e-18.
const TAIL: f64 = 9.0;

/// Quadrature rule with `Σ w_k f(z_k) ≈ ∫Dz f(z)`.
///
/// Exact for polynomials up to degree `2n - 1`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    /// Builds the `n`-node rule. Nodes are returned in decreasing order.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("gauss_hermite needs n >= 2, got {n}")));
        }
        let (x, w) = physicists_rule(n);
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        Ok(Self {
            nodes: x.into_iter().map(|v| T::lit(v * std::f64::consts::SQRT_2)).collect(),
            weights: w.into_iter().map(|v| T::lit(v * inv_sqrt_pi)).collect(),
        })
    }

    /// The default rule used by the theory maps.
    pub fn standard() -> Self {
        Self::gauss_hermite(DEFAULT_NODES).expect("default node count is valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `∫Dz f(z)`.
    pub fn expect<F: Fn(T) -> T>(&self, f: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&z, &w)| acc + w * f(z))
    }

    /// `∫Dz₁Dz₂ f(z₁, z₂)` with the tensor-product rule.
    pub fn expect2<F: Fn(T, T) -> T>(&self, f: F) -> T {
        let mut total = T::zero();
        for (&z1, &w1) in self.nodes.iter().zip(&self.weights) {
            let inner = self
                .nodes
                .iter()
                .zip(&self.weights)
                .fold(T::zero(), |acc, (&z2, &w2)| acc + w2 * f(z1, z2));
            total += w1 * inner;
        }
        total
    }

    /// `∫Dz₁Dz₂ f(u_a) g(u_b)` for the correlated Gaussian pair
    /// `u_a = √q_a z₁`, `u_b = √q_b (c z₁ + √(1-c²) z₂)`.
    pub fn pair_expect<F, G>(&self, q_a: T, q_b: T, c: T, f: F, g: G) -> T
    where
        F: Fn(T) -> T,
        G: Fn(T) -> T,
    {
        let sa = q_a.max(T::zero()).sqrt();
        let sb = q_b.max(T::zero()).sqrt();
        let c = c.max(-T::one()).min(T::one());
        let s = (T::one() - c * c).max(T::zero()).sqrt();
        let mut total = T::zero();
        for (&z1, &w1) in self.nodes.iter().zip(&self.weights) {
            let fa = f(sa * z1);
            if fa == T::zero() {
                continue;
            }
            let shift = c * z1;
            let inner = self
                .nodes
                .iter()
                .zip(&self.weights)
                .fold(T::zero(), |acc, (&z2, &w2)| acc + w2 * g(sb * (shift + s * z2)));
            total += w1 * fa * inner;
        }
        total
    }

    /// `∫Dz f(√q z)` for an `f` whose variation is concentrated within
    /// `width` of zero, e.g. `tanh(κ·)` with `width = 1/κ`.
    pub fn expect_field<F: Fn(T) -> T>(&self, q: T, width: T, f: F) -> T {
        let s = q.max(T::zero()).sqrt();
        if s <= T::lit(RESOLVED_SCALE) * width {
            self.expect(|z| f(s * z))
        } else {
            composite_expect(T::zero(), s, width, &f)
        }
    }

    /// [`pair_expect`](Self::pair_expect) for field-concentrated `f` and `g`
    /// as in [`expect_field`](Self::expect_field).
    pub fn pair_expect_field<F, G>(&self, q_a: T, q_b: T, c: T, width: T, f: F, g: G) -> T
    where
        F: Fn(T) -> T,
        G: Fn(T) -> T,
    {
        let sa = q_a.max(T::zero()).sqrt();
        let sb = q_b.max(T::zero()).sqrt();
        if sa.max(sb) <= T::lit(RESOLVED_SCALE) * width {
            return self.pair_expect(q_a, q_b, c, f, g);
        }
        let c = c.max(-T::one()).min(T::one());
        let spread = sb * (T::one() - c * c).max(T::zero()).sqrt();
        let inner = |z1: T| {
            if spread == T::zero() {
                g(sb * c * z1)
            } else {
                composite_expect(sb * c * z1, spread, width, &g)
            }
        };
        // both f(sa z₁) and the smoothed inner integral turn over at z₁ = 0
        let w_f = if sa > T::zero() { width / sa } else { T::infinity() };
        let w_g = if sb > T::zero() && c != T::zero() {
            (width * width + spread * spread).sqrt() / (sb * c.abs())
        } else {
            T::infinity()
        };
        composite_expect(T::zero(), T::one(), w_f.min(w_g), &|z1: T| {
            let fa = f(sa * z1);
            if fa == T::zero() {
                T::zero()
            } else {
                fa * inner(z1)
            }
        })
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
fn legendre_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = LEGENDRE_NODES;
        let nf = n as f64;
        (1..=n)
            .map(|i| {
                let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (nf + 0.5)).cos();
                let mut dp = 1.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let kf = k as f64;
                        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = nf * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    })
}

/// `∫Dz f(μ + σz)` where `f` turns over within `width` of zero.
///
/// Panel breaks sit on the unit grid of `[-TAIL, TAIL]` and, around the
/// turning point `z₀ = -μ/σ`, at `z₀ ± (w/2)·2^k` for `w = width/σ` up to
/// unit spacing. Each panel is no wider than its distance from `z₀`, which
/// keeps the complex singularities of `tanh` outside the convergence region
/// of every 10-point panel rule.
pub(crate) fn composite_expect<T: Scalar, F: Fn(T) -> T>(mu: T, sigma: T, width: T, f: &F) -> T {
    if sigma == T::zero() {
        return f(mu);
    }
    let mut breaks: Vec<f64> = (-(TAIL as i32)..=TAIL as i32).map(f64::from).collect();
    let z0 = -(mu / sigma).to_f64_lossy();
    let w = (width / sigma).to_f64_lossy();
    if z0.abs() < TAIL {
        breaks.push(z0);
        let mut d = 0.5 * w;
        while d < 1.0 {
            breaks.extend([z0 - d, z0 + d]);
            d *= 2.0;
        }
    }
    breaks.retain(|b| b.abs() <= TAIL);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let gl = legendre_rule();
    let mut total = T::zero();
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for &(x, wx) in gl {
            let z = mid + half * x;
            let weight = T::lit(half * wx * norm * (-0.5 * z * z).exp());
            total += weight * f(mu + sigma * T::lit(z));
        }
    }
    total
}

/// Physicists' Gauss–Hermite rule (weight `e^{-x²}`) in `f64`.
///
/// Positive roots of the orthonormal `p_n` are bracketed by sign changes on
/// a grid finer than the smallest root spacing `≈ π/√(2n)` and then bisected
/// to full precision. The recurrence is rescaled as it grows and weights
/// `2 / (2n p_{n-1}²)` are formed in log space, so large `n` neither
/// overflows nor underflows prematurely.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let upper = (2.0 * nf + 1.0).sqrt() + 1.0;
    let h = std::f64::consts::PI / (8.0 * (2.0 * nf + 1.0).sqrt());
    let sign = |z: f64| orthonormal_hermite(n, z).0 > 0.0;

    let mut roots = Vec::with_capacity(n / 2);
    let mut lo = 0.5 * h;
    let mut lo_sign = sign(lo);
    while lo < upper && roots.len() < n / 2 {
        let hi = lo + h;
        let hi_sign = sign(hi);
        if hi_sign != lo_sign {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..MAX_BISECTION {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if sign(mid) == lo_sign {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        lo = hi;
        lo_sign = hi_sign;
    }
    assert_eq!(roots.len(), n / 2, "root bracketing missed a root");

    let weight = |z: f64| {
        let (_, p_nm1, log_scale) = orthonormal_hermite(n, z);
        (-(nf.ln()) - 2.0 * (p_nm1.abs().ln() + log_scale)).exp()
    };
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for &r in roots.iter().rev() {
        x.push(r);
        w.push(weight(r));
    }
    if n % 2 == 1 {
        x.push(0.0);
        w.push(weight(0.0));
    }
    for &r in &roots {
        x.push(-r);
        w.push(weight(r));
    }
    (x, w)
}

/// Returns `(p_n(z), p_{n-1}(z), s)` for the orthonormal Hermite
/// polynomials, where the true values are the returned ones times `e^s`.
fn orthonormal_hermite(n: usize, z: f64) -> (f64, f64, f64) {
    const BIG: f64 = 1e150;
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    let mut log_scale = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
        if p1.abs() > BIG {
            p1 /= BIG;
            p2 /= BIG;
            log_scale += BIG.ln();
        }
    }
    (p1, p2, log_scale)
}
