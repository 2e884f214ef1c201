//! Segmentation losses with analytical gradients with respect to the
//! per-pixel predictions.
//!
//! Every loss is a sum over pixels. [`LossResult::mean`] gives the per-pixel
//! reduction.

use crate::error::{Error, Result};
use crate::raster::{Raster, RasterKind};
use crate::scalar::{Pixel, Real};

/// Loss value and `∂loss/∂prediction` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult<T> {
    pub loss: T,
    pub grad: Raster<T>,
}

impl<T: Real> LossResult<T> {
    pub fn mean(&self) -> T {
        if self.grad.is_empty() {
            T::zero()
        } else {
            self.loss / T::from_count(self.grad.len())
        }
    }

    fn scaled_sum(a: Self, b: Self, alpha: T) -> Self {
        let grad = a
            .grad
            .values()
            .iter()
            .zip(b.grad.values())
            .map(|(&ga, &gb)| ga + alpha * gb)
            .collect();
        Self {
            loss: a.loss + alpha * b.loss,
            grad: Raster::from_parts(RasterKind::Gradient, a.grad.height(), a.grad.width(), grad),
        }
    }

    /// `b + λ·(a − b)`: exact at λ = 0 and when `a == b`.
    fn interpolate(a: Self, b: Self, lambda: T) -> Self {
        let grad = a
            .grad
            .values()
            .iter()
            .zip(b.grad.values())
            .map(|(&ga, &gb)| gb + lambda * (ga - gb))
            .collect();
        Self {
            loss: b.loss + lambda * (a.loss - b.loss),
            grad: Raster::from_parts(RasterKind::Gradient, a.grad.height(), a.grad.width(), grad),
        }
    }
}

/// Loss hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams<T> {
    /// Weight of the focal Tversky term.
    pub alpha: T,
    /// Tversky trade-off between false positives (β) and false negatives (1 − β).
    pub beta: T,
    /// Focal exponent.
    pub gamma: T,
    /// Stability constant and prediction clamp.
    pub epsilon: T,
    /// Mixup ratio.
    pub lambda: T,
}

impl<T: Real> Default for LossParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.5),
            beta: T::lit(0.99),
            gamma: T::lit(0.25),
            epsilon: T::lit(1e-6),
            lambda: T::lit(0.05),
        }
    }
}

impl<T: Real> LossParams<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite();
        if !(self.alpha >= T::zero()) || !ok(self.alpha) {
            return Err(Error::param("alpha", "must be >= 0"));
        }
        if !(self.beta >= T::zero() && self.beta <= T::one()) {
            return Err(Error::param("beta", "must be in [0, 1]"));
        }
        if !(self.gamma > T::zero()) || !ok(self.gamma) {
            return Err(Error::param("gamma", "must be > 0"));
        }
        if !(self.epsilon > T::zero() && self.epsilon < T::lit(0.5)) {
            return Err(Error::param("epsilon", "must be in (0, 0.5)"));
        }
        check_lambda(self.lambda)
    }
}

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if !(lambda >= T::zero() && lambda < T::one()) {
        return Err(Error::param("lambda", "must be in [0, 1)"));
    }
    Ok(())
}

fn check_dims<A: Pixel, B: Pixel>(a: &Raster<A>, b: &Raster<B>) -> Result<()> {
    a.ensure_same_dims(b)
}

fn check_weights<T: Real>(w: &Raster<T>) -> Result<()> {
    match w.values().iter().position(|&v| !(v >= T::zero())) {
        Some(i) => Err(Error::InvalidPixel {
            kind: RasterKind::Weight,
            index: i,
            value: w.values()[i].as_f64(),
        }),
        None => Ok(()),
    }
}

fn gradient<T: Real>(like: &Raster<T>, g: Vec<T>) -> Raster<T> {
    Raster::from_parts(RasterKind::Gradient, like.height(), like.width(), g)
}

/// Weighted binary cross entropy `−Σ ωᵢ [yᵢ ln ŷᵢ + (1 − yᵢ) ln(1 − ŷᵢ)]`.
///
/// Log arguments are floored at ε so an exact prediction costs exactly zero.
/// The gradient `ωᵢ (ŷᵢ − yᵢ) / (ŷᵢ (1 − ŷᵢ))` is zeroed wherever ŷ lies
/// outside `[ε, 1 − ε]`. Nonzero labels count as foreground.
pub fn weighted_cross_entropy<T: Real>(
    y: &Raster<u8>,
    yhat: &Raster<T>,
    w: &Raster<T>,
    params: &LossParams<T>,
) -> Result<LossResult<T>> {
    check_dims(yhat, y)?;
    check_dims(yhat, w)?;
    check_weights(w)?;
    let eps = params.epsilon;
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(yhat.len());
    for ((&label, &p), &wi) in y.values().iter().zip(yhat.values()).zip(w.values()) {
        let inside = p >= eps && p <= T::one() - eps;
        let g = if label != 0 {
            loss = loss - wi * p.max(eps).ln();
            if inside {
                -wi / p
            } else {
                T::zero()
            }
        } else {
            loss = loss - wi * (T::one() - p).max(eps).ln();
            if inside {
                wi / (T::one() - p)
            } else {
                T::zero()
            }
        };
        grad.push(g);
    }
    Ok(LossResult {
        loss,
        grad: gradient(yhat, grad),
    })
}

/// Focal Tversky loss `(1 − (Σyŷ + ε) / (Σ(1−β)y + Σβŷ + ε))^γ`.
///
/// Evaluated through the equivalent form `(E / (TP + E + ε))^γ` with
/// `E = (1−β)·Σy(1−ŷ) + β·Σŷ(1−y)`, so a perfect prediction gives exactly 0.
/// At `E = 0` the gradient is reported as 0.
pub fn focal_tversky<T: Real>(
    y: &Raster<u8>,
    yhat: &Raster<T>,
    params: &LossParams<T>,
) -> Result<LossResult<T>> {
    check_dims(yhat, y)?;
    let (beta, gamma, eps) = (params.beta, params.gamma, params.epsilon);
    let one_minus_beta = T::one() - beta;
    let (mut tp, mut fn_, mut fp) = (T::zero(), T::zero(), T::zero());
    for (&label, &p) in y.values().iter().zip(yhat.values()) {
        if label != 0 {
            tp = tp + p;
            fn_ = fn_ + (T::one() - p);
        } else {
            fp = fp + p;
        }
    }
    let e = one_minus_beta * fn_ + beta * fp;
    let d = tp + e + eps;
    let q = e / d;
    let loss = q.powf(gamma);
    let grad = if e > T::zero() {
        let outer = gamma * q.powf(gamma - T::one()) / (d * d);
        y.values()
            .iter()
            .map(|&label| {
                // ∂E/∂ŷ and ∂D/∂ŷ for this pixel.
                let (de, dd) = if label != 0 {
                    (-one_minus_beta, T::one() - one_minus_beta)
                } else {
                    (beta, beta)
                };
                outer * (de * d - e * dd)
            })
            .collect()
    } else {
        vec![T::zero(); yhat.len()]
    };
    Ok(LossResult {
        loss,
        grad: gradient(yhat, grad),
    })
}

/// `L_CE + α·L_FTL`.
pub fn combined_loss<T: Real>(
    y: &Raster<u8>,
    yhat: &Raster<T>,
    w: &Raster<T>,
    params: &LossParams<T>,
) -> Result<LossResult<T>> {
    let ce = weighted_cross_entropy(y, yhat, w, params)?;
    let ftl = focal_tversky(y, yhat, params)?;
    Ok(LossResult::scaled_sum(ce, ftl, params.alpha))
}

/// Per-channel image blend `λ·x + (1 − λ)·x′`.
pub fn mixup_blend<T: Real>(
    x: &[Raster<T>],
    x2: &[Raster<T>],
    lambda: T,
) -> Result<Vec<Raster<T>>> {
    check_lambda(lambda)?;
    if x.len() != x2.len() {
        return Err(Error::param(
            "x2",
            format!("channel count {} != {}", x2.len(), x.len()),
        ));
    }
    x.iter()
        .zip(x2)
        .map(|(a, b)| {
            check_dims(a, b)?;
            let data = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(&va, &vb)| {
                    let v = vb + lambda * (va - vb);
                    v.max(va.min(vb)).min(va.max(vb))
                })
                .collect();
            Ok(Raster::from_parts(a.kind(), a.height(), a.width(), data))
        })
        .collect()
}

/// Mixup cross entropy: `λ·L_CE(y, ŷ, ω_y) + (1 − λ)·L_CE(y′, ŷ, ω_y′)`.
/// Labels are never averaged; each label set keeps its own weights.
pub fn mixup_cross_entropy<T: Real>(
    y: &Raster<u8>,
    w_y: &Raster<T>,
    y2: &Raster<u8>,
    w_y2: &Raster<T>,
    yhat: &Raster<T>,
    params: &LossParams<T>,
) -> Result<LossResult<T>> {
    check_lambda(params.lambda)?;
    let first = weighted_cross_entropy(y, yhat, w_y, params)?;
    let second = weighted_cross_entropy(y2, yhat, w_y2, params)?;
    Ok(LossResult::interpolate(first, second, params.lambda))
}

/// Focal KL divergence between soft teacher and student confidences:
/// `Σ ωᵢ (1 − e^{−KLᵢ})^γ KLᵢ` with the Bernoulli `KLᵢ = KL(p_t ‖ p_s)`.
///
/// Both inputs are clamped to `[ε, 1 − ε]`; the gradient is zero where the
/// student clamp is active.
pub fn focal_kl<T: Real>(
    p_teacher: &Raster<T>,
    p_student: &Raster<T>,
    gamma: T,
    w: &Raster<T>,
    epsilon: T,
) -> Result<LossResult<T>> {
    check_dims(p_student, p_teacher)?;
    check_dims(p_student, w)?;
    check_weights(w)?;
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return Err(Error::param("gamma", "must be >= 0"));
    }
    let lo = epsilon;
    let hi = T::one() - epsilon;
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(p_student.len());
    for ((&t, &s_raw), &wi) in p_teacher
        .values()
        .iter()
        .zip(p_student.values())
        .zip(w.values())
    {
        let t = t.max(lo).min(hi);
        let s = s_raw.max(lo).min(hi);
        let kl = t * (t / s).ln() + (T::one() - t) * ((T::one() - t) / (T::one() - s)).ln();
        if !(kl > T::zero()) {
            grad.push(T::zero());
            continue;
        }
        let m = -(-kl).exp_m1(); // 1 − e^{−KL}
        let factor = m.powf(gamma);
        loss = loss + wi * factor * kl;
        let g = if s_raw >= lo && s_raw <= hi {
            let dkl = (s - t) / (s * (T::one() - s));
            let df = factor + gamma * kl * (-kl).exp() * m.powf(gamma - T::one());
            wi * df * dkl
        } else {
            T::zero()
        };
        grad.push(g);
    }
    Ok(LossResult {
        loss,
        grad: gradient(p_student, grad),
    })
}
