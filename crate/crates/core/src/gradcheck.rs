//! Central finite-difference verification of the loss gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::loss::{
    combined_loss, focal_kl, focal_tversky, mixup_cross_entropy, weighted_cross_entropy,
    LossParams, LossResult,
};
use crate::raster::{Raster, RasterKind};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` with respect to every pixel of `x`.
pub fn numerical_gradient(
    x: &Raster<f64>,
    step: f64,
    mut f: impl FnMut(&Raster<f64>) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut values = x.values().to_vec();
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + step;
        let plus = f(&Raster::from_parts(
            x.kind(),
            x.height(),
            x.width(),
            values.clone(),
        ))?;
        values[i] = orig - step;
        let minus = f(&Raster::from_parts(
            x.kind(),
            x.height(),
            x.width(),
            values.clone(),
        ))?;
        values[i] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// `max_i |a_i − n_i| / max(|a_i|, |n_i|)`; entries where both are exactly zero count as 0.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest teacher/student gap in random cases. The modulated KL term
/// behaves like `|p_s − p_t|^(2 + 2γ)` near coincidence, whose higher
/// derivatives diverge, so a fixed-step central difference stops being a
/// valid reference there; [`near_coincidence_error`] covers that region.
pub const MIN_TEACHER_GAP: f64 = 0.01;

/// Losses covered by [`gradient_suite`].
pub const SUITE: [&str; 5] = [
    "weighted_ce",
    "focal_tversky",
    "combined",
    "mixup_ce",
    "focal_kl",
];

/// Random inputs for one gradient check.
pub struct Case {
    pub y: Raster<u8>,
    pub y2: Raster<u8>,
    pub yhat: Raster<f64>,
    pub teacher: Raster<f64>,
    pub w: Raster<f64>,
    pub w2: Raster<f64>,
}

impl Case {
    /// Predictions are kept away from 0 and 1 so no clamp is active within one
    /// FD step, and teachers at least [`MIN_TEACHER_GAP`] from the student.
    pub fn random(rng: &mut impl Rng, size: usize) -> Self {
        let n = size * size;
        let labels = |rng: &mut dyn rand::RngCore| -> Vec<u8> {
            (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect()
        };
        let y = labels(rng);
        let y2 = labels(rng);
        let yhat: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
        let teacher = yhat
            .iter()
            .map(|&s| loop {
                let t = rng.gen_range(0.02..0.98);
                if (t - s).abs() >= MIN_TEACHER_GAP {
                    break t;
                }
            })
            .collect();
        let w = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
        let w2 = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
        Self {
            y: Raster::from_parts(RasterKind::Label, size, size, y),
            y2: Raster::from_parts(RasterKind::Label, size, size, y2),
            yhat: Raster::from_parts(RasterKind::Confidence, size, size, yhat),
            teacher: Raster::from_parts(RasterKind::Confidence, size, size, teacher),
            w: Raster::from_parts(RasterKind::Weight, size, size, w),
            w2: Raster::from_parts(RasterKind::Weight, size, size, w2),
        }
    }

    /// Evaluates the named loss at prediction `yhat`.
    pub fn eval(
        &self,
        name: &str,
        yhat: &Raster<f64>,
        params: &LossParams<f64>,
    ) -> Result<LossResult<f64>> {
        match name {
            "weighted_ce" => weighted_cross_entropy(&self.y, yhat, &self.w, params),
            "focal_tversky" => focal_tversky(&self.y, yhat, params),
            "combined" => combined_loss(&self.y, yhat, &self.w, params),
            "mixup_ce" => mixup_cross_entropy(&self.y, &self.w, &self.y2, &self.w2, yhat, params),
            "focal_kl" => focal_kl(&self.teacher, yhat, params.gamma, &self.w, params.epsilon),
            other => panic!("unknown loss {other}"),
        }
    }

    /// Max relative error between analytic and central-difference gradients.
    pub fn check(&self, name: &str, params: &LossParams<f64>, step: f64) -> Result<f64> {
        let analytic = self.eval(name, &self.yhat, params)?;
        let numeric =
            numerical_gradient(&self.yhat, step, |x| Ok(self.eval(name, x, params)?.loss))?;
        Ok(max_relative_error(analytic.grad.values(), &numeric))
    }
}

/// Worst relative gradient error per loss over `cases` random `size`×`size` rasters.
pub fn gradient_suite(
    cases: usize,
    size: usize,
    seed: u64,
    params: &LossParams<f64>,
) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; SUITE.len()];
    for _ in 0..cases {
        let case = Case::random(&mut rng, size);
        for (slot, name) in worst.iter_mut().zip(SUITE) {
            *slot = slot.max(case.check(name, params, FD_STEP)?);
        }
    }
    Ok(SUITE.into_iter().zip(worst).collect())
}

/// Worst relative error of the single-pixel focal KL gradient for students
/// within `gaps` of the teacher, against a Richardson-extrapolated central
/// difference whose step is a hundredth of the gap.
pub fn near_coincidence_error(teachers: &[f64], gaps: &[f64], gamma: f64) -> Result<f64> {
    let w = Raster::filled(RasterKind::Weight, 1, 1, 1.0);
    let mut worst = 0.0f64;
    for &t in teachers {
        let teacher = Raster::new(RasterKind::Confidence, 1, 1, vec![t])?;
        let f = |s: f64| -> Result<f64> {
            let x = Raster::new(RasterKind::Confidence, 1, 1, vec![s])?;
            Ok(focal_kl(&teacher, &x, gamma, &w, 1e-6)?.loss)
        };
        for &gap in gaps {
            for s in [t - gap, t + gap] {
                let h = gap / 100.0;
                let d = |h: f64| -> Result<f64> { Ok((f(s + h)? - f(s - h)?) / (2.0 * h)) };
                let numeric = (4.0 * d(h / 2.0)? - d(h)?) / 3.0;
                let x = Raster::new(RasterKind::Confidence, 1, 1, vec![s])?;
                let analytic = focal_kl(&teacher, &x, gamma, &w, 1e-6)?.grad.values()[0];
                worst = worst.max(max_relative_error(&[analytic], &[numeric]));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let x = Raster::new(RasterKind::Weight, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let g =
            numerical_gradient(&x, 1e-4, |r| Ok(r.values().iter().map(|v| v * v).sum())).unwrap();
        for (gi, xi) in g.iter().zip(x.values()) {
            assert!((gi - 2.0 * xi).abs() < 1e-8);
        }
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(max_relative_error(&[0.0, 2.0], &[0.0, 1.0]), 0.5);
    }

    #[test]
    fn focal_kl_near_coincidence() {
        let err =
            near_coincidence_error(&[0.1, 0.5, 0.9], &[1e-2, 1e-3, 1e-4, 1e-5], 0.25).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn small_suite_passes() {
        let r = gradient_suite(5, 4, 7, &LossParams::default()).unwrap();
        for (name, err) in r {
            assert!(err <= 1e-4, "{name}: {err}");
        }
    }
}
