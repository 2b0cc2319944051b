//! Loss assembly: non-saturating GAN losses with an R1 gradient penalty
//! (pure functions, no training loop), the SDF-regression fitting loss
//! with weighted symmetry terms, and a bias-corrected adaptive-moment
//! optimizer.

use crate::regularizers::{
    attention_symmetry_loss, attention_symmetry_loss_backward, feature_symmetry_loss,
    feature_symmetry_loss_backward, SymmetryLoss, SymmetryLossGrad,
};
use crate::triplane::GeometryTriplane;
use crate::vsa::AttentionMap;
use crate::{Error, Result};

/// One discriminator batch: outputs on real and generated samples plus
/// the per-real-sample squared gradient norms for the R1 penalty.
#[derive(Debug, Clone)]
pub struct GanBatchOutputs {
    pub d_real: Vec<f64>,
    pub d_fake: Vec<f64>,
    pub grad_norm_sq_real: Vec<f64>,
}

fn check_probs(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("{name} must be nonempty")));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "{name} entries must lie strictly in (0,1), got {v}"
        )));
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Discriminator loss:
/// `-E[log(1-D(I_f))] - E[log D(I_r)] + λ E[‖∇ D(I_r)‖²]`,
/// expectations as arithmetic means over the batch.
pub fn gan_d_loss(b: &GanBatchOutputs, lambda: f64) -> Result<f64> {
    check_probs("d_real", &b.d_real)?;
    check_probs("d_fake", &b.d_fake)?;
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    if b.grad_norm_sq_real.len() != b.d_real.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient norms for {} real outputs",
            b.grad_norm_sq_real.len(),
            b.d_real.len()
        )));
    }
    if let Some(v) = b.grad_norm_sq_real.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("gradient norms must be >= 0, got {v}")));
    }
    let fake_term = -mean(&b.d_fake.iter().map(|d| (1.0 - d).ln()).collect::<Vec<_>>());
    let real_term = -mean(&b.d_real.iter().map(|d| d.ln()).collect::<Vec<_>>());
    Ok(fake_term + real_term + lambda * mean(&b.grad_norm_sq_real))
}

/// Generator loss: `-E[log D(I_f)] + α·rg + β·ra`.
pub fn gan_g_loss(d_fake: &[f64], rg: f64, ra: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_probs("d_fake", d_fake)?;
    for (name, v) in [("rg", rg), ("ra", ra), ("alpha", alpha), ("beta", beta)] {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} must be >= 0, got {v}")));
        }
    }
    let adv = -mean(&d_fake.iter().map(|d| d.ln()).collect::<Vec<_>>());
    Ok(adv + alpha * rg + beta * ra)
}

/// Numeric knobs of one fitting run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitObjectiveConfig {
    /// Weight of the feature-plane symmetry term.
    pub alpha: f64,
    /// Weight of the attention-map symmetry term.
    pub beta: f64,
    /// Supervision points drawn per optimization step.
    pub samples_per_step: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for FitObjectiveConfig {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            beta: 10.0,
            samples_per_step: 4096,
            learning_rate: 3e-3,
            steps: 3000,
            seed: 0,
        }
    }
}

impl FitObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidInput(format!(
                "symmetry weights must be >= 0, got alpha {}, beta {}",
                self.alpha, self.beta
            )));
        }
        if self.samples_per_step == 0 || self.steps == 0 {
            return Err(Error::InvalidInput("sample and step counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Value and partial gradients of one fitting-loss evaluation.
///
/// `d_pred` is ready to chain into the field backward pass; the plane
/// and map gradients are already scaled by α and β. When the run has no
/// attention maps, `ra` is zero and `d_maps` is `None`.
#[derive(Debug, Clone)]
pub struct FitLoss {
    pub value: f64,
    pub data_term: f64,
    pub rg: SymmetryLoss,
    pub ra: SymmetryLoss,
    pub d_pred: Vec<f64>,
    pub d_planes: Option<SymmetryLossGrad>,
    pub d_maps: Option<SymmetryLossGrad>,
}

/// `mean((pred-target)²) + α·R(G) + β·R(A)` with its gradient pieces.
///
/// A weight of exactly zero skips that term entirely, so the returned
/// gradients are bitwise those of the remaining terms.
pub fn fit_loss(
    pred: &[f64],
    target: &[f64],
    g: &GeometryTriplane,
    maps: Option<(&AttentionMap, &AttentionMap)>,
    alpha: f64,
    beta: f64,
) -> Result<FitLoss> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("fit loss needs at least one supervision point".into()));
    }
    let n = pred.len() as f64;
    let mut data_term = 0.0;
    let mut d_pred = vec![0.0; pred.len()];
    for (i, (p, t)) in pred.iter().zip(target).enumerate() {
        let r = p - t;
        data_term += r * r;
        d_pred[i] = 2.0 * r / n;
    }
    data_term /= n;

    let zero = SymmetryLoss { value: 0.0, yz_term: 0.0, xz_term: 0.0 };
    let (rg, d_planes) = if alpha != 0.0 {
        let rg = feature_symmetry_loss(g);
        let mut grad = feature_symmetry_loss_backward(g);
        for v in grad.yz.iter_mut().chain(grad.xz.iter_mut()) {
            *v *= alpha;
        }
        (rg, Some(grad))
    } else {
        (zero, None)
    };
    let (ra, d_maps) = match maps {
        Some((a_yz, a_xz)) if beta != 0.0 => {
            let ra = attention_symmetry_loss(a_yz, a_xz);
            let mut grad = attention_symmetry_loss_backward(a_yz, a_xz);
            for v in grad.yz.iter_mut().chain(grad.xz.iter_mut()) {
                *v *= beta;
            }
            (ra, Some(grad))
        }
        _ => (zero, None),
    };

    Ok(FitLoss {
        value: data_term + alpha * rg.value + beta * ra.value,
        data_term,
        rg,
        ra,
        d_pred,
        d_planes,
        d_maps,
    })
}

/// Adaptive-moment optimizer over one flat parameter vector, with the
/// standard bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, dim: usize) -> Self {
        Self::with_hyper(lr, 0.9, 0.999, 1e-8, dim)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64, dim: usize) -> Self {
        Self { lr, beta1, beta2, eps, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer over {} values got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
