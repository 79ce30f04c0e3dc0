//! Augmentation generators.
//!
//! `fast_lagrangian_attack` produces the hard positive x': it ascends the
//! perceptual distance to x under a label-preserving hinge whose multiplier
//! grows exponentially over T steps, with a finite-difference probe
//! calibrating each step. `negative_attack` produces x'': perceptually close
//! to x but pushed to a large prediction KL. `adaptive_epsilon_step` is the
//! FGSM-style variant with a per-sample epsilon budget grown or shrunk by a
//! prediction-consistency test.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Mode, Network};
use crate::parallel;
use crate::perceptual::{self, PerceptualConfig};
use crate::rng::SeedStream;
use crate::tape::{Tape, Var};
use crate::tensor::{kl_divergence, Tensor};

/// Probability floor applied before any log.
pub const PROB_FLOOR: f64 = 1e-12;

/// How the prediction is sharpened before KL consistency tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sharpen {
    /// One-hot argmax (default).
    OneHot,
    /// p^(1/t) renormalized.
    Temperature(f64),
}

impl Sharpen {
    pub fn apply(&self, probs: &[f64]) -> Vec<f64> {
        match self {
            Sharpen::OneHot => {
                let mut best = 0;
                for (i, &p) in probs.iter().enumerate() {
                    if p > probs[best] {
                        best = i;
                    }
                }
                let mut out = vec![0.0; probs.len()];
                out[best] = 1.0;
                out
            }
            Sharpen::Temperature(t) => {
                let powed: Vec<f64> = probs.iter().map(|&p| p.max(PROB_FLOOR).powf(1.0 / t)).collect();
                let sum: f64 = powed.iter().sum();
                powed.into_iter().map(|v| v / sum).collect()
            }
        }
    }
}

/// All scalars governing augmentation generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    /// Label-preserving margin (nats of log-probability).
    pub sigma: f64,
    /// Minimum prediction KL demanded of negative samples.
    pub sigma_neg: f64,
    /// Gradient steps T.
    pub steps: usize,
    /// Step-size scale for the gamma schedule.
    pub epsilon: f64,
    /// Std of the initialization noise added to x.
    pub noise_scale: f64,
    /// Finite-difference probe step h.
    pub fd_step: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub pixel_min: f64,
    pub pixel_max: f64,
    /// Adaptive-epsilon increment.
    pub eta: f64,
    /// Adaptive-epsilon cap.
    pub epsilon_max: f64,
    /// Floor on |m| when dividing the step by the probe slope.
    pub slope_floor: f64,
    /// Restore the literal x' <- x + step form instead of iterative refinement.
    pub literal_update: bool,
    pub sharpen: Sharpen,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            sigma: 0.02,
            sigma_neg: 0.5,
            steps: 5,
            epsilon: 0.1,
            noise_scale: 0.01,
            fd_step: 0.01,
            lambda_min: 1.0,
            lambda_max: 10.0,
            pixel_min: 0.0,
            pixel_max: 1.0,
            eta: 0.01,
            epsilon_max: 0.1,
            slope_floor: 1e-3,
            literal_update: false,
            sharpen: Sharpen::OneHot,
        }
    }
}

impl AttackParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.sigma < 0.0 {
            return bad(format!("sigma {} < 0", self.sigma));
        }
        if self.sigma_neg < 0.0 {
            return bad(format!("sigma_neg {} < 0", self.sigma_neg));
        }
        if self.steps < 1 {
            return bad("steps must be >= 1".into());
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be > 0", self.epsilon));
        }
        if !(self.fd_step > 0.0) {
            return bad(format!("fd_step {} must be > 0", self.fd_step));
        }
        if !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min) {
            return bad(format!(
                "lambda schedule needs max >= min > 0, got [{}, {}]",
                self.lambda_min, self.lambda_max
            ));
        }
        if self.pixel_min >= self.pixel_max {
            return bad(format!("pixel bounds [{}, {}]", self.pixel_min, self.pixel_max));
        }
        if self.eta < 0.0 || self.epsilon_max < 0.0 {
            return bad("eta and epsilon_max must be >= 0".into());
        }
        if !(self.slope_floor > 0.0) {
            return bad("slope_floor must be > 0".into());
        }
        Ok(())
    }

    /// Multiplier at step t of T: lambda_min * (lambda_max/lambda_min)^(t/T).
    ///
    /// With the default 1..10 endpoints this is exactly 10^(t/T).
    pub fn lambda_at(&self, t: usize) -> f64 {
        let frac = t as f64 / self.steps as f64;
        self.lambda_min * (self.lambda_max / self.lambda_min).powf(frac)
    }

    /// Step scale at step t of T: epsilon * 0.1^(t/T).
    pub fn gamma_at(&self, t: usize) -> f64 {
        self.epsilon * 0.1f64.powf(t as f64 / self.steps as f64)
    }
}

/// Per-sample adaptive-epsilon state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveEpsState {
    pub sample_id: u64,
    pub epsilon_i: f64,
}

impl AdaptiveEpsState {
    pub fn new(sample_id: u64) -> Self {
        AdaptiveEpsState { sample_id, epsilon_i: 0.0 }
    }
}

/// One solver iteration, recorded for diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationDiag {
    pub lambda: f64,
    pub gamma: f64,
    /// Finite-difference probe slope (0 when no probe is taken).
    pub slope: f64,
    pub lpips: f64,
    pub hinge: f64,
    /// Main-text objective: -lpips + lambda * hinge.
    pub objective: f64,
    /// Appendix sign convention, logged for audit: lpips - lambda * hinge.
    pub objective_alt: f64,
}

/// Outcome of one attack on one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackDiagnostics {
    pub iterations: Vec<IterationDiag>,
    pub lambda_trace: Vec<f64>,
    pub final_lpips: f64,
    /// log F(x')[y] - (log F(x)[y] - sigma); satisfied iff >= -1e-9.
    pub constraint_slack: f64,
    pub satisfied: bool,
}

/// The Lagrangian value at (x, x'): -lpips + lambda * hinge.
///
/// The hinge activates iff log F(x)[y] - log F(x')[y] > sigma.
pub fn lagrangian_objective(
    net: &Network,
    cfg: &PerceptualConfig,
    x: &Tensor,
    x_prime: &Tensor,
    y: usize,
    lambda: f64,
    sigma: f64,
) -> Result<f64> {
    if y >= net.num_classes() {
        return Err(Error::InvalidClass { index: y, num_classes: net.num_classes() });
    }
    let d = perceptual::lpips(net, cfg, x, x_prime)?;
    let logp_x = log_prob(net, x, y, Mode::Main)?;
    let logp_xp = log_prob(net, x_prime, y, Mode::Aug)?;
    let hinge = (logp_x - logp_xp - sigma).max(0.0);
    Ok(-d + lambda * hinge)
}

fn log_prob(net: &Network, x: &Tensor, y: usize, mode: Mode) -> Result<f64> {
    let p = net.predict_proba(x, mode)?;
    Ok(p.data()[y].max(PROB_FLOOR).ln())
}

struct AscentParts {
    ascent: Var,
    lpips: Var,
    hinge: Var,
}

/// Builds lpips - lambda*hinge on tape (the quantity the attack ascends).
fn build_ascent(
    tape: &Tape,
    net: &Network,
    cfg: &PerceptualConfig,
    phi_x: Var,
    logp_x: f64,
    xp: Var,
    y: usize,
    lambda: f64,
    sigma: f64,
) -> Result<AscentParts> {
    let taped = net.on_tape(tape, false)?;
    let metas = perceptual::block_metas(net, cfg)?;
    let trace = taped.forward(tape, xp, Mode::Aug)?;
    let phi_xp = perceptual::embed_trace(tape, &trace, &metas)?;
    let dist = perceptual::lpips_on_tape(tape, phi_x, phi_xp)?;
    let probs = tape.softmax(trace.logits)?;
    let p_y = tape.select(probs, y)?;
    let p_y = tape.clamp(p_y, PROB_FLOOR, 1.0)?;
    let logp = tape.log(p_y)?;
    // hinge = relu(logp_x - logp - sigma)
    let neg_logp = tape.neg(logp)?;
    let pre = tape.add_scalar(neg_logp, logp_x - sigma)?;
    let hinge = tape.relu(pre)?;
    let penalty = tape.scale(hinge, lambda)?;
    let ascent = tape.sub(dist, penalty)?;
    Ok(AscentParts { ascent, lpips: dist, hinge })
}

fn init_with_noise(x: &Tensor, scale: f64, rng: &mut impl Rng) -> Result<Tensor> {
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let data: Vec<f64> = x.data().iter().map(|&v| v + scale * normal.sample(rng)).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Hard-positive generation by the T-step Lagrangian solver.
///
/// Direction is +grad(lpips) - lambda*grad(hinge); the update moves the
/// current iterate by gamma / max(|m|, floor) along the normalized
/// direction, where m is a finite-difference probe of the class
/// probability. The result is clamped to pixel bounds last.
pub fn fast_lagrangian_attack(
    net: &Network,
    cfg: &PerceptualConfig,
    x: &Tensor,
    y: usize,
    params: &AttackParams,
    seed: u64,
) -> Result<(Tensor, AttackDiagnostics)> {
    params.validate()?;
    if y >= net.num_classes() {
        return Err(Error::InvalidClass { index: y, num_classes: net.num_classes() });
    }
    check_bounds(x, params)?;

    let mut rng = SeedStream::new(seed).stream("attack-init", 0);
    let mut xp = init_with_noise(x, params.noise_scale, &mut rng)?;

    let p_x = net.predict_proba(x, Mode::Main)?;
    let logp_x = p_x.data()[y].max(PROB_FLOOR).ln();
    let phi_x_plain = perceptual::embed(net, cfg, x, Mode::Main)?.concatenated;

    let mut iterations = Vec::with_capacity(params.steps);
    let mut lambda_trace = Vec::with_capacity(params.steps);

    for t in 1..=params.steps {
        let lambda = params.lambda_at(t);
        lambda_trace.push(lambda);
        let gamma = params.gamma_at(t);

        let tape = Tape::new();
        let phi_x = tape.constant(phi_x_plain.clone())?;
        let xp_var = tape.leaf(xp.clone(), true)?;
        let parts = build_ascent(&tape, net, cfg, phi_x, logp_x, xp_var, y, lambda, params.sigma)?;
        let lpips_v = tape.value(parts.lpips).item();
        let hinge_v = tape.value(parts.hinge).item();
        let grads = tape.backward(parts.ascent)?;
        let delta = grads.wrt(xp_var)?;
        if !delta.data().iter().all(|v| v.is_finite()) {
            return Err(Error::AttackDiverged(format!(
                "non-finite direction at step {t} (lpips {lpips_v}, hinge {hinge_v})"
            )));
        }
        let norm = delta.l2_norm();
        iterations.push(IterationDiag {
            lambda,
            gamma,
            slope: 0.0,
            lpips: lpips_v,
            hinge: hinge_v,
            objective: -lpips_v + lambda * hinge_v,
            objective_alt: lpips_v - lambda * hinge_v,
        });
        if norm == 0.0 {
            break;
        }
        let delta_hat = delta.scale(1.0 / norm)?;

        // probe slope m = (F(x)[y] - F(x' + h*dhat)[y]) / h
        let probe_point = xp.add(&delta_hat.scale(params.fd_step)?)?;
        let p_probe = net.predict_proba(&probe_point, Mode::Aug)?;
        let m = (p_x.data()[y] - p_probe.data()[y]) / params.fd_step;
        iterations.last_mut().expect("just pushed").slope = m;

        let step = gamma / m.abs().max(params.slope_floor);
        let base = if params.literal_update { x } else { &xp };
        xp = base.add(&delta_hat.scale(step)?)?;
    }

    let xp = xp.clamp(params.pixel_min, params.pixel_max);
    let final_lpips = perceptual::lpips(net, cfg, x, &xp)?;
    let logp_xp = log_prob(net, &xp, y, Mode::Aug)?;
    let constraint_slack = logp_xp - (logp_x - params.sigma);
    Ok((
        xp,
        AttackDiagnostics {
            iterations,
            lambda_trace,
            final_lpips,
            constraint_slack,
            satisfied: constraint_slack >= -1e-9,
        },
    ))
}

/// Diagnostics for the negative attack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NegativeDiagnostics {
    pub iterations: Vec<IterationDiag>,
    pub final_lpips: f64,
    pub initial_lpips: f64,
    /// KL(F(x'') || F(x)) at the returned point.
    pub final_kl: f64,
}

/// Negative-sample generation: minimize lpips(x, x'') subject to
/// KL(F(x'')||F(x)) >= sigma_neg, solved in penalized form with the same
/// lambda schedule. Steps use the gamma schedule directly; the probe slope
/// is label-specific and has no analog here.
pub fn negative_attack(
    net: &Network,
    cfg: &PerceptualConfig,
    x: &Tensor,
    params: &AttackParams,
    seed: u64,
) -> Result<(Tensor, NegativeDiagnostics)> {
    params.validate()?;
    check_bounds(x, params)?;

    let mut rng = SeedStream::new(seed).stream("attack-neg-init", 0);
    let mut xpp = init_with_noise(x, params.noise_scale, &mut rng)?;

    let phi_x_plain = perceptual::embed(net, cfg, x, Mode::Main)?.concatenated;
    let q = net.predict_proba(x, Mode::Main)?;
    let log_q: Vec<f64> = q.data().iter().map(|&v| v.max(PROB_FLOOR).ln()).collect();
    let initial_lpips = perceptual::lpips(net, cfg, x, &xpp)?;

    let mut iterations = Vec::with_capacity(params.steps);
    for t in 1..=params.steps {
        let lambda = params.lambda_at(t);
        let gamma = params.gamma_at(t);

        let tape = Tape::new();
        let taped = net.on_tape(&tape, false)?;
        let metas = perceptual::block_metas(net, cfg)?;
        let phi_x = tape.constant(phi_x_plain.clone())?;
        let xpp_var = tape.leaf(xpp.clone(), true)?;
        let trace = taped.forward(&tape, xpp_var, Mode::Aug)?;
        let phi_xpp = perceptual::embed_trace(&tape, &trace, &metas)?;
        let dist = perceptual::lpips_on_tape(&tape, phi_x, phi_xpp)?;
        // KL(p || q) with p live and q constant
        let probs = tape.softmax(trace.logits)?;
        let p_cl = tape.clamp(probs, PROB_FLOOR, 1.0)?;
        let log_p = tape.log(p_cl)?;
        let log_q_var = tape.constant(Tensor::new(vec![log_q.len()], log_q.clone())?)?;
        let log_ratio = tape.sub(log_p, log_q_var)?;
        let kl = tape.sum(tape.mul(p_cl, log_ratio)?)?;
        // hinge = relu(sigma_neg - kl)
        let pre = tape.add_scalar(tape.neg(kl)?, params.sigma_neg)?;
        let hinge = tape.relu(pre)?;
        let objective = tape.add(dist, tape.scale(hinge, lambda)?)?; // to minimize
        let lpips_v = tape.value(dist).item();
        let hinge_v = tape.value(hinge).item();
        let grads = tape.backward(objective)?;
        let grad = grads.wrt(xpp_var)?;
        if !grad.data().iter().all(|v| v.is_finite()) {
            return Err(Error::AttackDiverged(format!("non-finite direction at step {t}")));
        }
        iterations.push(IterationDiag {
            lambda,
            gamma,
            slope: 0.0,
            lpips: lpips_v,
            hinge: hinge_v,
            objective: lpips_v + lambda * hinge_v,
            objective_alt: -(lpips_v + lambda * hinge_v),
        });
        let norm = grad.l2_norm();
        if norm == 0.0 {
            break;
        }
        let step_dir = grad.scale(-1.0 / norm)?; // descend
        xpp = xpp.add(&step_dir.scale(gamma)?)?;
    }

    let xpp = xpp.clamp(params.pixel_min, params.pixel_max);
    let final_lpips = perceptual::lpips(net, cfg, x, &xpp)?;
    let p_final = net.predict_proba(&xpp, Mode::Aug)?;
    let final_kl = kl_divergence(p_final.data(), q.data(), PROB_FLOOR)?;
    Ok((
        xpp,
        NegativeDiagnostics { iterations, final_lpips, initial_lpips, final_kl },
    ))
}

/// One FGSM-style adaptive-epsilon step from the weakly augmented input.
///
/// x' = weak_aug_x + eps_i * sign(grad of lpips(x, .) at weak_aug_x); then
/// eps_i grows by eta when the sharpened-prediction KL stays within sigma
/// and shrinks otherwise, clamped to [0, epsilon_max].
pub fn adaptive_epsilon_step(
    net: &Network,
    cfg: &PerceptualConfig,
    x: &Tensor,
    weak_aug_x: &Tensor,
    state: AdaptiveEpsState,
    params: &AttackParams,
) -> Result<(Tensor, AdaptiveEpsState, f64)> {
    params.validate()?;
    if !(0.0..=params.epsilon_max).contains(&state.epsilon_i) {
        return Err(Error::InvalidParam(format!(
            "epsilon_i {} outside [0, {}]",
            state.epsilon_i, params.epsilon_max
        )));
    }
    let tape = Tape::new();
    let phi_x = perceptual::embed_as_constant(&tape, net, cfg, x, Mode::Main)?;
    let u = tape.leaf(weak_aug_x.clone(), true)?;
    let taped = net.on_tape(&tape, false)?;
    let metas = perceptual::block_metas(net, cfg)?;
    let trace = taped.forward(&tape, u, Mode::Aug)?;
    let phi_u = perceptual::embed_trace(&tape, &trace, &metas)?;
    let dist = perceptual::lpips_on_tape(&tape, phi_x, phi_u)?;
    let grads = tape.backward(dist)?;
    let g = grads.wrt(u)?;

    let stepped: Vec<f64> = weak_aug_x
        .data()
        .iter()
        .zip(g.data())
        .map(|(&v, &gv)| v + state.epsilon_i * sign(gv))
        .collect();
    let x_prime = Tensor::new(weak_aug_x.shape().to_vec(), stepped)?
        .clamp(params.pixel_min, params.pixel_max);

    let p_xp = net.predict_proba(&x_prime, Mode::Aug)?;
    let p_x = net.predict_proba(x, Mode::Main)?;
    let sharp_xp = params.sharpen.apply(p_xp.data());
    let sharp_x = params.sharpen.apply(p_x.data());
    let kl = kl_divergence(&sharp_xp, &sharp_x, PROB_FLOOR)?;

    let mut eps = if kl <= params.sigma {
        state.epsilon_i + params.eta
    } else {
        state.epsilon_i - params.eta
    };
    eps = eps.min(params.epsilon_max).max(0.0);
    Ok((x_prime, AdaptiveEpsState { sample_id: state.sample_id, epsilon_i: eps }, kl))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_bounds(x: &Tensor, params: &AttackParams) -> Result<()> {
    if x.data()
        .iter()
        .any(|&v| v < params.pixel_min - 1e-12 || v > params.pixel_max + 1e-12)
    {
        return Err(Error::InvalidParam("input outside pixel bounds".into()));
    }
    Ok(())
}

/// One sample of a batch attack.
#[derive(Debug, Clone)]
pub struct AttackItem {
    pub id: u64,
    pub x: Tensor,
    pub label: usize,
}

/// Runs the hard-positive attack over a batch, fanning out across workers;
/// results merge in input order and per-sample seeds derive from
/// (stream, epoch, id), so the output is independent of scheduling.
pub fn fast_lagrangian_attack_batch(
    net: &Network,
    cfg: &PerceptualConfig,
    items: &[AttackItem],
    params: &AttackParams,
    seeds: &SeedStream,
    epoch: u64,
) -> Result<Vec<(Tensor, AttackDiagnostics)>> {
    let results = parallel::map_ordered(items, |item| {
        let seed = derive_seed(seeds, epoch, item.id);
        fast_lagrangian_attack(net, cfg, &item.x, item.label, params, seed)
    });
    results.into_iter().collect()
}

fn derive_seed(seeds: &SeedStream, epoch: u64, id: u64) -> u64 {
    use rand::RngCore;
    seeds.stream2("attack", epoch, id).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerSpec;

    fn small_net(seed: u64) -> Network {
        Network::init(Network::mlp_spec(4, &[6, 5], 3), vec![4], seed).unwrap()
    }

    fn unit_x() -> Tensor {
        Tensor::vector(vec![0.2, 0.8, 0.5, 0.1]).unwrap()
    }

    #[test]
    fn objective_zero_at_identity_without_noise() {
        let net = small_net(0);
        let cfg = PerceptualConfig::default();
        let x = unit_x();
        for sigma in [0.0, 0.1, 5.0] {
            let v = lagrangian_objective(&net, &cfg, &x, &x, 1, 3.0, sigma).unwrap();
            assert_eq!(v, 0.0, "sigma {sigma}");
        }
    }

    #[test]
    fn hinge_activates_only_past_sigma() {
        let net = small_net(1);
        let cfg = PerceptualConfig::default();
        let x = unit_x();
        let x2 = Tensor::vector(vec![0.9, 0.1, 0.0, 1.0]).unwrap();
        let y = 0;
        let logp_x = log_prob(&net, &x, y, Mode::Main).unwrap();
        let logp_x2 = log_prob(&net, &x2, y, Mode::Aug).unwrap();
        let gap = logp_x - logp_x2;
        let d = perceptual::lpips(&net, &cfg, &x, &x2).unwrap();
        // sigma above the gap: hinge off; sigma below: hinge on
        let hi = lagrangian_objective(&net, &cfg, &x, &x2, y, 2.0, gap.abs() + 1.0).unwrap();
        assert!((hi - (-d)).abs() < 1e-12);
        if gap > 0.0 {
            let lo = lagrangian_objective(&net, &cfg, &x, &x2, y, 2.0, gap / 2.0).unwrap();
            assert!((lo - (-d + 2.0 * (gap - gap / 2.0))).abs() < 1e-10);
        }
    }

    #[test]
    fn objective_matches_hand_composition() {
        let net = small_net(2);
        let cfg = PerceptualConfig::default();
        let x = unit_x();
        let x2 = Tensor::vector(vec![0.3, 0.3, 0.3, 0.3]).unwrap();
        let (y, lambda, sigma) = (2, 4.0, 0.05);
        let v = lagrangian_objective(&net, &cfg, &x, &x2, y, lambda, sigma).unwrap();
        let d = perceptual::lpips(&net, &cfg, &x, &x2).unwrap();
        let hinge = (log_prob(&net, &x, y, Mode::Main).unwrap()
            - log_prob(&net, &x2, y, Mode::Aug).unwrap()
            - sigma)
            .max(0.0);
        assert!((v - (-d + lambda * hinge)).abs() < 1e-10);
    }

    #[test]
    fn lambda_trace_is_exact_schedule() {
        let net = small_net(3);
        let cfg = PerceptualConfig::default();
        let params = AttackParams { steps: 5, ..Default::default() };
        let (_, diag) = fast_lagrangian_attack(&net, &cfg, &unit_x(), 0, &params, 7).unwrap();
        assert_eq!(diag.lambda_trace.len(), 5);
        for (i, &l) in diag.lambda_trace.iter().enumerate() {
            let t = i + 1;
            assert_eq!(l, 10f64.powf(t as f64 / 5.0));
        }
        assert_eq!(*diag.lambda_trace.last().unwrap(), 10.0);
        // strictly increasing
        for w in diag.lambda_trace.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn attack_is_deterministic() {
        let net = small_net(4);
        let cfg = PerceptualConfig::default();
        let params = AttackParams::default();
        let (a, da) = fast_lagrangian_attack(&net, &cfg, &unit_x(), 1, &params, 42).unwrap();
        let (b, db) = fast_lagrangian_attack(&net, &cfg, &unit_x(), 1, &params, 42).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(da.final_lpips, db.final_lpips);
        let (c, _) = fast_lagrangian_attack(&net, &cfg, &unit_x(), 1, &params, 43).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn output_respects_pixel_bounds() {
        let net = small_net(5);
        let cfg = PerceptualConfig::default();
        let params = AttackParams { epsilon: 5.0, ..Default::default() };
        let (xp, _) = fast_lagrangian_attack(&net, &cfg, &unit_x(), 0, &params, 9).unwrap();
        for &v in xp.data() {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn huge_sigma_reduces_to_pure_ascent_with_monotone_lpips() {
        let net = small_net(6);
        let cfg = PerceptualConfig::default();
        let params = AttackParams { sigma: 100.0, steps: 5, epsilon: 0.05, ..Default::default() };
        let (_, diag) = fast_lagrangian_attack(&net, &cfg, &unit_x(), 0, &params, 3).unwrap();
        // hinge never active
        assert!(diag.iterations.iter().all(|it| it.hinge == 0.0));
        // per-iteration lpips (measured before each step) strictly increases
        for w in diag.iterations.windows(2) {
            assert!(
                w[1].lpips > w[0].lpips,
                "lpips trace not increasing: {} -> {}",
                w[0].lpips,
                w[1].lpips
            );
        }
    }

    #[test]
    fn negative_attack_with_zero_threshold_stays_close() {
        let net = small_net(7);
        let cfg = PerceptualConfig::default();
        let params = AttackParams { sigma_neg: 0.0, ..Default::default() };
        let (xpp, diag) = negative_attack(&net, &cfg, &unit_x(), &params, 11).unwrap();
        // constraint vacuous: pure descent on lpips keeps us within the
        // initialization neighborhood
        assert!(diag.final_lpips <= diag.initial_lpips + 1e-12);
        for &v in xpp.data() {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn adaptive_step_zero_epsilon_returns_weak_aug_exactly() {
        let net = small_net(8);
        let cfg = PerceptualConfig::default();
        let params = AttackParams::default();
        let x = unit_x();
        let weak = Tensor::vector(vec![0.25, 0.75, 0.5, 0.15]).unwrap();
        let state = AdaptiveEpsState::new(3);
        let (xp, _, _) = adaptive_epsilon_step(&net, &cfg, &x, &weak, state, &params).unwrap();
        assert_eq!(xp.data(), weak.data());
    }

    #[test]
    fn adaptive_epsilon_caps_and_grows() {
        let net = small_net(9);
        let cfg = PerceptualConfig::default();
        let params = AttackParams { eta: 0.01, epsilon_max: 0.1, sigma: 1e9, ..Default::default() };
        let x = unit_x();
        // with a huge sigma the KL test always passes: 10 steps from 0 -> 0.1
        let mut state = AdaptiveEpsState::new(0);
        for _ in 0..10 {
            let (_, next, _) = adaptive_epsilon_step(&net, &cfg, &x, &x, state, &params).unwrap();
            state = next;
        }
        assert!((state.epsilon_i - 0.1).abs() < 1e-12);
        // at the cap it stays at the cap
        let (_, next, _) = adaptive_epsilon_step(&net, &cfg, &x, &x, state, &params).unwrap();
        assert!((next.epsilon_i - 0.1).abs() < 1e-12);
    }

    #[test]
    fn batch_matches_sequential_order() {
        let net = small_net(10);
        let cfg = PerceptualConfig::default();
        let params = AttackParams::default();
        let seeds = SeedStream::new(5);
        let items: Vec<AttackItem> = (0..6)
            .map(|i| AttackItem {
                id: i,
                x: Tensor::vector(vec![0.1 * i as f64, 0.5, 0.3, 0.7]).unwrap(),
                label: (i % 3) as usize,
            })
            .collect();
        let batch = fast_lagrangian_attack_batch(&net, &cfg, &items, &params, &seeds, 1).unwrap();
        for (item, (xp, _)) in items.iter().zip(&batch) {
            let seed = derive_seed(&seeds, 1, item.id);
            let (solo, _) = fast_lagrangian_attack(&net, &cfg, &item.x, item.label, &params, seed).unwrap();
            assert_eq!(solo.data(), xp.data());
        }
    }

    #[test]
    fn kl_identity_is_zero() {
        let p = [0.25, 0.25, 0.5];
        assert_eq!(kl_divergence(&p, &p, PROB_FLOOR).unwrap(), 0.0);
    }

    #[test]
    fn invalid_class_rejected() {
        let net = small_net(11);
        let cfg = PerceptualConfig::default();
        let params = AttackParams::default();
        assert!(matches!(
            fast_lagrangian_attack(&net, &cfg, &unit_x(), 99, &params, 0),
            Err(Error::InvalidClass { .. })
        ));
    }
}
