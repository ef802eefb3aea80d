//! Full-gradient descent with momentum, adaptive per-coordinate gains and an
//! optional early-exaggeration phase.

use serde::{Deserialize, Serialize};

use crate::coupling::MethodKind;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Something the optimizer can minimize over an `n x q` embedding.
pub trait Objective {
    /// Value and gradient, with the attractive part scaled by `exaggeration`
    /// (objectives without such a split ignore it).
    fn loss_grad(&self, z: &DenseMatrix, exaggeration: f64) -> Result<(f64, DenseMatrix)>;

    fn loss(&self, z: &DenseMatrix, exaggeration: f64) -> Result<f64> {
        self.loss_grad(z, exaggeration).map(|(l, _)| l)
    }
}

/// `|Z - A|_F^2`, a convex test objective.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    pub target: DenseMatrix,
}

impl Objective for QuadraticObjective {
    fn loss_grad(&self, z: &DenseMatrix, _: f64) -> Result<(f64, DenseMatrix)> {
        let diff = z.sub(&self.target);
        Ok((diff.frobenius_norm().powi(2), diff.scaled(2.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyExaggeration {
    pub enabled: bool,
    pub factor: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub min: f64,
    pub factor_up: f64,
    pub factor_down: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// Iteration at which momentum switches to `momentum_final`.
    pub momentum_switch: usize,
    pub gains: GainBounds,
    pub early_exaggeration: EarlyExaggeration,
    /// Early stop when the largest gradient component falls below this.
    pub grad_tolerance: f64,
    /// Step halvings allowed when a step lands on an infinite loss.
    pub max_halvings: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            iterations: 1000,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            gains: GainBounds {
                min: 0.01,
                factor_up: 0.2,
                factor_down: 0.8,
            },
            early_exaggeration: EarlyExaggeration {
                enabled: false,
                factor: 12.0,
                iterations: 250,
            },
            grad_tolerance: 1e-7,
            max_halvings: 30,
        }
    }
}

impl OptimizerConfig {
    /// Defaults for a method: early exaggeration is on for t-SNE only.
    pub fn for_method(method: MethodKind) -> Self {
        let mut cfg = Self::default();
        cfg.early_exaggeration.enabled = method == MethodKind::Tsne;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Parameter(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        for m in [self.momentum_initial, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return bad("momentum must lie in [0, 1)");
            }
        }
        if !(self.gains.min > 0.0 && self.gains.factor_up > 0.0) {
            return bad("gain bounds must be positive");
        }
        if !(self.gains.factor_down > 0.0 && self.gains.factor_down < 1.0) {
            return bad("gain decay must lie in (0, 1)");
        }
        if self.early_exaggeration.enabled && self.early_exaggeration.factor.is_nan()
            || self.early_exaggeration.factor <= 0.0
        {
            return bad("exaggeration factor must be positive");
        }
        Ok(())
    }

    fn exaggeration_at(&self, iteration: usize) -> f64 {
        let ee = &self.early_exaggeration;
        if ee.enabled && iteration < ee.iterations {
            ee.factor
        } else {
            1.0
        }
    }

    fn momentum_at(&self, iteration: usize) -> f64 {
        if iteration < self.momentum_switch {
            self.momentum_initial
        } else {
            self.momentum_final
        }
    }
}

/// Coordinates plus optimizer moments.
#[derive(Debug, Clone)]
pub struct EmbeddingState {
    pub z: DenseMatrix,
    pub velocity: DenseMatrix,
    pub gains: DenseMatrix,
}

impl EmbeddingState {
    pub fn new(z: DenseMatrix) -> Self {
        let (n, q) = z.shape();
        EmbeddingState {
            velocity: DenseMatrix::zeros(n, q),
            gains: DenseMatrix::from_fn(n, q, |_, _| 1.0),
            z,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    /// Lowest-loss iterate evaluated on the unexaggerated objective.
    pub z: DenseMatrix,
    pub best_loss: f64,
    /// Loss of the iterate at the start of each iteration (exaggerated while
    /// exaggeration is active), followed by the loss of the final iterate.
    pub history: Vec<f64>,
    pub iterations_run: usize,
    pub stopped_early: bool,
    pub final_grad_max: f64,
}

/// Receives `(iteration, loss, max |grad|)` after every iteration.
pub type TraceSink<'a> = &'a mut dyn FnMut(usize, f64, f64);

/// Minimizes `objective` from `z0`.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    z0: &DenseMatrix,
    cfg: &OptimizerConfig,
    mut trace: Option<TraceSink<'_>>,
) -> Result<OptimResult> {
    cfg.validate()?;
    let mut state = EmbeddingState::new(z0.clone());
    let mut exag = cfg.exaggeration_at(0);
    let (mut loss, mut g) = objective.loss_grad(&state.z, exag)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteInit);
    }

    let mut history = Vec::with_capacity(cfg.iterations + 1);
    let mut best: Option<(f64, DenseMatrix)> = None;
    let mut stopped_early = false;
    let mut iterations_run = 0;

    for it in 0..cfg.iterations {
        let want = cfg.exaggeration_at(it);
        if want != exag {
            exag = want;
            let (l, gr) = objective.loss_grad(&state.z, exag)?;
            loss = l;
            g = gr;
        }
        if loss.is_nan() || !g.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        history.push(loss);
        let gmax = g.max_abs();
        if let Some(t) = trace.as_mut() {
            t(it, loss, gmax);
        }
        if exag == 1.0 && best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, state.z.clone()));
        }
        if exag == 1.0 && gmax < cfg.grad_tolerance {
            stopped_early = true;
            break;
        }

        update_gains(&mut state, &g, cfg);
        let mom = cfg.momentum_at(it);
        let lr = cfg.learning_rate;
        let vel = state.velocity.as_mut_slice();
        for ((v, &gain), &gk) in vel.iter_mut().zip(state.gains.as_slice()).zip(g.as_slice()) {
            *v = mom * *v - lr * gain * gk;
        }

        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let candidate = state.z.add(&state.velocity);
            let (l, gr) = objective.loss_grad(&candidate, exag)?;
            if l.is_finite() {
                state.z = candidate;
                loss = l;
                g = gr;
                accepted = true;
                break;
            }
            if l.is_nan() {
                return Err(Error::Divergence { iteration: it });
            }
            state.velocity = state.velocity.scaled(0.5);
        }
        if !accepted {
            return Err(Error::Divergence { iteration: it });
        }
        iterations_run = it + 1;
    }

    if !stopped_early {
        if exag != 1.0 {
            let (l, gr) = objective.loss_grad(&state.z, 1.0)?;
            loss = l;
            g = gr;
        }
        history.push(loss);
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, state.z.clone()));
        }
    }
    let (best_loss, z) = best.expect("at least one unexaggerated evaluation");
    Ok(OptimResult {
        z,
        best_loss,
        history,
        iterations_run,
        stopped_early,
        final_grad_max: g.max_abs(),
    })
}

/// Gains grow where the gradient disagrees in sign with the velocity (the
/// step keeps moving downhill) and shrink otherwise.
fn update_gains(state: &mut EmbeddingState, g: &DenseMatrix, cfg: &OptimizerConfig) {
    let b = cfg.gains;
    for ((gain, &v), &gk) in state
        .gains
        .as_mut_slice()
        .iter_mut()
        .zip(state.velocity.as_slice())
        .zip(g.as_slice())
    {
        if (gk > 0.0) != (v > 0.0) {
            *gain += b.factor_up;
        } else {
            *gain *= b.factor_down;
        }
        *gain = gain.max(b.min);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_cfg() -> OptimizerConfig {
        OptimizerConfig {
            iterations: 500,
            learning_rate: 0.05,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn quadratic_converges() {
        let target = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0], [-1.5, 0.25]]);
        let obj = QuadraticObjective {
            target: target.clone(),
        };
        let r = minimize(&obj, &DenseMatrix::zeros(3, 2), &quad_cfg(), None).unwrap();
        assert!(r.z.sub(&target).max_abs() < 1e-6, "{:?}", r.z);
        assert!(r.iterations_run <= 500);
    }

    #[test]
    fn rejects_bad_config() {
        let obj = QuadraticObjective {
            target: DenseMatrix::zeros(1, 1),
        };
        let mut cfg = quad_cfg();
        cfg.momentum_final = 1.0;
        assert!(matches!(
            minimize(&obj, &DenseMatrix::zeros(1, 1), &cfg, None),
            Err(Error::Parameter(_))
        ));
    }

    struct Explodes;

    impl Objective for Explodes {
        fn loss_grad(&self, z: &DenseMatrix, _: f64) -> Result<(f64, DenseMatrix)> {
            let v = z[(0, 0)];
            let l = if v > 1.0 { f64::INFINITY } else { -v };
            Ok((l, DenseMatrix::from_fn(1, 1, |_, _| -1.0)))
        }
    }

    #[test]
    fn infinite_steps_are_halved() {
        let cfg = OptimizerConfig {
            iterations: 5,
            learning_rate: 0.3,
            ..OptimizerConfig::default()
        };
        let r = minimize(&Explodes, &DenseMatrix::zeros(1, 1), &cfg, None).unwrap();
        assert!(r.z[(0, 0)] <= 1.0);
        assert!(r.history.iter().all(|l| l.is_finite()));
    }

    struct NonFinite;

    impl Objective for NonFinite {
        fn loss_grad(&self, z: &DenseMatrix, _: f64) -> Result<(f64, DenseMatrix)> {
            Ok((f64::INFINITY, DenseMatrix::zeros(z.rows(), z.cols())))
        }
    }

    #[test]
    fn non_finite_start_is_an_error() {
        assert!(matches!(
            minimize(&NonFinite, &DenseMatrix::zeros(2, 2), &quad_cfg(), None),
            Err(Error::NonFiniteInit)
        ));
    }

    #[test]
    fn trace_sees_every_iteration() {
        let obj = QuadraticObjective {
            target: DenseMatrix::from_rows(&[[1.0]]),
        };
        let mut seen = Vec::new();
        let mut sink = |it: usize, l: f64, _g: f64| seen.push((it, l));
        let cfg = OptimizerConfig {
            iterations: 10,
            learning_rate: 0.05,
            ..OptimizerConfig::default()
        };
        let r = minimize(&obj, &DenseMatrix::zeros(1, 1), &cfg, Some(&mut sink)).unwrap();
        assert_eq!(seen.len(), r.iterations_run);
        assert_eq!(seen[0], (0, 1.0));
    }
}
