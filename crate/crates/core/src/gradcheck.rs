//! Finite-difference verification of the loss gradients.
//!
//! Runs a short rollout through a reduced network in `f64`, then compares
//! the tape gradient of each loss term against central differences for
//! every parameter scalar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::a3c::{
    actor_factors, forward_on_tape, rollout_loss, LossCoefficients, NetworkArch, NetworkParams,
};
use crate::autodiff::Tape;
use crate::error::{contract, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub n_agents: usize,
    pub steps: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub scale_floor: f64,
    /// Observation draws tried before giving up on finding one whose ReLU
    /// inputs all stay clear of zero.
    pub max_redraws: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_agents: 2,
            steps: 3,
            epsilon: 1e-5,
            tolerance: 1e-3,
            scale_floor: 1e-6,
            max_redraws: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradMismatch {
    pub term: &'static str,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TermReport {
    pub term: &'static str,
    pub checked: usize,
    pub max_rel_err: f64,
    pub mismatches: Vec<GradMismatch>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub seed_used: u64,
    pub relu_margin: f64,
    pub terms: Vec<TermReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.terms.iter().all(|t| t.mismatches.is_empty())
    }

    pub fn max_rel_err(&self) -> f64 {
        self.terms.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.terms.iter().map(|t| t.checked).sum()
    }
}

struct Problem {
    arch: NetworkArch,
    observations: Vec<Tensor<f64>>,
    actions: Vec<Vec<usize>>,
    targets: Vec<f64>,
}

/// Which parts of the objective a check isolates.
#[derive(Clone, Copy)]
struct Term {
    name: &'static str,
    actor: bool,
    alpha: f64,
    beta: f64,
}

const TERMS: [Term; 4] = [
    Term {
        name: "actor",
        actor: true,
        alpha: 0.0,
        beta: 0.0,
    },
    Term {
        name: "critic",
        actor: false,
        alpha: 1.0,
        beta: 0.0,
    },
    Term {
        name: "entropy",
        actor: false,
        alpha: 0.0,
        beta: 1.0,
    },
    Term {
        name: "total",
        actor: true,
        alpha: 1.0,
        beta: 0.01,
    },
];

impl Problem {
    /// Loss value and gradient with the given (frozen) actor factors.
    fn evaluate(
        &self,
        params: &[Tensor<f64>],
        factors: Option<&[f64]>,
        coeffs: &LossCoefficients,
        want_grad: bool,
    ) -> Result<(f64, Vec<f64>, Option<Vec<Tensor<f64>>>, f64)> {
        let mut tape = Tape::new(params);
        let mut heads = Vec::with_capacity(self.observations.len());
        for obs in &self.observations {
            let x = tape.constant(obs.clone());
            heads.push(forward_on_tape(&mut tape, &self.arch, x)?);
        }
        let values: Vec<f64> = heads
            .iter()
            .map(|h| tape.value(h.value).item())
            .collect::<Result<_>>()?;
        let margin = tape.relu_margin().unwrap_or(f64::INFINITY);
        let owned;
        let factors = match factors {
            Some(f) => f,
            None => {
                owned = actor_factors(&self.targets, &values, coeffs.advantage_mode);
                &owned
            }
        };
        let (loss, _) = rollout_loss(&mut tape, &heads, &self.actions, &self.targets, factors, coeffs)?;
        let grads = if want_grad {
            Some(tape.backward(loss)?.into_tensors())
        } else {
            None
        };
        Ok((tape.value(loss).item()?, values, grads, margin))
    }
}

fn draw_problem(arch: &NetworkArch, steps: usize, rng: &mut ChaCha8Rng) -> Result<Problem> {
    let shape = arch.input_shape();
    let n: usize = shape.iter().product();
    let observations = (0..steps)
        .map(|_| Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen::<f64>()).collect()))
        .collect::<Result<_>>()?;
    let actions = (0..steps)
        .map(|_| (0..arch.n_agents).map(|_| rng.gen_range(0..arch.n_actions)).collect())
        .collect();
    let targets = (0..steps).map(|_| rng.gen_range(-5.0..5.0)).collect();
    Ok(Problem {
        arch: arch.clone(),
        observations,
        actions,
        targets,
    })
}

/// Checks the actor, critic and entropy terms separately and then the
/// total objective.
pub fn check_gradients(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let arch = NetworkArch::reduced(cfg.n_agents);
    let names = arch.param_shapes();
    // Perturbing one parameter by epsilon moves any ReLU input by at most
    // epsilon times the largest input it multiplies; require a wide margin.
    let needed_margin = 1e3 * cfg.epsilon;

    let mut chosen = None;
    for attempt in 0..cfg.max_redraws as u64 {
        let seed = cfg.seed.wrapping_add(attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = NetworkParams::<f64>::init(&arch, rng.gen())?;
        let problem = draw_problem(&arch, cfg.steps, &mut rng)?;
        let (_, _, _, margin) =
            problem.evaluate(&params.tensors, None, &LossCoefficients::default(), false)?;
        if margin > needed_margin {
            chosen = Some((seed, params, problem, margin));
            break;
        }
    }
    let (seed_used, params, problem, margin) = chosen.ok_or_else(|| {
        contract(format!(
            "no draw in {} attempts keeps every ReLU input {needed_margin} away from zero",
            cfg.max_redraws
        ))
    })?;

    let mut terms = Vec::with_capacity(TERMS.len());
    for term in TERMS {
        let coeffs = LossCoefficients {
            alpha: term.alpha,
            beta: term.beta,
            ..Default::default()
        };
        let (_, values, _, _) = problem.evaluate(&params.tensors, None, &coeffs, false)?;
        let factors: Vec<f64> = if term.actor {
            actor_factors(&problem.targets, &values, coeffs.advantage_mode)
        } else {
            vec![0.0; values.len()]
        };
        let (_, _, grads, _) = problem.evaluate(&params.tensors, Some(&factors), &coeffs, true)?;
        let grads = grads.expect("gradient requested");

        let mut report = TermReport {
            term: term.name,
            checked: 0,
            max_rel_err: 0.0,
            mismatches: Vec::new(),
        };
        let mut work = params.tensors.clone();
        for (k, (name, _)) in names.iter().enumerate() {
            for j in 0..work[k].len() {
                let orig = work[k].data()[j];
                work[k].data_mut()[j] = orig + cfg.epsilon;
                let (up, ..) = problem.evaluate(&work, Some(&factors), &coeffs, false)?;
                work[k].data_mut()[j] = orig - cfg.epsilon;
                let (down, ..) = problem.evaluate(&work, Some(&factors), &coeffs, false)?;
                work[k].data_mut()[j] = orig;

                let numeric = (up - down) / (2.0 * cfg.epsilon);
                let analytic = grads[k].data()[j];
                let rel = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(cfg.scale_floor);
                report.checked += 1;
                report.max_rel_err = report.max_rel_err.max(rel);
                if !(rel <= cfg.tolerance) {
                    report.mismatches.push(GradMismatch {
                        term: term.name,
                        param: name.clone(),
                        index: j,
                        analytic,
                        numeric,
                        rel_err: rel,
                    });
                }
            }
        }
        terms.push(report);
    }
    Ok(GradCheckReport {
        seed_used,
        relu_margin: margin,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_network_gradients_match() {
        let report = check_gradients(&GradCheckConfig::default()).unwrap();
        assert!(report.passed(), "{:#?}", report.terms);
        assert_eq!(report.terms.len(), 4);
        let n = NetworkParams::<f64>::init(&NetworkArch::reduced(2), 0)
            .unwrap()
            .n_scalars();
        assert_eq!(report.checked(), 4 * n);
    }
}
