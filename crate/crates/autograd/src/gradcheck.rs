//! Central finite-difference verification of analytic gradients.
//!
//! The function under test is rebuilt from scratch for every perturbed
//! parameter set, so the numeric side never touches a backward closure.

use crate::graph::{Graph, Var};
use crate::params::{Binder, Params};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Perturbation for the central difference.
    pub step: f64,
    /// Gradients below this magnitude are compared absolutely.
    pub floor: f64,
    /// Cap on checked scalars per tensor; `None` checks all of them.
    pub max_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-5,
            max_per_tensor: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.rel_error))
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn checked(&self) -> usize {
        self.entries.len()
    }
}

fn evaluate<F>(params: &Params, build: &F) -> f64
where
    F: for<'g> Fn(&Binder<'g>) -> Var<'g>,
{
    let graph = Graph::new();
    let binder = Binder::new(&graph, params, false);
    build(&binder).item()
}

/// Compares analytic and central-difference gradients of the scalar built
/// by `build` with respect to every tensor in `params`.
pub fn gradcheck<F>(params: &Params, build: F, opts: GradCheckOptions) -> GradCheckReport
where
    F: for<'g> Fn(&Binder<'g>) -> Var<'g>,
{
    let graph = Graph::new();
    let binder = Binder::new(&graph, params, true);
    let out = build(&binder);
    let grads = binder.gradients(&graph.backward(out));

    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    for (name, tensor) in params.iter() {
        let n = tensor.len();
        let indices: Vec<usize> = match opts.max_per_tensor {
            Some(cap) if cap < n => {
                // Evenly spread, deterministic sample including both ends.
                (0..cap)
                    .map(|i| if cap == 1 { n / 2 } else { i * (n - 1) / (cap - 1) })
                    .collect()
            }
            _ => (0..n).collect(),
        };
        for idx in indices {
            let orig = tensor.data()[idx];
            probe.get_mut(name).unwrap().data_mut()[idx] = orig + opts.step;
            let plus = evaluate(&probe, &build);
            probe.get_mut(name).unwrap().data_mut()[idx] = orig - opts.step;
            let minus = evaluate(&probe, &build);
            probe.get_mut(name).unwrap().data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let analytic = grads[name].data()[idx];
            let denom = analytic.abs().max(numeric.abs()).max(opts.floor);
            report.entries.push(GradCheckEntry {
                name: name.clone(),
                index: idx,
                analytic,
                numeric,
                rel_error: (analytic - numeric).abs() / denom,
            });
        }
    }
    report
}
