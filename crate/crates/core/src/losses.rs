//! Training objectives.
//!
//! Ground-truth images and clean pseudo-label descriptors enter the graph as
//! constants, so no gradient ever reaches them.

use autograd::{Tensor, Var};

use crate::error::{Error, Result};

/// Mean over pixels of `|d - d'| + |i - i'|` for `[B, 2, H, W]` inputs; empty
/// pixels count like any other.
pub fn rec_loss<'g>(pred: Var<'g>, gt: &Tensor) -> Result<Var<'g>> {
    let s = pred.shape();
    if s.as_slice() != gt.shape() || s.len() != 4 || s[1] != 2 {
        return Err(Error::input(format!(
            "rec_loss shape mismatch: pred {s:?}, gt {:?}",
            gt.shape()
        )));
    }
    let pixels = (s[0] * s[2] * s[3]) as f64;
    let target = pred.graph().constant(gt.clone());
    Ok(pred.sub(target).abs().sum().scale(1.0 / pixels))
}

/// `KL(softmax(r / tau) || softmax(c / tau))` per row of `[B, D]`, averaged
/// over the batch. `clean` is a fixed target.
pub fn ltd_loss<'g>(restored: Var<'g>, clean: &Tensor, tau: f64) -> Result<Var<'g>> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    let s = restored.shape();
    if s.as_slice() != clean.shape() || s.len() != 2 {
        return Err(Error::input(format!(
            "ltd_loss shape mismatch: restored {s:?}, clean {:?}",
            clean.shape()
        )));
    }
    let g = restored.graph();
    let log_q = g.constant(clean.scaled(1.0 / tau)).log_softmax(1);
    let log_p = restored.scale(1.0 / tau).log_softmax(1);
    let p = log_p.exp();
    Ok(p.mul(log_p.sub(log_q)).sum().scale(1.0 / s[0] as f64))
}

/// Loss plus its parts for logging.
pub struct LdrLoss<'g> {
    pub total: Var<'g>,
    pub rec: f64,
    pub ltd: f64,
}

/// `rec + lambda * ltd`. With `lambda == 0` the task term is not built, so
/// the total is the reconstruction loss exactly.
pub fn ldr_loss<'g>(
    pred: Var<'g>,
    gt: &Tensor,
    desc_restored: Option<Var<'g>>,
    desc_clean: Option<&Tensor>,
    lambda: f64,
    tau: f64,
) -> Result<LdrLoss<'g>> {
    let rec = rec_loss(pred, gt)?;
    if lambda == 0.0 {
        return Ok(LdrLoss {
            total: rec,
            rec: rec.item(),
            ltd: 0.0,
        });
    }
    let (Some(r), Some(c)) = (desc_restored, desc_clean) else {
        return Err(Error::input("task-driven term needs both descriptors"));
    };
    let ltd = ltd_loss(r, c, tau)?;
    Ok(LdrLoss {
        total: rec.add(ltd.scale(lambda)),
        rec: rec.item(),
        ltd: ltd.item(),
    })
}

/// Added under the square root so the distance is differentiable at zero.
const DIST_EPS: f64 = 1e-12;

/// `mean_i max(0, d(q, p) - d(q, n_i) + margin)` with Euclidean `d`.
/// `q` and `p` are `[1, D]`, `negs` is `[N, D]`.
pub fn triplet_loss<'g>(q: Var<'g>, p: Var<'g>, negs: Var<'g>, margin: f64) -> Result<Var<'g>> {
    let ns = negs.shape();
    if ns.len() != 2 || ns[0] == 0 {
        return Err(Error::input("triplet loss needs at least one negative"));
    }
    if !(margin > 0.0) {
        return Err(Error::config(format!("margin must be positive, got {margin}")));
    }
    let n = ns[0];
    let dist = |a: Var<'g>, b: Var<'g>| a.sub(b).square().sum_axis(1).add_scalar(DIST_EPS).sqrt();
    let d_pos = dist(q, p);
    let reps = vec![q; n];
    let d_neg = dist(Var::concat(&reps, 0), negs);
    let d_pos_rep = Var::concat(&vec![d_pos; n], 0);
    Ok(d_pos_rep.sub(d_neg).add_scalar(margin).relu().mean())
}

#[cfg(test)]
mod tests {
    use autograd::Graph;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn img(pairs: &[(f64, f64)]) -> Tensor {
        // 1 x n image, channel-planar.
        let n = pairs.len();
        let mut data: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        data.extend(pairs.iter().map(|p| p.1));
        Tensor::new(&[1, 2, 1, n], data)
    }

    #[test]
    fn rec_hand_value_and_symmetry() {
        let gt = img(&[(1.0, 0.0), (2.0, 1.0)]);
        let pred = img(&[(0.0, 0.0), (2.0, 0.0)]);
        let g = Graph::new();
        assert_eq!(rec_loss(g.variable(pred.clone()), &gt).unwrap().item(), 1.0);
        assert_eq!(rec_loss(g.variable(gt.clone()), &pred).unwrap().item(), 1.0);
        assert_eq!(rec_loss(g.variable(gt.clone()), &gt).unwrap().item(), 0.0);
        assert!(rec_loss(g.variable(gt.clone()), &Tensor::zeros(&[1, 2, 2, 1])).is_err());
    }

    // Independent two-class KL with explicit sigmoid probabilities.
    fn kl2(r: (f64, f64), c: (f64, f64), tau: f64) -> f64 {
        let p = 1.0 / (1.0 + ((r.1 - r.0) / tau).exp());
        let q = 1.0 / (1.0 + ((c.1 - c.0) / tau).exp());
        p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
    }

    #[test]
    fn ltd_hand_value() {
        let g = Graph::new();
        let r = g.variable(Tensor::new(&[1, 2], vec![1.0, 0.0]));
        let got = ltd_loss(r, &Tensor::new(&[1, 2], vec![0.0, 1.0]), 1.0).unwrap().item();
        let want = kl2((1.0, 0.0), (0.0, 1.0), 1.0);
        assert!((want - 0.5f64.tanh()).abs() < 1e-15);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((got - 0.462117).abs() < 1e-4);
    }

    #[test]
    fn ltd_zero_on_identical_and_asymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::randn(&[1, 6], 1.0, &mut rng);
        let b = Tensor::randn(&[1, 6], 1.0, &mut rng);
        let g = Graph::new();
        assert!(ltd_loss(g.variable(a.clone()), &a, 0.5).unwrap().item().abs() < 1e-15);
        let ab = ltd_loss(g.variable(a.clone()), &b, 1.0).unwrap().item();
        let ba = ltd_loss(g.variable(b.clone()), &a, 1.0).unwrap().item();
        assert!((ab - ba).abs() > 1e-6);
        assert!(matches!(ltd_loss(g.variable(a.clone()), &b, 0.0), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn ltd_non_negative(v in prop::collection::vec(-5.0f64..5.0, 8), tau in 0.1f64..3.0) {
            let g = Graph::new();
            let r = g.variable(Tensor::new(&[2, 4], v[..8].to_vec()));
            let c = Tensor::new(&[2, 4], v.iter().rev().cloned().collect());
            prop_assert!(ltd_loss(r, &c, tau).unwrap().item() >= -1e-15);
        }

        #[test]
        fn rec_non_negative(a in prop::collection::vec(-5.0f64..5.0, 8), b in prop::collection::vec(-5.0f64..5.0, 8)) {
            let g = Graph::new();
            let l = rec_loss(g.variable(Tensor::new(&[1, 2, 2, 2], a)), &Tensor::new(&[1, 2, 2, 2], b)).unwrap();
            prop_assert!(l.item() >= 0.0);
        }
    }

    #[test]
    fn ldr_composition() {
        let gt = img(&[(1.0, 0.0), (2.0, 1.0)]);
        let pred = img(&[(0.0, 0.0), (2.0, 0.0)]);
        let clean = Tensor::new(&[1, 2], vec![0.0, 1.0]);
        let g = Graph::new();
        let r = g.variable(Tensor::new(&[1, 2], vec![1.0, 0.0]));
        let l0 = ldr_loss(g.variable(pred.clone()), &gt, Some(r), Some(&clean), 0.0, 1.0).unwrap();
        assert_eq!(l0.total.item(), rec_loss(g.variable(pred.clone()), &gt).unwrap().item());
        let l = ldr_loss(g.variable(pred.clone()), &gt, Some(r), Some(&clean), 0.1, 1.0).unwrap();
        assert!((l.total.item() - (1.0 + 0.1 * 0.5f64.tanh())).abs() < 1e-12);
        assert_eq!(l.rec, 1.0);
    }

    #[test]
    fn ldr_gradient_reaches_only_prediction_and_restored_descriptor() {
        let g = Graph::new();
        let gt = img(&[(1.0, 0.0), (2.0, 1.0)]);
        let clean = Tensor::new(&[1, 2], vec![0.0, 1.0]);
        let pred = g.variable(img(&[(0.0, 0.3), (2.5, 0.0)]));
        let r = g.variable(Tensor::new(&[1, 2], vec![1.0, 0.0]));
        let l = ldr_loss(pred, &gt, Some(r), Some(&clean), 0.1, 1.0).unwrap();
        let grads = g.backward(l.total);
        // d rec / d pred = sign(pred - gt) / pixels; the task term does not
        // involve the prediction tensor directly.
        let want = pred.value().zip_map(&gt, |p, t| (p - t).signum() / 2.0);
        assert!(grads.get(pred).unwrap().max_abs_diff(&want) < 1e-15);
        assert!(grads.get(r).unwrap().max_abs() > 0.0);
    }

    fn row(v: &[f64]) -> Tensor {
        Tensor::new(&[v.len() / 2, 2], v.to_vec())
    }

    #[test]
    fn triplet_hand_values() {
        let g = Graph::new();
        let t = |q: &[f64], p: &[f64], n: &[f64]| {
            triplet_loss(g.variable(row(q)), g.variable(row(p)), g.variable(row(n)), 0.5)
                .unwrap()
                .item()
        };
        assert_eq!(t(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]), 0.0);
        let v = t(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]);
        assert!((v - (2f64.sqrt() + 0.5)).abs() < 1e-4);
        assert!((v - 1.9142).abs() < 1e-4);
        // Inactive hinge: positive much closer than every negative.
        assert_eq!(t(&[0.0, 0.0], &[0.1, 0.0], &[3.0, 0.0, 0.0, 4.0]), 0.0);
        assert!(matches!(
            triplet_loss(g.variable(row(&[1.0, 0.0])), g.variable(row(&[1.0, 0.0])), g.variable(Tensor::zeros(&[0, 2])), 0.5),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn triplet_monotone_in_distances() {
        // Along the x axis d(q, p) = p and d(q, n) = n, so slopes are +-1/N.
        let loss = |p: f64, n1: f64, n2: f64| {
            let g = Graph::new();
            let l = triplet_loss(
                g.variable(Tensor::new(&[1, 2], vec![0.0, 0.0])),
                g.variable(Tensor::new(&[1, 2], vec![p, 0.0])),
                g.variable(Tensor::new(&[2, 2], vec![n1, 0.0, n2, 0.0])),
                0.5,
            )
            .unwrap();
            l.item()
        };
        let h = 1e-6;
        let (p, n1, n2) = (1.0, 1.2, 1.1);
        assert!((loss(p + h, n1, n2) - loss(p - h, n1, n2)) / (2.0 * h) >= 0.0);
        assert!((loss(p, n1 + h, n2) - loss(p, n1 - h, n2)) / (2.0 * h) <= 0.0);
        assert!((loss(p, n1, n2 + h) - loss(p, n1, n2 - h)) / (2.0 * h) <= 0.0);
    }

    #[test]
    fn triplet_kink_has_zero_subgradient() {
        // d(q, p) - d(q, n) + m == 0 exactly: at distances 128 and 128.5 the
        // epsilon under the square root is below half an ulp and vanishes.
        let g = Graph::new();
        let q = g.variable(Tensor::new(&[1, 2], vec![0.0, 0.0]));
        let p = g.variable(Tensor::new(&[1, 2], vec![128.0, 0.0]));
        let n = g.variable(Tensor::new(&[1, 2], vec![128.5, 0.0]));
        let l = triplet_loss(q, p, n, 0.5).unwrap();
        assert_eq!(l.item(), 0.0);
        let grads = g.backward(l);
        assert_eq!(grads.get(p).unwrap().max_abs(), 0.0);
        assert_eq!(grads.get(n).unwrap().max_abs(), 0.0);
    }
}
