//! Euclidean distance and the two Siamese losses, with gradients with respect
//! to the embeddings.
//!
//! Triplet: `max(0, ‖a−p‖² − ‖a−n‖² + m)`.
//! Contrastive: `d²` for similar pairs, `max(0, m − d)²` for dissimilar ones.
//! At a hinge kink the inactive branch is taken, so the gradient is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-negative hinge offset.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Margin(f64);

impl Margin {
    pub const DEFAULT: Margin = Margin(1.0);
    /// Range offered by the margin slider of the loss slice.
    pub const UI_RANGE: [f64; 2] = [0.0, 5.0];

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Margin(value))
        } else {
            Err(Error::Config(format!(
                "margin must be a finite value ≥ 0, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Margin {
    fn default() -> Self {
        Margin::DEFAULT
    }
}

impl TryFrom<f64> for Margin {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Margin::new(v)
    }
}

impl From<Margin> for f64 {
    fn from(m: Margin) -> f64 {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Triplet,
    Contrastive,
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    Ok(squared_distance(u, v).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl Triplet {
    pub fn new(anchor: Vec<f64>, positive: Vec<f64>, negative: Vec<f64>) -> Result<Self> {
        check_dims(&anchor, &positive)?;
        check_dims(&anchor, &negative)?;
        Ok(Triplet {
            anchor,
            positive,
            negative,
        })
    }

    /// `‖a−p‖² − ‖a−n‖² + m`; the loss is its positive part.
    pub fn hinge_argument(&self, m: Margin) -> f64 {
        squared_distance(&self.anchor, &self.positive)
            - squared_distance(&self.anchor, &self.negative)
            + m.value()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negative: Vec<f64>,
}

pub fn triplet_loss(t: &Triplet, m: Margin) -> TripletLoss {
    let dim = t.anchor.len();
    let h = t.hinge_argument(m);
    if h <= 0.0 {
        return TripletLoss {
            loss: 0.0,
            grad_anchor: vec![0.0; dim],
            grad_positive: vec![0.0; dim],
            grad_negative: vec![0.0; dim],
        };
    }
    let mut ga = Vec::with_capacity(dim);
    let mut gp = Vec::with_capacity(dim);
    let mut gn = Vec::with_capacity(dim);
    for i in 0..dim {
        let (a, p, n) = (t.anchor[i], t.positive[i], t.negative[i]);
        ga.push(2.0 * (n - p));
        gp.push(-2.0 * (a - p));
        gn.push(2.0 * (a - n));
    }
    TripletLoss {
        loss: h,
        grad_anchor: ga,
        grad_positive: gp,
        grad_negative: gn,
    }
}

/// Triplet loss of three points given as plain slices (e.g. 2D bubble coordinates).
pub fn triplet_loss_value(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    m: Margin,
) -> Result<f64> {
    let t = Triplet::new(anchor.to_vec(), positive.to_vec(), negative.to_vec())?;
    Ok(triplet_loss(&t, m).loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub similar: bool,
}

impl LabeledPair {
    pub fn new(a: Vec<f64>, b: Vec<f64>, similar: bool) -> Result<Self> {
        check_dims(&a, &b)?;
        Ok(LabeledPair { a, b, similar })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
}

pub fn contrastive_loss(pair: &LabeledPair, m: Margin) -> PairLoss {
    let dim = pair.a.len();
    let diff: Vec<f64> = pair.a.iter().zip(&pair.b).map(|(x, y)| x - y).collect();
    let d2: f64 = diff.iter().map(|v| v * v).sum();
    if pair.similar {
        let grad_a: Vec<f64> = diff.iter().map(|v| 2.0 * v).collect();
        let grad_b = grad_a.iter().map(|v| -v).collect();
        return PairLoss {
            loss: d2,
            grad_a,
            grad_b,
        };
    }
    let d = d2.sqrt();
    let gap = m.value() - d;
    if gap <= 0.0 {
        return PairLoss {
            loss: 0.0,
            grad_a: vec![0.0; dim],
            grad_b: vec![0.0; dim],
        };
    }
    if d == 0.0 {
        // direction undefined for coincident points
        return PairLoss {
            loss: gap * gap,
            grad_a: vec![0.0; dim],
            grad_b: vec![0.0; dim],
        };
    }
    let scale = -2.0 * gap / d;
    let grad_a: Vec<f64> = diff.iter().map(|v| scale * v).collect();
    let grad_b = grad_a.iter().map(|v| -v).collect();
    PairLoss {
        loss: gap * gap,
        grad_a,
        grad_b,
    }
}

// ---------------------------------------------------------------------------
// Finite-difference check
// ---------------------------------------------------------------------------

/// Which loss (and for contrastive, which branch) to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedLoss {
    Triplet,
    ContrastiveSimilar,
    ContrastiveDissimilar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Samples drawn too close to a hinge kink for a central difference.
    pub skipped: usize,
}

/// Scalar function of the flattened loss inputs.
type Objective = Box<dyn Fn(&[f64]) -> f64>;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor used by [`loss_gradient_check`].
pub const LOSS_CHECK_FLOOR: f64 = 1e-4;

/// `|a − b| / max(|a|, |b|, floor)`. The floor keeps entries whose true value
/// is zero from dividing rounding noise by zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic loss gradients with central differences (`h = 1e-5`) on
/// `samples` seeded random inputs of dimension `dim`.
pub fn loss_gradient_check(
    kind: CheckedLoss,
    dim: usize,
    seed: u64,
    samples: usize,
) -> Result<GradientCheckReport> {
    if dim == 0 {
        return Err(Error::Config("dim must be ≥ 1".into()));
    }
    let mut rng = crate::rng::seeded(seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| crate::rng::gaussian(&mut rng, 1.0))
            .collect()
    };
    let mut report = GradientCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    // a kink within this distance of the sample could be crossed by the stencil
    let guard = 1e-3;
    for _ in 0..samples {
        let m = Margin::new(0.5 + draw(1)[0].abs()).expect("finite");
        let mut x = draw(3 * dim);
        let (analytic, f): (Vec<f64>, Objective) = match kind {
            CheckedLoss::Triplet => {
                let build = move |x: &[f64]| {
                    Triplet::new(
                        x[..dim].to_vec(),
                        x[dim..2 * dim].to_vec(),
                        x[2 * dim..].to_vec(),
                    )
                    .expect("equal dims")
                };
                let t = build(&x);
                if t.hinge_argument(m).abs() < guard {
                    report.skipped += 1;
                    continue;
                }
                let l = triplet_loss(&t, m);
                let g = [l.grad_anchor, l.grad_positive, l.grad_negative].concat();
                (
                    g,
                    Box::new(move |x: &[f64]| triplet_loss(&build(x), m).loss),
                )
            }
            CheckedLoss::ContrastiveSimilar | CheckedLoss::ContrastiveDissimilar => {
                let similar = kind == CheckedLoss::ContrastiveSimilar;
                x.truncate(2 * dim);
                if !similar {
                    // keep the pair inside the margin so the active branch is exercised
                    for v in &mut x[dim..] {
                        *v *= 0.1;
                    }
                    for v in &mut x[..dim] {
                        *v *= 0.1;
                    }
                }
                let build = move |x: &[f64]| {
                    LabeledPair::new(x[..dim].to_vec(), x[dim..].to_vec(), similar)
                        .expect("equal dims")
                };
                let p = build(&x);
                let d = squared_distance(&p.a, &p.b).sqrt();
                if !similar && ((m.value() - d).abs() < guard || d < guard) {
                    report.skipped += 1;
                    continue;
                }
                let l = contrastive_loss(&p, m);
                let g = [l.grad_a, l.grad_b].concat();
                (
                    g,
                    Box::new(move |x: &[f64]| contrastive_loss(&build(x), m).loss),
                )
            }
        };
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = relative_error(analytic[i], numeric, LOSS_CHECK_FLOOR);
            report.max_relative_error = report.max_relative_error.max(err);
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(v: f64) -> Margin {
        Margin::new(v).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean_distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(matches!(
            euclidean_distance(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension { left: 1, right: 2 })
        ));
    }

    #[test]
    fn margin_must_be_non_negative() {
        assert!(Margin::new(-0.1).is_err());
        assert!(Margin::new(f64::NAN).is_err());
        assert_eq!(Margin::new(0.0).unwrap().value(), 0.0);
    }

    #[test]
    fn contrastive_examples() {
        let sim = LabeledPair::new(vec![1.0, 2.0], vec![1.0, 2.0], true).unwrap();
        assert_eq!(contrastive_loss(&sim, m(1.0)).loss, 0.0);
        let far = LabeledPair::new(vec![0.0, 0.0], vec![3.0, 4.0], false).unwrap();
        assert_eq!(contrastive_loss(&far, m(5.0)).loss, 0.0);
        assert_eq!(contrastive_loss(&far, m(2.0)).loss, 0.0);
        let same = LabeledPair::new(vec![0.0, 0.0], vec![0.0, 0.0], false).unwrap();
        assert_eq!(contrastive_loss(&same, m(1.0)).loss, 1.0);
        // (m − d)² with m = 2, d = 0.5
        let near = LabeledPair::new(vec![0.0], vec![0.5], false).unwrap();
        assert!((contrastive_loss(&near, m(2.0)).loss - 2.25).abs() < 1e-15);
    }

    #[test]
    fn triplet_examples() {
        let t = Triplet::new(vec![0.3, 0.1], vec![2.0, 1.0], vec![2.0, 1.0]).unwrap();
        assert!((triplet_loss(&t, m(0.7)).loss - 0.7).abs() < 1e-15);
        let t = Triplet::new(vec![0.0, 0.0], vec![0.0, 1.0], vec![3.0, 0.0]).unwrap();
        let l = triplet_loss(&t, m(1.0));
        assert_eq!(l.loss, 0.0);
        assert!(l
            .grad_anchor
            .iter()
            .chain(&l.grad_positive)
            .chain(&l.grad_negative)
            .all(|&g| g == 0.0));
        let t = Triplet::new(vec![0.0, 0.0], vec![0.0, 2.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(triplet_loss(&t, m(0.5)).loss, 3.5);
        assert!(Triplet::new(vec![0.0], vec![0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn kink_takes_inactive_branch() {
        // ‖a−p‖² − ‖a−n‖² + m == 0 exactly
        let t = Triplet::new(vec![0.0], vec![1.0], vec![2.0]).unwrap();
        let l = triplet_loss(&t, m(3.0));
        assert_eq!(l.loss, 0.0);
        assert_eq!(l.grad_anchor, vec![0.0]);
        let p = LabeledPair::new(vec![0.0], vec![1.0], false).unwrap();
        assert_eq!(contrastive_loss(&p, m(1.0)).grad_a, vec![0.0]);
    }

    #[test]
    fn finite_difference_agreement() {
        for seed in 0..10 {
            let r = loss_gradient_check(CheckedLoss::Triplet, 8, seed, 8).unwrap();
            assert!(r.max_relative_error <= 1e-6, "seed {seed}: {r:?}");
            assert_eq!(r.checked + r.skipped, 8);
        }
        for kind in [
            CheckedLoss::ContrastiveSimilar,
            CheckedLoss::ContrastiveDissimilar,
        ] {
            for seed in 0..3 {
                let r = loss_gradient_check(kind, 8, seed, 8).unwrap();
                assert!(r.max_relative_error <= 1e-6, "{kind:?} seed {seed}: {r:?}");
                assert!(r.checked > 0);
            }
        }
        assert!(loss_gradient_check(CheckedLoss::Triplet, 0, 1, 1).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..5.0, 3)
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(a in vec3(), p in vec3(), n in vec3(), margin in 0.0f64..5.0, similar: bool) {
            let t = Triplet::new(a.clone(), p.clone(), n).unwrap();
            prop_assert!(triplet_loss(&t, m(margin)).loss >= 0.0);
            let pair = LabeledPair::new(a, p, similar).unwrap();
            prop_assert!(contrastive_loss(&pair, m(margin)).loss >= 0.0);
        }

        #[test]
        fn distance_is_symmetric(u in vec3(), v in vec3()) {
            prop_assert_eq!(euclidean_distance(&u, &v).unwrap(), euclidean_distance(&v, &u).unwrap());
        }

        #[test]
        fn triplet_translation_invariant(a in vec3(), p in vec3(), n in vec3(), shift in vec3(), margin in 0.0f64..5.0) {
            let base = triplet_loss(&Triplet::new(a.clone(), p.clone(), n.clone()).unwrap(), m(margin)).loss;
            let add = |x: &Vec<f64>| x.iter().zip(&shift).map(|(a, b)| a + b).collect::<Vec<_>>();
            let moved = triplet_loss(&Triplet::new(add(&a), add(&p), add(&n)).unwrap(), m(margin)).loss;
            prop_assert!((base - moved).abs() <= 1e-9 * (1.0 + base.abs()));
        }

        #[test]
        fn triplet_monotone_along_positive_ray(a in vec3(), p in vec3(), n in vec3(), margin in 0.0f64..5.0) {
            // walk p toward a; the loss never increases
            let mut prev = f64::INFINITY;
            for step in 0..=10 {
                let s = 1.0 - step as f64 / 10.0;
                let ps: Vec<f64> = a.iter().zip(&p).map(|(ai, pi)| ai + s * (pi - ai)).collect();
                let l = triplet_loss(&Triplet::new(a.clone(), ps, n.clone()).unwrap(), m(margin)).loss;
                prop_assert!(l <= prev + 1e-12);
                prev = l;
            }
        }

        #[test]
        fn triplet_monotone_as_negative_recedes(a in vec3(), p in vec3(), n in vec3(), margin in 0.0f64..5.0) {
            let mut prev = f64::INFINITY;
            for step in 0..=10 {
                let s = 1.0 + step as f64 / 2.0;
                let ns: Vec<f64> = a.iter().zip(&n).map(|(ai, ni)| ai + s * (ni - ai)).collect();
                let l = triplet_loss(&Triplet::new(a.clone(), p.clone(), ns).unwrap(), m(margin)).loss;
                prop_assert!(l <= prev + 1e-12);
                prev = l;
            }
        }

        #[test]
        fn dead_hinge_has_zero_gradients(a in vec3(), p in vec3(), n in vec3(), margin in 0.0f64..5.0) {
            let t = Triplet::new(a, p, n).unwrap();
            if t.hinge_argument(m(margin)) <= 0.0 {
                let l = triplet_loss(&t, m(margin));
                prop_assert!(l.grad_anchor.iter().chain(&l.grad_positive).chain(&l.grad_negative).all(|&g| g == 0.0));
            }
        }
    }
}
