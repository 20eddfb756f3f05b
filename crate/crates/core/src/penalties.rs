//! Penalty functions scoring a candidate partition against a posterior
//! similarity matrix. Every penalty is minimized.
//!
//! Pairwise sums run over `i < j` in row-major order without compensated
//! summation. The VI lower bound is the exception: its inner sums run over
//! all `j`, diagonal included.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::LogBase;
use crate::partition::{pairs, Partition};
use crate::similarity::SimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Binder,
    #[serde(rename = "dahl")]
    DahlQuadratic,
    Pear,
    #[serde(rename = "vi")]
    ViLowerBound,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 4] = [
        PenaltyKind::Binder,
        PenaltyKind::DahlQuadratic,
        PenaltyKind::Pear,
        PenaltyKind::ViLowerBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::Binder => "binder",
            PenaltyKind::DahlQuadratic => "dahl",
            PenaltyKind::Pear => "pear",
            PenaltyKind::ViLowerBound => "vi",
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binder" => Ok(PenaltyKind::Binder),
            "dahl" => Ok(PenaltyKind::DahlQuadratic),
            "pear" => Ok(PenaltyKind::Pear),
            "vi" => Ok(PenaltyKind::ViLowerBound),
            other => Err(Error::InvalidParameter(format!("unknown loss '{other}'"))),
        }
    }
}

fn check_dims(pi: &SimilarityMatrix, c: &Partition) -> Result<()> {
    c.check_len(pi.n())
}

/// `sum_{i<j} |pi_ij - 1{c_i = c_j}|`
pub fn binder_penalty(pi: &SimilarityMatrix, c: &Partition) -> Result<f64> {
    check_dims(pi, c)?;
    let n = c.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let p = pi.get(i, j);
            total += if c.same_cluster(i, j) { (p - 1.0).abs() } else { p.abs() };
        }
    }
    Ok(total)
}

/// `sum_{i<j} (1{c_i = c_j} - pi_ij)^2`
pub fn dahl_penalty(pi: &SimilarityMatrix, c: &Partition) -> Result<f64> {
    check_dims(pi, c)?;
    let n = c.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let p = pi.get(i, j);
            let d = if c.same_cluster(i, j) { 1.0 - p } else { p };
            total += d * d;
        }
    }
    Ok(total)
}

/// PEAR penalty with its degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearValue {
    pub penalty: f64,
    /// The adjusted-Rand denominator was exactly zero; `penalty` is then 1.
    pub degenerate: bool,
}

/// One minus the posterior expected adjusted Rand index, with indicator
/// agreement replaced by `pi` inside the index.
pub fn pear_penalty_detailed(pi: &SimilarityMatrix, c: &Partition) -> Result<PearValue> {
    check_dims(pi, c)?;
    let n = c.len();
    if n < 2 {
        return Err(Error::InputShape("PEAR needs at least 2 observations".into()));
    }
    let mut together = 0.0;
    let mut weighted = 0.0;
    let mut pi_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let p = pi.get(i, j);
            pi_sum += p;
            if c.same_cluster(i, j) {
                together += 1.0;
                weighted += p;
            }
        }
    }
    let chance = together * pi_sum / pairs(n);
    let denom = 0.5 * (together + pi_sum) - chance;
    if denom == 0.0 {
        return Ok(PearValue {
            penalty: 1.0,
            degenerate: true,
        });
    }
    Ok(PearValue {
        penalty: 1.0 - (weighted - chance) / denom,
        degenerate: false,
    })
}

pub fn pear_penalty(pi: &SimilarityMatrix, c: &Partition) -> Result<f64> {
    Ok(pear_penalty_detailed(pi, c)?.penalty)
}

/// Lower bound on the posterior expected VI loss:
/// `sum_i log(|C(i)|) - 2 sum_i log(sum_{j in C(i)} pi_ij)`.
pub fn vi_penalty(pi: &SimilarityMatrix, c: &Partition) -> Result<f64> {
    vi_penalty_base(pi, c, LogBase::Natural)
}

pub fn vi_penalty_base(pi: &SimilarityMatrix, c: &Partition, base: LogBase) -> Result<f64> {
    check_dims(pi, c)?;
    let sizes = c.cluster_sizes();
    let labels = c.labels();
    let mut first = 0.0;
    let mut second = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        // pi_ii = 1 keeps the inner sum positive
        let mass: f64 = labels
            .iter()
            .enumerate()
            .filter(|&(_, &lj)| lj == li)
            .map(|(j, _)| pi.get(i, j))
            .sum();
        first += base.log(sizes[li] as f64);
        second += base.log(mass);
    }
    Ok(first - 2.0 * second)
}

/// Dispatches to the penalty of the given kind.
pub fn evaluate(kind: PenaltyKind, pi: &SimilarityMatrix, c: &Partition) -> Result<f64> {
    evaluate_base(kind, pi, c, LogBase::Natural)
}

pub fn evaluate_base(
    kind: PenaltyKind,
    pi: &SimilarityMatrix,
    c: &Partition,
    base: LogBase,
) -> Result<f64> {
    match kind {
        PenaltyKind::Binder => binder_penalty(pi, c),
        PenaltyKind::DahlQuadratic => dahl_penalty(pi, c),
        PenaltyKind::Pear => pear_penalty(pi, c),
        PenaltyKind::ViLowerBound => vi_penalty_base(pi, c, base),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::expected_rand;
    use crate::similarity::{partition_affinity, validate_similarity};
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn p(labels: &[i64]) -> Partition {
        Partition::from_labels(labels)
    }

    fn sim(values: Array2<f64>) -> SimilarityMatrix {
        validate_similarity(values, 0.0).unwrap()
    }

    fn example_pi() -> SimilarityMatrix {
        sim(array![[1.0, 0.6, 0.2], [0.6, 1.0, 0.1], [0.2, 0.1, 1.0]])
    }

    fn two_blocks() -> SimilarityMatrix {
        partition_affinity(&p(&[1, 1, 2, 2]))
    }

    /// Term-by-term PEAR written directly from the index definition.
    fn pear_oracle(pi: &SimilarityMatrix, c: &Partition) -> f64 {
        let n = c.len();
        let mut terms = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                terms.push((f64::from(u8::from(c.labels()[i] == c.labels()[j])), pi.get(i, j)));
            }
        }
        let s_ind: f64 = terms.iter().map(|t| t.0).sum();
        let s_pi: f64 = terms.iter().map(|t| t.1).sum();
        let s_joint: f64 = terms.iter().map(|t| t.0 * t.1).sum();
        let m = terms.len() as f64;
        let num = s_joint - s_ind * s_pi / m;
        let den = 0.5 * (s_ind + s_pi) - s_ind * s_pi / m;
        1.0 - num / den
    }

    #[test]
    fn binder_examples() {
        let c = p(&[1, 1, 2]);
        assert_eq!(binder_penalty(&partition_affinity(&c), &c).unwrap(), 0.0);
        assert_relative_eq!(binder_penalty(&example_pi(), &c).unwrap(), 0.7, epsilon = 1e-15);
        assert_eq!(
            binder_penalty(&sim(Array2::eye(4)), &Partition::singletons(4)).unwrap(),
            0.0
        );
    }

    #[test]
    fn dahl_examples() {
        let c = p(&[1, 1, 2]);
        assert_eq!(dahl_penalty(&partition_affinity(&c), &c).unwrap(), 0.0);
        assert_relative_eq!(dahl_penalty(&example_pi(), &c).unwrap(), 0.21, epsilon = 1e-15);
    }

    #[test]
    fn dahl_and_binder_share_argmin_on_three_items() {
        let pi = example_pi();
        let all: Vec<Partition> = [[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1], [0, 1, 2]]
            .iter()
            .map(|l| p(l))
            .collect();
        let argmin = |f: fn(&SimilarityMatrix, &Partition) -> Result<f64>| {
            all.iter()
                .min_by(|a, b| f(&pi, a).unwrap().total_cmp(&f(&pi, b).unwrap()))
                .unwrap()
                .clone()
        };
        assert_eq!(argmin(binder_penalty), argmin(dahl_penalty));
        assert_eq!(argmin(binder_penalty), p(&[1, 1, 2]));
    }

    #[test]
    fn pear_examples() {
        let c = p(&[1, 1, 2, 2]);
        let v = pear_penalty_detailed(&two_blocks(), &c).unwrap();
        assert!(!v.degenerate);
        assert!(v.penalty.abs() < 1e-15);
    }

    #[test]
    fn pear_degenerate_is_flagged() {
        let v = pear_penalty_detailed(&sim(Array2::eye(4)), &Partition::singletons(4)).unwrap();
        assert!(v.degenerate);
        assert_eq!(v.penalty, 1.0);
        let v = pear_penalty_detailed(&sim(Array2::ones((4, 4))), &Partition::one_cluster(4))
            .unwrap();
        assert!(v.degenerate);
    }

    #[test]
    fn vi_examples() {
        let c = p(&[1, 1, 2, 2]);
        assert_relative_eq!(vi_penalty(&two_blocks(), &c).unwrap(), -4.0 * LN_2, epsilon = 1e-14);
        assert_eq!(vi_penalty(&example_pi(), &Partition::singletons(3)).unwrap(), 0.0);
        let ones = sim(Array2::ones((4, 4)));
        assert_relative_eq!(
            vi_penalty(&ones, &Partition::one_cluster(4)).unwrap(),
            -4.0 * 4f64.ln(),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            vi_penalty_base(&two_blocks(), &c, LogBase::Two).unwrap(),
            -4.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn evaluate_dispatch() {
        let c = p(&[1, 1, 2, 2]);
        let a = partition_affinity(&c);
        assert_eq!(evaluate(PenaltyKind::Binder, &a, &c).unwrap(), 0.0);
        assert!(evaluate(PenaltyKind::Pear, &a, &c).unwrap().abs() < 1e-15);
        assert_relative_eq!(
            evaluate(PenaltyKind::ViLowerBound, &a, &c).unwrap(),
            -4.0 * LN_2,
            epsilon = 1e-14
        );
    }

    #[test]
    fn dimension_mismatch() {
        let c = p(&[1, 2]);
        for kind in PenaltyKind::ALL {
            assert!(matches!(
                evaluate(kind, &example_pi(), &c),
                Err(Error::DimensionMismatch { .. })
            ));
        }
    }

    #[test]
    fn kind_parsing_round_trips() {
        for kind in PenaltyKind::ALL {
            assert_eq!(kind.name().parse::<PenaltyKind>().unwrap(), kind);
        }
        assert!("nope".parse::<PenaltyKind>().is_err());
    }

    fn random_pi(n: usize) -> impl Strategy<Value = SimilarityMatrix> {
        proptest::collection::vec(0.0f64..=1.0, n * (n - 1) / 2).prop_map(move |upper| {
            let mut m = Array2::eye(n);
            let mut it = upper.into_iter();
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = it.next().unwrap();
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            sim(m)
        })
    }

    fn instance() -> impl Strategy<Value = (SimilarityMatrix, Vec<u8>, Vec<usize>)> {
        (2usize..9).prop_flat_map(|n| {
            (
                random_pi(n),
                proptest::collection::vec(0u8..4, n),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
    }

    proptest! {
        #[test]
        fn pear_matches_term_by_term_oracle((pi, labels, _) in instance()) {
            let c = Partition::from_labels(&labels);
            let v = pear_penalty_detailed(&pi, &c).unwrap();
            prop_assume!(!v.degenerate);
            prop_assert!((v.penalty - pear_oracle(&pi, &c)).abs() < 1e-12);
        }

        #[test]
        fn penalties_ignore_labels_and_observation_order((pi, labels, order) in instance()) {
            let c = Partition::from_labels(&labels);
            let relabeled = Partition::from_labels(
                &labels.iter().map(|&l| 10 - l as i32).collect::<Vec<_>>());
            let n = labels.len();
            let permuted_labels: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
            let permuted_c = Partition::from_labels(&permuted_labels);
            let permuted_pi = sim(Array2::from_shape_fn((n, n), |(i, j)| pi.get(order[i], order[j])));
            for kind in PenaltyKind::ALL {
                let base = evaluate(kind, &pi, &c).unwrap();
                prop_assert_eq!(base, evaluate(kind, &pi, &relabeled).unwrap());
                prop_assert!((base - evaluate(kind, &permuted_pi, &permuted_c).unwrap()).abs() < 1e-10);
            }
        }

        #[test]
        fn binder_is_scaled_expected_rand_loss((pi, labels, _) in instance()) {
            let c = Partition::from_labels(&labels);
            let n = c.len() as f64;
            let via_rand = n * (n - 1.0) / 2.0 * (1.0 - expected_rand(&pi, &c).unwrap());
            prop_assert!((binder_penalty(&pi, &c).unwrap() - via_rand).abs() < 1e-12);
        }

        #[test]
        fn binder_equals_dahl_on_binary_pi(truth in proptest::collection::vec(0u8..3, 2..9),
                                           cand_seed in proptest::collection::vec(0u8..3, 9)) {
            let n = truth.len();
            let pi = partition_affinity(&Partition::from_labels(&truth));
            let c = Partition::from_labels(&cand_seed[..n]);
            prop_assert_eq!(binder_penalty(&pi, &c).unwrap(), dahl_penalty(&pi, &c).unwrap());
        }

        #[test]
        fn pear_zero_on_own_affinity(labels in proptest::collection::vec(0u8..4, 3..10)) {
            let c = Partition::from_labels(&labels);
            prop_assume!(c.n_clusters() >= 2 && c.n_clusters() < c.len());
            prop_assert!(pear_penalty(&partition_affinity(&c), &c).unwrap().abs() < 1e-12);
        }
    }
}
