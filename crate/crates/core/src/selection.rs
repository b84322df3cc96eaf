//! Data-driven choice of the regularizer from a candidate set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::frontier::{frontier_coefficients, frontier_point};
use crate::io::csv_string;
use crate::linalg::check_psd;
use crate::moments::{Regularizer, SampleMoments};
use crate::scalar::Scalar;
use crate::sharpe::{sr_gmv, sr_hat_known_mu, sr_hat_unknown_mu};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    /// Maximize the known-mean Sharpe estimate.
    MaxSrKnown,
    /// Maximize the unknown-mean Sharpe estimate.
    MaxSrUnknown,
    /// Maximize the estimated inverse volatility of the minimum-variance portfolio.
    MaxInvVolGmv,
    /// Minimize the estimated out-of-sample frontier variance at a target return.
    MinFrontierVar,
}

impl SelectionCriterion {
    fn maximize(self) -> bool {
        !matches!(self, Self::MinFrontierVar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    ScaledBase,
    Explicit,
}

#[derive(Debug, Clone)]
pub struct CandidateSet<T: Scalar> {
    candidates: Vec<Regularizer<T>>,
    kind: CandidateKind,
}

impl<T: Scalar> CandidateSet<T> {
    /// `{q B : q in grid}` with a strictly increasing, positive grid.
    pub fn scaled_base(base: &DMatrix<T>, grid: &[T], base_label: &str) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("candidate grid is empty".into()));
        }
        if grid.iter().any(|q| !(*q > T::zero()) || !q.is_finite_value()) {
            return Err(Error::InvalidInput("candidate scales must be positive and finite".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("candidate grid must be strictly increasing".into()));
        }
        check_psd(base, "candidate base")?;
        let candidates = grid
            .iter()
            .map(|&q| Regularizer::scaled_trusted(base, q, base_label))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { candidates, kind: CandidateKind::ScaledBase })
    }

    pub fn explicit(candidates: Vec<Regularizer<T>>) -> Result<Self> {
        let Some(first) = candidates.first() else {
            return Err(Error::InvalidInput("candidate set is empty".into()));
        };
        let p = first.dim();
        if let Some(bad) = candidates.iter().find(|c| c.dim() != p) {
            return Err(dims("candidate regularizer", p, bad.dim()));
        }
        let mut labels: Vec<&str> = candidates.iter().map(|c| c.label()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("candidate labels must be unique".into()));
        }
        Ok(Self { candidates, kind: CandidateKind::Explicit })
    }

    pub fn candidates(&self) -> &[Regularizer<T>] {
        &self.candidates
    }

    pub fn kind(&self) -> CandidateKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.candidates[0].dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore<T> {
    pub label: String,
    pub scale: Option<T>,
    /// `None` when the candidate could not be scored.
    pub score: Option<T>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SelectionResult<T: Scalar> {
    pub chosen: Regularizer<T>,
    pub chosen_index: usize,
    pub criterion: SelectionCriterion,
    pub scores: Vec<CandidateScore<T>>,
}

impl<T: Scalar> SelectionResult<T> {
    /// `label,scale,score,chosen,error` with 17-digit floats.
    pub fn score_table_csv(&self) -> Result<String> {
        csv_string(
            &["label", "scale", "score", "chosen", "error"],
            self.scores.iter().enumerate().map(|(i, s)| {
                vec![
                    s.label.clone(),
                    crate::io::fmt_opt(s.scale.map(Scalar::as_f64)),
                    crate::io::fmt_opt(s.score.map(Scalar::as_f64)),
                    (i == self.chosen_index).to_string(),
                    s.error.clone().unwrap_or_default(),
                ]
            }),
        )
    }
}

/// Scores every candidate and picks the best. `direction` is the mean for
/// `MaxSrKnown` and the expected returns for `MinFrontierVar`. Candidates that
/// fail to score are reported and skipped; ties go to the earlier candidate.
pub fn select<T: Scalar>(
    moments: &SampleMoments<T>,
    direction: Option<&DVector<T>>,
    candidates: &CandidateSet<T>,
    criterion: SelectionCriterion,
    mu0: Option<T>,
) -> Result<SelectionResult<T>> {
    if candidates.dim() != moments.p {
        return Err(dims("candidate regularizers", moments.p, candidates.dim()));
    }
    let needs_direction = matches!(criterion, SelectionCriterion::MaxSrKnown | SelectionCriterion::MinFrontierVar);
    if needs_direction && direction.is_none() {
        return Err(Error::InvalidInput(format!("{criterion:?} needs a mean vector")));
    }
    if criterion == SelectionCriterion::MinFrontierVar && mu0.is_none() {
        return Err(Error::InvalidInput("frontier selection needs a target return".into()));
    }

    let score_one = |reg: &Regularizer<T>| -> Result<T> {
        let value = match criterion {
            SelectionCriterion::MaxSrKnown => sr_hat_known_mu(direction.expect("checked"), moments, reg)?.value,
            SelectionCriterion::MaxSrUnknown => sr_hat_unknown_mu(moments, reg)?.value,
            SelectionCriterion::MaxInvVolGmv => sr_gmv(moments, reg, None)?.value,
            SelectionCriterion::MinFrontierVar => {
                let coeffs = frontier_coefficients(direction.expect("checked"), moments, reg)?;
                frontier_point(&coeffs, mu0.expect("checked"), moments, None)?.sigma_hat_sq
            }
        };
        if value.is_finite_value() {
            Ok(value)
        } else {
            Err(Error::Degenerate("score is not finite".into()))
        }
    };

    let mut scores = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, T)> = None;
    for (i, reg) in candidates.candidates().iter().enumerate() {
        let (score, error) = match score_one(reg) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(v) = score {
            let better = match best {
                None => true,
                Some((_, b)) => {
                    if criterion.maximize() {
                        v > b
                    } else {
                        v < b
                    }
                }
            };
            if better {
                best = Some((i, v));
            }
        }
        scores.push(CandidateScore { label: reg.label().to_string(), scale: reg.scale(), score, error });
    }
    let (chosen_index, _) = best.ok_or(Error::NoValidCandidate)?;
    Ok(SelectionResult {
        chosen: candidates.candidates()[chosen_index].clone(),
        chosen_index,
        criterion,
        scores,
    })
}
