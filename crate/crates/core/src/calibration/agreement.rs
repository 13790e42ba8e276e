use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::CalibrationError;

/// The label with strictly more votes. Requires an odd number of votes.
pub fn majority_vote(votes: &[bool]) -> Result<bool, CalibrationError> {
    if votes.is_empty() || votes.len().is_multiple_of(2) {
        return Err(CalibrationError::EvenVotes(votes.len()));
    }
    let yes = votes.iter().filter(|&&v| v).count();
    Ok(2 * yes > votes.len())
}

/// Fleiss' κ for `N` items, each row holding per-category vote counts that sum
/// to the same number of raters `n ≥ 2`.
pub fn fleiss_kappa(matrix: &[Vec<u64>]) -> Result<f64, CalibrationError> {
    let first = matrix.first().ok_or(CalibrationError::EmptyInput)?;
    let n: u64 = first.iter().sum();
    if n < 2 {
        return Err(CalibrationError::TooFewRaters(n));
    }
    let categories = first.len();
    for (row, counts) in matrix.iter().enumerate() {
        let found: u64 = counts.iter().sum();
        if found != n || counts.len() != categories {
            return Err(CalibrationError::InconsistentRows { row, expected: n, found });
        }
    }
    let items = matrix.len() as f64;
    let nf = n as f64;
    let p_bar = matrix
        .iter()
        .map(|row| (row.iter().map(|&c| (c * c) as f64).sum::<f64>() - nf) / (nf * (nf - 1.0)))
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..categories)
        .map(|j| {
            let pj = matrix.iter().map(|row| row[j] as f64).sum::<f64>() / (items * nf);
            pj * pj
        })
        .sum();
    if p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub votes: Vec<bool>,
    pub majority: bool,
}

/// Annotator votes and majority labels per user, with cohort agreement.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoldLabelSet {
    labels: BTreeMap<String, GoldLabel>,
    kappa: Option<f64>,
}

impl GoldLabelSet {
    pub fn from_votes<S: Into<String>>(
        entries: impl IntoIterator<Item = (S, Vec<bool>)>,
    ) -> Result<Self, CalibrationError> {
        let mut labels = BTreeMap::new();
        for (user, votes) in entries {
            let user = user.into();
            let majority = majority_vote(&votes)?;
            if labels.insert(user.clone(), GoldLabel { votes, majority }).is_some() {
                return Err(CalibrationError::DuplicateUser(user));
            }
        }
        let raters = labels.values().next().map(|l| l.votes.len());
        let kappa = match raters {
            Some(n) if n >= 2 && labels.values().all(|l| l.votes.len() == n) => {
                let matrix: Vec<Vec<u64>> = labels
                    .values()
                    .map(|l| {
                        let yes = l.votes.iter().filter(|&&v| v).count() as u64;
                        vec![n as u64 - yes, yes]
                    })
                    .collect();
                Some(fleiss_kappa(&matrix)?)
            }
            _ => None,
        };
        Ok(Self { labels, kappa })
    }

    /// Cohort Fleiss' κ; `None` unless every user has the same number (≥ 2) of votes.
    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn label(&self, user: &str) -> Option<bool> {
        self.labels.get(user).map(|l| l.majority)
    }

    pub fn get(&self, user: &str) -> Option<&GoldLabel> {
        self.labels.get(user)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &GoldLabel)> {
        self.labels.iter().map(|(u, l)| (u.as_str(), l))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.values().filter(|l| l.majority).count()
    }
}

#[derive(Serialize, Deserialize)]
struct GoldRecord {
    user_id: String,
    votes: Vec<u8>,
}

pub fn load_gold_labels<R: Read>(input: R) -> Result<GoldLabelSet, CalibrationError> {
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CalibrationError::Malformed { line: idx + 1, message };
        let record: GoldRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let votes = record
            .votes
            .iter()
            .map(|&v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(malformed(format!("vote {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        entries.push((record.user_id, votes));
    }
    GoldLabelSet::from_votes(entries)
}

pub fn write_gold_jsonl<W: Write>(gold: &GoldLabelSet, mut out: W) -> std::io::Result<()> {
    for (user, label) in gold.iter() {
        let record = GoldRecord { user_id: user.to_owned(), votes: label.votes.iter().map(|&v| u8::from(v)).collect() };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
