use std::collections::BTreeSet;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::ontology::normalize_code;

pub const DEFAULT_EVIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    /// 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when there is no gold.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// 0 when precision + recall is 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport::from(*self)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

/// Micro metrics from summed counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

impl From<Counts> for MetricsReport {
    fn from(c: Counts) -> Self {
        Self {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            micro_precision: c.precision(),
            micro_recall: c.recall(),
            micro_f1: c.f1(),
        }
    }
}

impl MetricsReport {
    pub fn counts(&self) -> Counts {
        Counts::new(self.tp, self.fp, self.fn_)
    }
}

fn set_counts(pred: BTreeSet<String>, gold: BTreeSet<String>) -> Counts {
    let tp = pred.intersection(&gold).count();
    Counts::new(tp, pred.len() - tp, gold.len() - tp)
}

/// Lowercased, whitespace runs collapsed, trimmed.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Case-insensitive set match; positions are ignored.
pub fn score_diagnoses<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Counts {
    let norm = |xs: &[S]| {
        xs.iter()
            .map(|s| normalize_text(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect::<BTreeSet<_>>()
    };
    set_counts(norm(pred), norm(gold))
}

/// Exact match after code normalization.
pub fn score_codes<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Counts {
    let norm = |xs: &[S]| {
        xs.iter()
            .map(|s| normalize_code(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect::<BTreeSet<_>>()
    };
    set_counts(norm(pred), norm(gold))
}

pub fn token_set(s: &str) -> BTreeSet<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Token-set Jaccard after lowercasing; 0 when both sides are empty.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (token_set(a), token_set(b));
    let union = a.union(&b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

/// Partial-match evidence scoring. Pairs with Jaccard at or above `threshold`
/// are assigned one-to-one, highest overlap first; ties go to the earlier
/// prediction, then the earlier gold text.
pub fn score_evidence<S: AsRef<str>>(pred: &[S], gold: &[S], threshold: f64) -> Counts {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gold.iter().enumerate() {
            let s = token_jaccard(p.as_ref(), g.as_ref());
            if s >= threshold && s > 0.0 {
                pairs.push((s, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gold.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            tp += 1;
        }
    }
    Counts::new(tp, pred.len() - tp, gold.len() - tp)
}
