//! Needs-profile matching over 144-component Likert vectors.
//!
//! Layout: `index = scale × 72 + issue × 6 + purpose`, each axis in its
//! canonical taxonomy order. Component values are Likert scores in `0..=4`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{Assessment, Contribution, LikertScore, Target};
use crate::taxonomy::{CellKey, Scale, TaxonomyDocument, TaxonomyError, CELL_COUNT, VECTOR_LEN};

#[derive(Error, Debug)]
pub enum MatchError {
    #[error("profile vector must have {VECTOR_LEN} components, got {0}")]
    WrongLength(usize),
    #[error("component {index} = {value} outside 0..=4")]
    ComponentOutOfRange { index: usize, value: i64 },
    #[error("invalid needs entry {entry:?}: {reason}")]
    BadNeedsEntry { entry: String, reason: String },
    #[error(transparent)]
    Label(#[from] TaxonomyError),
}

pub fn vector_index(cell: CellKey, scale: Scale) -> usize {
    scale.index() * CELL_COUNT + cell.index()
}

pub fn index_target(index: usize) -> Option<Target> {
    if index >= VECTOR_LEN {
        return None;
    }
    Some(Target {
        scale: Scale::from_index(index / CELL_COUNT)?,
        cell: CellKey::from_index(index % CELL_COUNT)?,
    })
}

/// A 144-component Likert profile.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ProfileVector([u8; VECTOR_LEN]);

impl ProfileVector {
    pub fn zero() -> Self {
        ProfileVector([0; VECTOR_LEN])
    }

    pub fn from_components(components: &[i64]) -> Result<Self, MatchError> {
        if components.len() != VECTOR_LEN {
            return Err(MatchError::WrongLength(components.len()));
        }
        let mut v = [0u8; VECTOR_LEN];
        for (index, (&value, slot)) in components.iter().zip(v.iter_mut()).enumerate() {
            *slot = LikertScore::new(value)
                .map_err(|_| MatchError::ComponentOutOfRange { index, value })?
                .value();
        }
        Ok(ProfileVector(v))
    }

    pub fn components(&self) -> &[u8; VECTOR_LEN] {
        &self.0
    }

    pub fn get(&self, cell: CellKey, scale: Scale) -> u8 {
        self.0[vector_index(cell, scale)]
    }

    pub fn set(&mut self, cell: CellKey, scale: Scale, score: LikertScore) {
        self.0[vector_index(cell, scale)] = score.value();
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Nonzero components as (target, score) pairs in index order.
    pub fn decode(&self) -> Vec<(Target, LikertScore)> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, &v)| (index_target(i).expect("in range"), LikertScore::new(v as i64).expect("in range")))
            .collect()
    }
}

impl Default for ProfileVector {
    fn default() -> Self {
        Self::zero()
    }
}

impl fmt::Debug for ProfileVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.decode().into_iter().map(|(t, s)| (vector_index(t.cell, t.scale), s.value()))).finish()
    }
}

impl Serialize for ProfileVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for ProfileVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<i64>::deserialize(deserializer)?;
        ProfileVector::from_components(&raw).map_err(serde::de::Error::custom)
    }
}

pub fn encode(a: &Assessment) -> ProfileVector {
    encode_contributions(&a.contributions)
}

pub fn encode_contributions(contributions: &[Contribution]) -> ProfileVector {
    let mut v = ProfileVector::zero();
    for c in contributions {
        v.set(c.cell, c.scale, c.score);
    }
    v
}

/// Cosine similarity; 0.0 when either vector is all zeros.
pub fn cosine(a: &ProfileVector, b: &ProfileVector) -> f64 {
    let (mut dot, mut na, mut nb) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.0.iter().zip(b.0.iter()) {
        let (x, y) = (x as u64, y as u64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0 || nb == 0 {
        return 0.0;
    }
    // Exact integer sums; the only rounding is in the final division.
    let sim = dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt());
    sim.min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub project_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Scores every catalog entry against `needs` and sorts by descending
/// score, then ascending project id. Ranks start at 1.
pub fn rank(needs: &ProfileVector, catalog: &[(String, ProfileVector)], top_k: Option<usize>) -> Vec<MatchResult> {
    let mut scored: Vec<(&str, f64)> = catalog.iter().map(|(id, v)| (id.as_str(), cosine(needs, v))).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0)));
    let limit = top_k.unwrap_or(scored.len());
    scored
        .into_iter()
        .take(limit)
        .enumerate()
        .map(|(i, (id, score))| MatchResult {
            project_id: id.to_string(),
            score,
            rank: i + 1,
        })
        .collect()
}

/// Parses the needs shorthand `issue:purpose:scale=score,...`.
///
/// Labels resolve through the taxonomy, so `health:well-being:local=3` is
/// accepted. A repeated target keeps the last score given.
pub fn parse_needs(text: &str, taxonomy: &TaxonomyDocument) -> Result<ProfileVector, MatchError> {
    let mut v = ProfileVector::zero();
    for entry in text.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        let bad = |reason: &str| MatchError::BadNeedsEntry {
            entry: entry.to_string(),
            reason: reason.to_string(),
        };
        let (key, score) = entry.split_once('=').ok_or_else(|| bad("expected issue:purpose:scale=score"))?;
        let parts: Vec<&str> = key.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected issue:purpose:scale"));
        }
        let score: i64 = score.trim().parse().map_err(|_| bad("score is not an integer"))?;
        let score = LikertScore::new(score).map_err(|_| bad("score outside 0..=4"))?;
        let cell = CellKey::new(taxonomy.parse_issue(parts[0])?, taxonomy.parse_purpose(parts[1])?);
        v.set(cell, taxonomy.parse_scale(parts[2])?, score);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{Issue, Purpose};

    fn with(entries: &[(usize, u8)]) -> ProfileVector {
        let mut v = ProfileVector::zero();
        for &(i, s) in entries {
            v.0[i] = s;
        }
        v
    }

    #[test]
    fn layout_endpoints() {
        assert_eq!(vector_index(CellKey::new(Issue::Governance, Purpose::Attractiveness), Scale::Local), 0);
        assert_eq!(vector_index(CellKey::new(Issue::Biodiversity, Purpose::Wellbeing), Scale::Global), 143);
        assert_eq!(vector_index(CellKey::new(Issue::Biodiversity, Purpose::Wellbeing), Scale::Global), 72 + 11 * 6 + 5);
        for i in 0..VECTOR_LEN {
            let t = index_target(i).unwrap();
            assert_eq!(vector_index(t.cell, t.scale), i);
        }
        assert!(index_target(144).is_none());
    }

    #[test]
    fn cosine_examples() {
        let a = with(&[(0, 4)]);
        let b = with(&[(0, 4), (1, 4)]);
        assert!((cosine(&a, &b) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&with(&[(0, 3)]), &with(&[(5, 2)])), 0.0);
        assert_eq!(cosine(&ProfileVector::zero(), &b), 0.0);
        assert_eq!(cosine(&b, &ProfileVector::zero()), 0.0);
        let c = with(&[(3, 1), (70, 4), (143, 2)]);
        assert!((cosine(&c, &c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_ties_and_truncation() {
        let needs = with(&[(0, 1)]);
        let catalog = vec![
            ("c".to_string(), with(&[(1, 1)])),
            ("b".to_string(), with(&[(0, 1)])),
            ("a".to_string(), with(&[(2, 1)])),
        ];
        let r = rank(&needs, &catalog, None);
        assert_eq!(r.iter().map(|m| m.project_id.as_str()).collect::<Vec<_>>(), ["b", "a", "c"]);
        assert_eq!(r.iter().map(|m| m.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(r[0].score, 1.0);
        assert_eq!(rank(&needs, &catalog, Some(1)).len(), 1);
        assert!(rank(&needs, &[], Some(3)).is_empty());
    }

    #[test]
    fn zero_needs_orders_by_id() {
        let catalog = vec![("z".to_string(), with(&[(0, 1)])), ("m".to_string(), with(&[(1, 4)]))];
        let r = rank(&ProfileVector::zero(), &catalog, None);
        assert_eq!(r[0].project_id, "m");
        assert!(r.iter().all(|m| m.score == 0.0));
    }

    #[test]
    fn serde_shape() {
        let v = with(&[(0, 4), (143, 1)]);
        let json = serde_json::to_string(&v).unwrap();
        let arr: Vec<u8> = serde_json::from_str(&json).unwrap();
        assert_eq!(arr.len(), 144);
        assert_eq!(serde_json::from_str::<ProfileVector>(&json).unwrap(), v);
        assert!(serde_json::from_str::<ProfileVector>("[1,2,3]").is_err());
        let mut bad = vec![0i64; 144];
        bad[7] = 5;
        assert!(serde_json::from_value::<ProfileVector>(serde_json::json!(bad)).is_err());
    }

    #[test]
    fn needs_shorthand() {
        let tax = TaxonomyDocument::builtin();
        let v = parse_needs("health:well-being:local=3, biodiversity:wellbeing:global=1", &tax).unwrap();
        assert_eq!(v.get(CellKey::new(Issue::Health, Purpose::Wellbeing), Scale::Local), 3);
        assert_eq!(v.components()[143], 1);
        assert_eq!(v.decode().len(), 2);
        assert!(parse_needs("", &tax).unwrap().is_zero());
        assert!(matches!(parse_needs("health:wellbeing=3", &tax), Err(MatchError::BadNeedsEntry { .. })));
        assert!(matches!(parse_needs("health:wellbeing:local=9", &tax), Err(MatchError::BadNeedsEntry { .. })));
        assert!(matches!(parse_needs("zoning:wellbeing:local=2", &tax), Err(MatchError::Label(_))));
    }
}
