use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trueskill::{rate_draw, rate_win, Rating, TrueSkillParams};
use crate::{Error, Result};

/// Evaluations every image should receive before any image is revisited.
pub const TARGET_COMPARISONS: u32 = 20;

/// The four perceived-restorativeness dimensions rated independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    BeingAway,
    Extent,
    Fascination,
    Compatibility,
}

impl Indicator {
    pub const ALL: [Indicator; 4] = [
        Indicator::BeingAway,
        Indicator::Extent,
        Indicator::Fascination,
        Indicator::Compatibility,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Indicator::BeingAway => "being_away",
            Indicator::Extent => "extent",
            Indicator::Fascination => "fascination",
            Indicator::Compatibility => "compatibility",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Indicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Indicator::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown indicator '{s}'")))
    }
}

/// Answer to "which image is better on this indicator?".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteOutcome {
    Left,
    Right,
    Both,
    Neither,
}

impl VoteOutcome {
    /// Points awarded to (left, right) under the platform's tally.
    pub fn points(self) -> [u8; 2] {
        match self {
            VoteOutcome::Left => [1, 0],
            VoteOutcome::Right => [0, 1],
            VoteOutcome::Both => [1, 1],
            VoteOutcome::Neither => [0, 0],
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            VoteOutcome::Left => VoteOutcome::Right,
            VoteOutcome::Right => VoteOutcome::Left,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VoteOutcome::Left => "left",
            VoteOutcome::Right => "right",
            VoteOutcome::Both => "both",
            VoteOutcome::Neither => "neither",
        }
    }
}

impl FromStr for VoteOutcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(VoteOutcome::Left),
            "right" => Ok(VoteOutcome::Right),
            "both" => Ok(VoteOutcome::Both),
            "neither" => Ok(VoteOutcome::Neither),
            _ => Err(Error::Parse(format!("unknown vote outcome '{s}'"))),
        }
    }
}

/// One accepted vote. The ledger of these is the source of truth for a
/// [`RatingState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    pub left: String,
    pub right: String,
    pub indicator: Indicator,
    pub outcome: VoteOutcome,
    pub points: [u8; 2],
    /// Milliseconds since the Unix epoch, supplied by the caller.
    pub timestamp: u64,
}

impl LedgerEntry {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("ledger entries serialize");
        s.push('\n');
        s
    }
}

/// Parses a JSON-lines ledger. Blank lines are skipped.
pub fn parse_ledger(text: &str) -> Result<Vec<LedgerEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse(format!("ledger line {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub ratings: [Rating; 4],
    pub comparisons: u32,
    pub per_indicator: [u32; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingState {
    params: TrueSkillParams,
    images: BTreeMap<String, ImageRecord>,
    ledger: Vec<LedgerEntry>,
}

impl RatingState {
    pub fn new<I, S>(params: TrueSkillParams, image_ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        params.validate()?;
        let mut state = RatingState { params, images: BTreeMap::new(), ledger: Vec::new() };
        for id in image_ids {
            state.register(id.into());
        }
        Ok(state)
    }

    /// Adds an image at the prior. Registering a known image is a no-op.
    pub fn register(&mut self, image_id: String) {
        let prior = self.params.prior();
        self.images.entry(image_id).or_insert(ImageRecord {
            ratings: [prior; 4],
            comparisons: 0,
            per_indicator: [0; 4],
        });
    }

    /// Rebuilds a state by applying `ledger` in order to fresh priors.
    pub fn replay<I, S>(params: TrueSkillParams, image_ids: I, ledger: &[LedgerEntry]) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut state = RatingState::new(params, image_ids)?;
        for e in ledger {
            state.apply_entry(e.clone())?;
        }
        Ok(state)
    }

    pub fn params(&self) -> &TrueSkillParams {
        &self.params
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.images.contains_key(image_id)
    }

    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.get(image_id)
    }

    pub fn rating(&self, image_id: &str, indicator: Indicator) -> Option<Rating> {
        self.images.get(image_id).map(|r| r.ratings[indicator.index()])
    }

    pub fn comparison_count(&self, image_id: &str) -> Option<u32> {
        self.images.get(image_id).map(|r| r.comparisons)
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    pub fn min_count(&self) -> u32 {
        self.images.values().map(|r| r.comparisons).min().unwrap_or(0)
    }

    /// Fraction of images that have reached [`TARGET_COMPARISONS`].
    pub fn complete_fraction(&self) -> f64 {
        if self.images.is_empty() {
            return 0.0;
        }
        let done = self.images.values().filter(|r| r.comparisons >= TARGET_COMPARISONS).count();
        done as f64 / self.images.len() as f64
    }

    /// Picks the next pair to show. Among all pairs minimising the sum of
    /// the two comparison counts one is drawn uniformly, then its
    /// left/right orientation is drawn by a coin flip.
    pub fn next_pair(&self, indicator: Indicator, seed: u64) -> Result<(String, String)> {
        if self.images.len() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 registered images, have {}",
                self.images.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(indicator.index() as u64);
        let lowest = self.min_count();
        let group: Vec<&String> =
            self.images.iter().filter(|(_, r)| r.comparisons == lowest).map(|(k, _)| k).collect();
        let (a, b) = if group.len() >= 2 {
            let picked: Vec<&&String> = group.choose_multiple(&mut rng, 2).collect();
            (*picked[0], *picked[1])
        } else {
            let second = self
                .images
                .values()
                .map(|r| r.comparisons)
                .filter(|&c| c > lowest)
                .min()
                .expect("at least two images");
            let partners: Vec<&String> =
                self.images.iter().filter(|(_, r)| r.comparisons == second).map(|(k, _)| k).collect();
            (group[0], *partners.choose(&mut rng).expect("non-empty"))
        };
        if rng.gen::<bool>() {
            Ok((b.clone(), a.clone()))
        } else {
            Ok((a.clone(), b.clone()))
        }
    }

    /// Applies one vote and appends it to the ledger.
    pub fn apply_vote(
        &mut self,
        left: &str,
        right: &str,
        indicator: Indicator,
        outcome: VoteOutcome,
        timestamp: u64,
    ) -> Result<&LedgerEntry> {
        self.apply_vote_with_id(None, left, right, indicator, outcome, timestamp)
    }

    pub fn apply_vote_with_id(
        &mut self,
        pair_id: Option<String>,
        left: &str,
        right: &str,
        indicator: Indicator,
        outcome: VoteOutcome,
        timestamp: u64,
    ) -> Result<&LedgerEntry> {
        let vote = self.prepare_vote(pair_id, left, right, indicator, outcome, timestamp)?;
        self.commit(vote)
    }

    /// Validates a vote and computes its effect without touching the state.
    /// Callers that persist the ledger can write [`PreparedVote::entry`]
    /// first and [`commit`](Self::commit) afterwards.
    pub fn prepare_vote(
        &self,
        pair_id: Option<String>,
        left: &str,
        right: &str,
        indicator: Indicator,
        outcome: VoteOutcome,
        timestamp: u64,
    ) -> Result<PreparedVote> {
        self.prepare_entry(LedgerEntry {
            seq: self.ledger.len() as u64,
            pair_id,
            left: left.to_string(),
            right: right.to_string(),
            indicator,
            outcome,
            points: outcome.points(),
            timestamp,
        })
    }

    /// Applies a prepared vote. Fails if the state moved on since it was
    /// prepared.
    pub fn commit(&mut self, vote: PreparedVote) -> Result<&LedgerEntry> {
        if vote.base_len != self.ledger.len() {
            return Err(Error::Config(format!(
                "vote prepared against ledger length {}, now {}",
                vote.base_len,
                self.ledger.len()
            )));
        }
        let k = vote.entry.indicator.index();
        for (id, rating) in [(&vote.entry.left, vote.ratings[0]), (&vote.entry.right, vote.ratings[1])] {
            let rec = self.images.get_mut(id).expect("checked when prepared");
            rec.ratings[k] = rating;
            rec.comparisons += 1;
            rec.per_indicator[k] += 1;
        }
        self.ledger.push(vote.entry);
        Ok(self.ledger.last().expect("just pushed"))
    }

    fn prepare_entry(&self, entry: LedgerEntry) -> Result<PreparedVote> {
        let (l, r) = (entry.left.as_str(), entry.right.as_str());
        for id in [l, r] {
            if !self.images.contains_key(id) {
                return Err(Error::UnknownImage(id.to_string()));
            }
        }
        if l == r {
            return Err(Error::Config(format!("image '{l}' cannot be compared with itself")));
        }
        let k = entry.indicator.index();
        let rl = self.images[l].ratings[k];
        let rr = self.images[r].ratings[k];
        let (nl, nr) = match entry.outcome {
            VoteOutcome::Left => rate_win(rl, rr, &self.params)?,
            VoteOutcome::Right => {
                let (w, lo) = rate_win(rr, rl, &self.params)?;
                (lo, w)
            }
            VoteOutcome::Both => rate_draw(rl, rr, &self.params)?,
            VoteOutcome::Neither => (rl, rr),
        };
        Ok(PreparedVote { base_len: self.ledger.len(), entry, ratings: [nl, nr] })
    }

    fn apply_entry(&mut self, entry: LedgerEntry) -> Result<()> {
        let vote = self.prepare_entry(entry)?;
        self.commit(vote)?;
        Ok(())
    }

    /// Mean of the four indicator means for every image rated at least once
    /// on each indicator; the others are returned as incomplete.
    pub fn composite_scores(&self) -> CompositeScores {
        let mut scores = BTreeMap::new();
        let mut incomplete = Vec::new();
        for (id, rec) in &self.images {
            if rec.per_indicator.iter().any(|&c| c == 0) {
                incomplete.push(id.clone());
            } else {
                let sum: f64 = rec.ratings.iter().map(|r| r.mu).sum();
                scores.insert(id.clone(), sum / 4.0);
            }
        }
        CompositeScores { scores, incomplete }
    }
}

/// A validated vote with its computed rating changes, see
/// [`RatingState::prepare_vote`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedVote {
    base_len: usize,
    ratings: [Rating; 2],
    pub entry: LedgerEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeScores {
    pub scores: BTreeMap<String, f64>,
    pub incomplete: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(ids: &[&str]) -> RatingState {
        RatingState::new(TrueSkillParams::default(), ids.iter().copied()).unwrap()
    }

    fn bump(s: &mut RatingState, id: &str, n: u32) {
        s.images.get_mut(id).unwrap().comparisons = n;
    }

    #[test]
    fn two_images_give_the_only_pair() {
        let s = state(&["a", "b"]);
        let (l, r) = s.next_pair(Indicator::Extent, 3).unwrap();
        let mut pair = [l, r];
        pair.sort();
        assert_eq!(pair, ["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn min_sum_rule_skips_saturated_image() {
        let mut s = state(&["a", "b", "c"]);
        bump(&mut s, "a", 20);
        for seed in 0..20 {
            let (l, r) = s.next_pair(Indicator::BeingAway, seed).unwrap();
            assert!(l != "a" && r != "a" && l != r);
        }
    }

    #[test]
    fn lone_minimum_pairs_with_second_lowest() {
        let mut s = state(&["a", "b", "c", "d"]);
        bump(&mut s, "b", 2);
        bump(&mut s, "c", 2);
        bump(&mut s, "d", 5);
        for seed in 0..20 {
            let (l, r) = s.next_pair(Indicator::BeingAway, seed).unwrap();
            assert!(l == "a" || r == "a");
            assert!(l != "d" && r != "d");
        }
    }

    #[test]
    fn pair_is_deterministic_and_needs_two_images() {
        let s = state(&["a", "b", "c", "d", "e"]);
        assert_eq!(s.next_pair(Indicator::Fascination, 7).unwrap(), s.next_pair(Indicator::Fascination, 7).unwrap());
        assert!(state(&["a"]).next_pair(Indicator::Extent, 0).is_err());
    }

    #[test]
    fn neither_only_counts() {
        let mut s = state(&["a", "b"]);
        s.apply_vote("a", "b", Indicator::Extent, VoteOutcome::Neither, 1).unwrap();
        assert_eq!(s.rating("a", Indicator::Extent), Some(s.params().prior()));
        assert_eq!(s.comparison_count("a"), Some(1));
        assert_eq!(s.comparison_count("b"), Some(1));
        assert_eq!(s.ledger()[0].points, [0, 0]);
    }

    #[test]
    fn unknown_image_is_rejected_without_side_effects() {
        let mut s = state(&["a", "b"]);
        assert!(matches!(
            s.apply_vote("a", "zz", Indicator::Extent, VoteOutcome::Left, 0),
            Err(Error::UnknownImage(_))
        ));
        assert!(s.ledger().is_empty());
        assert_eq!(s.comparison_count("a"), Some(0));
    }

    #[test]
    fn composite_examples() {
        let mut s = state(&["a", "b"]);
        for (k, mu) in [20.0, 25.0, 30.0, 25.0].into_iter().enumerate() {
            let rec = s.images.get_mut("a").unwrap();
            rec.ratings[k].mu = mu;
            rec.per_indicator[k] = 1;
            s.images.get_mut("b").unwrap().per_indicator[k] = 1;
        }
        let c = s.composite_scores();
        assert_eq!(c.scores["a"], 25.0);
        assert_eq!(c.scores["b"], 25.0);
        assert!(c.incomplete.is_empty());
        assert_eq!(state(&["x"]).composite_scores().incomplete, vec!["x".to_string()]);
    }

    #[test]
    fn stale_prepared_vote_is_refused() {
        let mut s = state(&["a", "b"]);
        let stale = s.prepare_vote(None, "a", "b", Indicator::Extent, VoteOutcome::Left, 0).unwrap();
        let fresh = s.prepare_vote(None, "b", "a", Indicator::Extent, VoteOutcome::Left, 0).unwrap();
        assert_eq!(s.ledger().len(), 0);
        s.commit(fresh).unwrap();
        assert!(s.commit(stale).is_err());
        assert_eq!(s.ledger().len(), 1);
    }

    #[test]
    fn ledger_json_round_trip() {
        let mut s = state(&["a", "b"]);
        s.apply_vote_with_id(Some("p1".into()), "a", "b", Indicator::Compatibility, VoteOutcome::Both, 99).unwrap();
        let text = s.ledger()[0].to_json_line();
        assert!(text.contains("\"outcome\":\"both\""));
        assert_eq!(parse_ledger(&text).unwrap(), s.ledger());
    }
}
