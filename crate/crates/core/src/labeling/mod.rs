//! Pairwise rating workflow: pair scheduling, TrueSkill ratings for four
//! restorativeness indicators, composite scores, Jenks classification and
//! road label assignment.

mod jenks;
mod roads;
mod state;
mod trueskill;

pub use jenks::{jenks_breaks, JenksBreaks};
pub use roads::{
    format_label_set, label_roads, parse_image_manifest, parse_label_set, read_image_manifest,
    write_label_set, ImageEntry, LabelSet, RoadLabel, ScoredPoint,
};
pub use state::{
    parse_ledger, CompositeScores, ImageRecord, Indicator, LedgerEntry, PreparedVote, RatingState,
    VoteOutcome,
    TARGET_COMPARISONS,
};
pub use trueskill::{rate_draw, rate_win, v_draw, v_win, w_draw, w_win, Rating, TrueSkillParams};
