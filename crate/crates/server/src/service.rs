use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use restograph::labeling::{
    parse_ledger, read_image_manifest, ImageEntry, Indicator, RatingState, TrueSkillParams, VoteOutcome,
};
use restograph::{Error, Result};
use serde::Serialize;

/// Issued pairs kept open for a vote; older ones expire first.
pub const MAX_PENDING: usize = 10_000;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Image manifest `image_id,path,x,y`.
    pub manifest: PathBuf,
    /// JSON-lines vote ledger; created if missing, replayed if present.
    pub ledger: PathBuf,
    /// Directory holding the rating page, served at `/`.
    pub static_dir: Option<PathBuf>,
    pub params: TrueSkillParams,
    pub seed: u64,
    /// Question shown for each indicator; missing entries use a default.
    pub questions: BTreeMap<Indicator, String>,
}

impl ServerConfig {
    pub fn new(manifest: impl Into<PathBuf>, ledger: impl Into<PathBuf>) -> Self {
        ServerConfig {
            manifest: manifest.into(),
            ledger: ledger.into(),
            static_dir: None,
            params: TrueSkillParams::default(),
            seed: 0,
            questions: BTreeMap::new(),
        }
    }
}

pub fn default_question(indicator: Indicator) -> &'static str {
    match indicator {
        Indicator::BeingAway => "Which place would better help you get away from everyday demands?",
        Indicator::Extent => "Which place feels more like a coherent world of its own?",
        Indicator::Fascination => "Which place has more that holds your attention?",
        Indicator::Compatibility => "Which place better fits what you would like to do there?",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairView {
    pub pair_id: String,
    pub indicator: Indicator,
    pub question: String,
    pub left_image_ref: String,
    pub right_image_ref: String,
    /// Fraction of images that reached the target number of comparisons.
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Progress {
    pub images: usize,
    pub min_count: u32,
    pub complete_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoresView {
    pub scores: BTreeMap<String, f64>,
    pub incomplete: Vec<String>,
}

#[derive(Debug, PartialEq)]
pub enum VoteError {
    /// Pair already voted on, never issued, or expired.
    Conflict(String),
    /// The ledger could not be written; the service refuses further votes.
    Unavailable(String),
}

impl std::fmt::Display for VoteError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VoteError::Conflict(m) | VoteError::Unavailable(m) => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone)]
struct Pending {
    left: String,
    right: String,
    indicator: Indicator,
}

struct Inner {
    state: RatingState,
    ledger: File,
    pending: HashMap<String, Pending>,
    order: VecDeque<String>,
    voted: HashSet<String>,
    issued: u64,
    rotation: usize,
    failed: bool,
}

/// Rating state behind a single writer lock, persisted to an append-only
/// ledger that is fsynced before a vote is acknowledged.
pub struct Labeling {
    inner: Mutex<Inner>,
    images: BTreeMap<String, ImageEntry>,
    questions: [String; 4],
    seed: u64,
    session: String,
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Labeling {
    /// Loads the manifest and replays an existing ledger.
    pub fn open(cfg: &ServerConfig) -> Result<Self> {
        let entries = read_image_manifest(&cfg.manifest)?;
        if entries.len() < 2 {
            return Err(Error::Config(format!(
                "{}: need at least 2 images, found {}",
                cfg.manifest.display(),
                entries.len()
            )));
        }
        let ids: Vec<String> = entries.iter().map(|e| e.image_id.clone()).collect();
        let history = if cfg.ledger.exists() {
            parse_ledger(&fs::read_to_string(&cfg.ledger)?)?
        } else {
            Vec::new()
        };
        let state = RatingState::replay(cfg.params.clone(), ids, &history)?;
        let voted = history.iter().filter_map(|e| e.pair_id.clone()).collect();
        if let Some(dir) = cfg.ledger.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let ledger = OpenOptions::new().create(true).append(true).open(&cfg.ledger)?;
        log::info!(
            "loaded {} images and {} ledger entries from {}",
            state.image_count(),
            history.len(),
            cfg.ledger.display()
        );
        let questions = Indicator::ALL.map(|i| {
            cfg.questions.get(&i).cloned().unwrap_or_else(|| default_question(i).to_string())
        });
        Ok(Labeling {
            inner: Mutex::new(Inner {
                state,
                ledger,
                pending: HashMap::new(),
                order: VecDeque::new(),
                voted,
                issued: 0,
                rotation: 0,
                failed: false,
            }),
            images: entries.into_iter().map(|e| (e.image_id.clone(), e)).collect(),
            questions,
            seed: cfg.seed,
            session: format!("{:x}", now_millis()),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // a panic while holding the lock cannot leave the state half-updated:
        // commits happen in one call after the ledger write
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Issues the next pair. Without an indicator the four are rotated.
    pub fn next_pair(&self, indicator: Option<Indicator>) -> Result<PairView> {
        let mut inner = self.lock();
        let indicator = indicator.unwrap_or_else(|| {
            let i = Indicator::ALL[inner.rotation % Indicator::ALL.len()];
            inner.rotation += 1;
            i
        });
        let seed = self.seed.wrapping_add(inner.state.ledger().len() as u64).wrapping_add(inner.issued << 20);
        let (left, right) = inner.state.next_pair(indicator, seed)?;
        let pair_id = format!("{}-{}", self.session, inner.issued);
        inner.issued += 1;
        inner.pending.insert(pair_id.clone(), Pending { left: left.clone(), right: right.clone(), indicator });
        inner.order.push_back(pair_id.clone());
        while inner.order.len() > MAX_PENDING {
            if let Some(old) = inner.order.pop_front() {
                inner.pending.remove(&old);
            }
        }
        Ok(PairView {
            pair_id,
            indicator,
            question: self.questions[indicator.index()].clone(),
            left_image_ref: format!("/api/images/{left}"),
            right_image_ref: format!("/api/images/{right}"),
            progress: inner.state.complete_fraction(),
        })
    }

    /// Records a vote on an issued pair. Each pair accepts one vote.
    pub fn vote(&self, pair_id: &str, outcome: VoteOutcome) -> std::result::Result<Progress, VoteError> {
        let mut inner = self.lock();
        if inner.failed {
            return Err(VoteError::Unavailable("ledger is not writable; restart the service".into()));
        }
        if inner.voted.contains(pair_id) {
            return Err(VoteError::Conflict(format!("pair {pair_id} has already been voted on")));
        }
        let Some(pending) = inner.pending.get(pair_id).cloned() else {
            return Err(VoteError::Conflict(format!("pair {pair_id} is unknown or expired")));
        };
        let vote = inner
            .state
            .prepare_vote(
                Some(pair_id.to_string()),
                &pending.left,
                &pending.right,
                pending.indicator,
                outcome,
                now_millis(),
            )
            .map_err(|e| VoteError::Conflict(e.to_string()))?;
        let line = vote.entry.to_json_line();
        let written = inner.ledger.write_all(line.as_bytes()).and_then(|_| inner.ledger.sync_data());
        if let Err(e) = written {
            inner.failed = true;
            log::error!("ledger write failed: {e}");
            return Err(VoteError::Unavailable(format!("ledger write failed: {e}")));
        }
        if let Err(e) = inner.state.commit(vote) {
            inner.failed = true;
            return Err(VoteError::Unavailable(e.to_string()));
        }
        inner.pending.remove(pair_id);
        inner.voted.insert(pair_id.to_string());
        Ok(progress_of(&inner.state))
    }

    pub fn progress(&self) -> Progress {
        progress_of(&self.lock().state)
    }

    pub fn scores(&self) -> ScoresView {
        let c = self.lock().state.composite_scores();
        ScoresView { scores: c.scores, incomplete: c.incomplete }
    }

    /// A consistent copy of the current rating state.
    pub fn snapshot(&self) -> RatingState {
        self.lock().state.clone()
    }

    pub fn image_path(&self, image_id: &str) -> Option<&Path> {
        self.images.get(image_id).map(|e| e.path.as_path())
    }
}

fn progress_of(state: &RatingState) -> Progress {
    Progress {
        images: state.image_count(),
        min_count: state.min_count(),
        complete_fraction: state.complete_fraction(),
    }
}
