//! HTTP service for the pairwise rating workflow.
//!
//! | route | |
//! |---|---|
//! | `GET /api/pair?indicator=<name>` | next pair to rate |
//! | `POST /api/vote` | `{pair_id, outcome}`; one vote per pair |
//! | `GET /api/progress` | image count, minimum comparisons, completion |
//! | `GET /api/scores` | composite scores and incomplete images |
//! | `GET /api/images/{id}` | image bytes from the manifest |
//!
//! Anything else is served from the static directory, if configured.

mod routes;
mod service;

pub use routes::{router, serve};
pub use service::{
    default_question, Labeling, PairView, Progress, ScoresView, ServerConfig, VoteError, MAX_PENDING,
};
