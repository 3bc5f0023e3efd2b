use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty segmentation map")]
    EmptySegmentation,
    #[error("invalid segmentation map: {0}")]
    InvalidSegmentation(String),
    #[error("road has no images")]
    NoImages,
    #[error("centrality undefined for a graph with {0} node(s)")]
    CentralityUndefined(usize),
    #[error("class {0} is not a node of the graph")]
    MissingNode(u16),
    #[error("empty graph")]
    EmptyGraph,
    #[error("degenerate road geometry: {0}")]
    DegenerateGeometry(String),
    #[error("too few points: {0}")]
    TooFewPoints(String),
    #[error("duplicate road id {0}")]
    DuplicateRoad(String),
    #[error("unknown road id {0}")]
    UnknownRoad(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("empty mask")]
    EmptyMask,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown image {0}")]
    UnknownImage(String),
    #[error("degenerate breaks: {0}")]
    DegenerateBreaks(String),
    #[error("degenerate breaks in data: {0}")]
    DegenerateData(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format: expected {expected} v{supported}, found {found}")]
    Version {
        expected: &'static str,
        supported: u32,
        found: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery itself (non-finite values,
    /// diverging optimisation) as opposed to bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
