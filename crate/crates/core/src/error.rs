use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("at least one player is required")]
    NoPlayers,

    #[error("entitlement of player {index} must be positive and finite, got {value}")]
    InvalidEntitlement { index: usize, value: f64 },

    #[error("claim of player {index} must be finite and nonnegative, got {value}")]
    InvalidClaim { index: usize, value: f64 },

    #[error("claim of player {index} ({value}) exceeds the action bound {bound}")]
    ClaimAboveBound { index: usize, value: f64, bound: f64 },

    #[error("action bound must be positive, got {0}")]
    InvalidBound(f64),

    #[error("length mismatch: {claims} claims for {entitlements} entitlements")]
    LengthMismatch { claims: usize, entitlements: usize },

    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),

    #[error("{name} must be nonnegative and finite, got {value}")]
    NegativeQuantity { name: &'static str, value: f64 },

    #[error("player index {index} out of range for {players} players")]
    PlayerOutOfRange { index: usize, players: usize },

    #[error("action bound {bound} must exceed the largest entitlement {max_entitlement}")]
    BoundTooSmall { bound: f64, max_entitlement: f64 },

    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),

    #[error("coalition must be nonempty")]
    EmptyCoalition,

    #[error("search space of {evaluations} evaluations exceeds the cap of {cap}")]
    SearchSpaceTooLarge { evaluations: u128, cap: u128 },

    #[error("overage of player {index} must be positive, got {value}")]
    NonPositiveOverage { index: usize, value: f64 },

    #[error("base profile is not at the boundary: |X - I| = {gap}")]
    NotAtBoundary { gap: f64 },

    #[error("noise scale must be positive and finite, got {0}")]
    InvalidNoise(f64),

    #[error("sample count must be positive")]
    NoSamples,

    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),

    #[error("period {period} is outside the configured schedule of {periods} periods")]
    PeriodOutOfRange { period: usize, periods: usize },

    #[error("penalty {kappa} in period {period} is outside the collar [{lo}, {hi}]")]
    PenaltyOutsideCollar { period: usize, kappa: f64, lo: f64, hi: f64 },

    #[error("invalid collar: {0}")]
    InvalidCollar(String),

    #[error("lambda floor must lie in (0, 1], got {0}")]
    InvalidLambdaFloor(f64),

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}
