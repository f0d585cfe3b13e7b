use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("distance {distance} m is outside the sensing range [0, {dist_max}] m")]
    OutOfRange { distance: f64, dist_max: f64 },

    #[error("candidate grid escapes the sensing area: {0}")]
    GridOutOfBounds(String),

    #[error("constellation is not on its ({delta_theta} deg, {delta_rho} m) lattice: {detail}")]
    OffLattice {
        delta_theta: f64,
        delta_rho: f64,
        detail: String,
    },

    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),

    #[error(
        "exhaustive search visited more than {budget} subsets without finishing; \
         use heuristic search for this grid"
    )]
    SearchBudgetExceeded { budget: u64 },

    #[error("designed constellation has P_e = {pe:e}, above the threshold {xi:e}")]
    ThresholdViolated { pe: f64, xi: f64 },

    #[error("flight did not settle within {max_sim_time} s (remaining error {remaining} m)")]
    NotSettled { max_sim_time: f64, remaining: f64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
