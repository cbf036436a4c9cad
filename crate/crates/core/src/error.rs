use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid resolution {0} must be a power of two >= 16")]
    BadResolution(usize),
    #[error("period {0} must be positive")]
    BadPeriod(f64),
    #[error("snapshot magic mismatch (expected EFLD)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    BadVersion(u32),
    #[error("unknown rank code {0}")]
    BadRankCode(u8),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("derivative order {0} exceeds the supported maximum 8")]
    OrderTooHigh(u32),
    #[error("derivative order must be positive")]
    ZeroOrder,
    #[error("axis must be 1 or 2, got {0}")]
    BadAxis(u32),
    #[error("input mean {mean:e} exceeds the mean-zero tolerance {tol:e} (component {comp})")]
    NotMeanZero { mean: f64, tol: f64, comp: usize },
    #[error("expected rank {expected:?}, got {got:?}")]
    RankMismatch {
        expected: crate::field::Rank,
        got: crate::field::Rank,
    },
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("polynomial bump exponent m = {0} is below the minimum 9")]
    ExponentTooSmall(u32),
    #[error("derivative order {0} unavailable (analytic orders 0..={1})")]
    DerivativeUnavailable(u32, u32),
}

#[derive(Debug, Error)]
pub enum JetError {
    #[error("jet level k = {k} outside the bundle range {lo}..={hi}")]
    LevelOutOfRange { k: i64, lo: i64, hi: i64 },
    #[error("block parameters invalid: {0}")]
    BadParams(String),
    #[error("paper regime not representable: rounding error {0:.2}% exceeds 50%")]
    RegimeRounding(f64),
}

#[derive(Debug, Error)]
pub enum LorentzError {
    #[error("Lorentz exponent r = {0} must satisfy r >= 1")]
    BadPrimary(f64),
    #[error("Lorentz exponent q = {0} must satisfy q >= 1")]
    BadSecondary(f64),
    #[error("oscillation frequency must be a positive integer")]
    BadFrequency,
    #[error("jet error: {0}")]
    Jet(#[from] JetError),
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("strip speed must be dyadic")]
    NonDyadicSpeed,
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("grid N = {n} does not resolve frequency lambda = {lambda}: need N >= {required}")]
    Unresolved { n: usize, lambda: u64, required: usize },
    #[error("Gamma domain violated: |R - I| = {norm} >= 1/8")]
    GammaDomain { norm: f64 },
    #[error("Gamma_{i}^2 = {value} below the lower bound 1/4")]
    GammaLowerBound { i: usize, value: f64 },
    #[error("amplitude consistency failure at sample {index}: {detail}")]
    AmplitudeInternal { index: usize, detail: String },
    #[error("field error: {0}")]
    Field(#[from] FieldError),
    #[error("spectral error: {0}")]
    Spectral(#[from] SpectralError),
    #[error("jet error: {0}")]
    Jet(#[from] JetError),
}
