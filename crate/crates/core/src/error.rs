use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("non-invertible")]
    NonInvertible,
    #[error("degenerate key")]
    DegenerateKey,
    #[error("authentication failure")]
    AuthenticationFailure,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("decode error: {0}")]
    Decode(String),

    #[error("insufficient shares: need {needed}, have {available}")]
    InsufficientShares { needed: usize, available: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u32),

    #[error("incomplete ceremony: {0}")]
    IncompleteCeremony(String),
    #[error("ceremony aborted, unverifiable shares dealt by rabbits {culprits:?}")]
    CeremonyAborted { culprits: Vec<u32> },
    #[error("fragment verification failed for fragment {0}")]
    FragmentVerificationFailed(u32),

    #[error("insufficient participants: need {needed}, have {available}")]
    InsufficientParticipants { needed: usize, available: usize },
    #[error("triple reuse: triple {0} already consumed")]
    TripleReuse(u64),
    #[error("insufficient triples")]
    InsufficientTriples,
    #[error("session mismatch: {0}")]
    SessionMismatch(String),
    #[error("zero identifier rejected")]
    ZeroIdentifier,

    #[error("expired")]
    Expired,
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("duplicate user")]
    DuplicateUser,
    #[error("insufficient validations: {distinct} distinct validators, need {needed}")]
    InsufficientValidations { distinct: usize, needed: usize },
    #[error("fragment already released: {0}")]
    FragmentAlreadyReleased(u32),
    #[error("already triggered")]
    AlreadyTriggered,
    #[error("not triggered")]
    NotTriggered,
    #[error("not yet expired: {0}")]
    NotExpired(String),
    #[error("share inconsistency")]
    ShareInconsistency,
    #[error("chain verification failed at record {index}: {reason}")]
    ChainVerification { index: usize, reason: String },

    #[error("malformed evidence: {0}")]
    MalformedEvidence(String),
    #[error("unvalidated user")]
    UnvalidatedUser,
    #[error("unknown session")]
    UnknownSession,
    #[error("preimage mismatch")]
    PreimageMismatch,
    #[error("unknown petition")]
    UnknownPetition,
}

impl Error {
    /// True for rejections that follow from protocol rules rather than bad input.
    pub fn is_protocol_rejection(&self) -> bool {
        matches!(
            self,
            Error::Expired
                | Error::DuplicateUser
                | Error::InsufficientValidations { .. }
                | Error::FragmentAlreadyReleased(_)
                | Error::AlreadyTriggered
                | Error::NotTriggered
                | Error::NotExpired(_)
                | Error::InsufficientTriples
                | Error::InsufficientShares { .. }
                | Error::UnknownPetition
                | Error::PreimageMismatch
        )
    }
}
