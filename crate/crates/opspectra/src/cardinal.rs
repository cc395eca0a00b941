//! Cardinal arithmetic for dimension counts.
//!
//! A dimension is either an exact finite count or an aleph with a finite
//! index. Addition follows cardinal arithmetic: finite counts add as
//! integers, and an infinite operand absorbs everything up to the larger
//! aleph. Finite counts use checked machine integers; overflow is a hard
//! error rather than a wraparound.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Finite dimension count overflowed the machine integer range.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("finite dimension count overflowed machine range")]
pub struct CardinalOverflow;

/// Dimension of a subspace: an exact finite count or an aleph.
///
/// The derived ordering is the cardinal order: every `Fin` precedes every
/// `Aleph`, and within a variant the payload decides.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Cardinal {
    Fin(u64),
    Aleph(u32),
}

impl Cardinal {
    pub const ZERO: Cardinal = Cardinal::Fin(0);

    pub fn is_zero(self) -> bool {
        self == Cardinal::Fin(0)
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Cardinal::Fin(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Cardinal::Aleph(_))
    }

    /// Cardinal addition. Two finite counts add as integers; any infinite
    /// operand absorbs the other side, leaving the larger of the two.
    pub fn checked_add(self, rhs: Cardinal) -> Result<Cardinal, CardinalOverflow> {
        match (self, rhs) {
            (Cardinal::Fin(a), Cardinal::Fin(b)) => {
                a.checked_add(b).map(Cardinal::Fin).ok_or(CardinalOverflow)
            }
            _ => Ok(self.max(rhs)),
        }
    }

    /// Addition for internal accumulation where operands are known to stay
    /// in range. Panics on finite overflow.
    pub(crate) fn plus(self, rhs: Cardinal) -> Cardinal {
        self.checked_add(rhs)
            .expect("dimension count overflowed machine range")
    }
}

impl fmt::Display for Cardinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cardinal::Fin(n) => write!(f, "{n}"),
            Cardinal::Aleph(i) => write!(f, "aleph_{i}"),
        }
    }
}

/// Terms of a countable sum: either an explicit finite list, or the
/// statement that infinitely many terms are nonzero together with their
/// supremum.
#[derive(Debug, Clone)]
pub enum CountableTerms {
    Finite(Vec<Cardinal>),
    InfinitelyManyNonzero { sup: Cardinal },
}

/// Sum of countably many cardinals.
///
/// An explicit list folds pairwise addition. With infinitely many nonzero
/// terms the sum is `max(Aleph(0), sup)`: countably many nonzero finite
/// terms already pile up to `Aleph(0)`, and any infinite term keeps its
/// own size.
pub fn countable_sum(terms: CountableTerms) -> Result<Cardinal, CardinalOverflow> {
    match terms {
        CountableTerms::Finite(list) => list
            .into_iter()
            .try_fold(Cardinal::ZERO, Cardinal::checked_add),
        CountableTerms::InfinitelyManyNonzero { sup } => Ok(Cardinal::Aleph(0).max(sup)),
    }
}
