//! Exact probabilities.
//!
//! Every probability and expectation in the crate is a [`Prob`]. On the wire
//! they are always written as `"p/q"` strings, including integers (`"1/1"`).

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub type Prob = BigRational;

pub fn ratio(numer: i64, denom: i64) -> Prob {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn zero() -> Prob {
    Prob::zero()
}

pub fn one() -> Prob {
    Prob::one()
}

/// Renders `p/q` with the denominator always present.
pub fn format(p: &Prob) -> String {
    format!("{}/{}", p.numer(), p.denom())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseRatioError(pub String);

impl fmt::Display for ParseRatioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not a rational: {:?}", self.0)
    }
}

impl std::error::Error for ParseRatioError {}

/// Accepts `"p/q"` or a bare integer `"p"`.
pub fn parse(s: &str) -> Result<Prob, ParseRatioError> {
    let err = || ParseRatioError(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| err())?;
            let d: BigInt = d.trim().parse().map_err(|_| err())?;
            if d.is_zero() {
                return Err(err());
            }
            Ok(BigRational::new(n, d))
        }
        None => {
            let n: BigInt = s.parse().map_err(|_| err())?;
            Ok(BigRational::from_integer(n))
        }
    }
}

/// `#[serde(with = "crate::ratio::serde_prob")]`
pub mod serde_prob {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Prob, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(p))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Prob, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_prob_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ps: &[Prob], s: S) -> Result<S::Ok, S::Error> {
        ps.iter().map(format).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Prob>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse(s).map_err(serde::de::Error::custom))
            .collect()
    }
}
