//! Analyte codes and mixture labels.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One of the six analyte channels, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnalyteCode {
    B,
    T,
    E,
    X,
    N,
    I,
}

impl AnalyteCode {
    pub const ALL: [AnalyteCode; 6] = [
        AnalyteCode::B,
        AnalyteCode::T,
        AnalyteCode::E,
        AnalyteCode::X,
        AnalyteCode::N,
        AnalyteCode::I,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        ['B', 'T', 'E', 'X', 'N', 'I'][self.index()]
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.letter() == c)
    }

    /// Concentration range of the reference design, in µg/L.
    pub fn concentration_range(self) -> (f64, f64) {
        match self {
            AnalyteCode::B => (44.0, 120.0),
            AnalyteCode::T => (44.0, 110.0),
            AnalyteCode::E => (44.0, 120.0),
            AnalyteCode::X => (44.0, 110.0),
            AnalyteCode::N => (44.0, 160.0),
            AnalyteCode::I => (62.0, 113.0),
        }
    }
}

/// Set of analytes present in a sample, stored as a bitmask over
/// [`AnalyteCode::ALL`]. The canonical text form concatenates letters in code
/// order (`"BTX"`); the empty set is `"NONE"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MixtureLabel(u8);

impl MixtureLabel {
    pub const NONE: MixtureLabel = MixtureLabel(0);

    pub fn from_codes<I: IntoIterator<Item = AnalyteCode>>(codes: I) -> Self {
        MixtureLabel(codes.into_iter().fold(0u8, |m, c| m | (1 << c.index())))
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits >= 1 << 6 {
            return Err(Error::param("label bits", format!("{bits} exceeds six analytes")));
        }
        Ok(MixtureLabel(bits))
    }

    /// Label from per-analyte concentrations: every strictly positive entry is present.
    pub fn from_concentrations(conc: &[f64; 6]) -> Self {
        Self::from_codes(
            AnalyteCode::ALL
                .iter()
                .copied()
                .filter(|c| conc[c.index()] > 0.0),
        )
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, code: AnalyteCode) -> bool {
        self.0 & (1 << code.index()) != 0
    }

    pub fn codes(self) -> impl Iterator<Item = AnalyteCode> {
        AnalyteCode::ALL
            .into_iter()
            .filter(move |c| self.contains(*c))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn canonical(self) -> String {
        if self.is_empty() {
            "NONE".to_string()
        } else {
            self.codes().map(AnalyteCode::letter).collect()
        }
    }
}

impl fmt::Display for MixtureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for MixtureLabel {
    type Err = Error;

    /// Accepts the canonical form only: letters in code order without repeats.
    fn from_str(s: &str) -> Result<Self> {
        if s == "NONE" {
            return Ok(MixtureLabel::NONE);
        }
        let bad = || Error::param("label", format!("`{s}` is not a canonical mixture label"));
        if s.is_empty() {
            return Err(bad());
        }
        let mut bits = 0u8;
        let mut last: Option<AnalyteCode> = None;
        for ch in s.chars() {
            let code = AnalyteCode::from_letter(ch).ok_or_else(bad)?;
            if last.is_some_and(|l| l >= code) {
                return Err(bad());
            }
            bits |= 1 << code.index();
            last = Some(code);
        }
        Ok(MixtureLabel(bits))
    }
}

// Sorted by canonical text so class lists read naturally in reports.
impl Ord for MixtureLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical().cmp(&other.canonical())
    }
}

impl PartialOrd for MixtureLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for MixtureLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for MixtureLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn six_codes_in_fixed_order() {
        let letters: String = AnalyteCode::ALL.iter().map(|c| c.letter()).collect();
        assert_eq!(letters, "BTEXNI");
        assert!(AnalyteCode::B < AnalyteCode::T && AnalyteCode::N < AnalyteCode::I);
    }

    #[test]
    fn concentration_labels() {
        let l = MixtureLabel::from_concentrations(&[120.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(l.canonical(), "B");
        let l = MixtureLabel::from_concentrations(&[0.0; 6]);
        assert_eq!(l.canonical(), "NONE");
        let l = MixtureLabel::from_concentrations(&[0.0, 50.0, 0.0, 70.0, 0.0, 80.0]);
        assert_eq!(l.canonical(), "TXI");
    }

    #[test]
    fn rejects_non_canonical() {
        for s in ["", "XB", "BB", "Q", "none", "B T"] {
            assert!(s.parse::<MixtureLabel>().is_err(), "{s}");
        }
    }

    proptest! {
        #[test]
        fn canonical_round_trip(bits in 0u8..64) {
            let l = MixtureLabel::from_bits(bits).unwrap();
            let s = l.canonical();
            let back: MixtureLabel = s.parse().unwrap();
            prop_assert_eq!(back, l);
            prop_assert_eq!(back.canonical(), s);
        }

        #[test]
        fn label_independent_of_code_order(bits in 0u8..64, rot in 0usize..6) {
            let l = MixtureLabel::from_bits(bits).unwrap();
            let mut codes: Vec<_> = l.codes().collect();
            let r = rot.min(codes.len());
            codes.rotate_left(r);
            codes.reverse();
            prop_assert_eq!(MixtureLabel::from_codes(codes), l);
        }
    }
}
