use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::DemandError;

/// The seven NHS England regions, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    EastOfEngland,
    London,
    Midlands,
    NorthEastAndYorkshire,
    NorthWest,
    SouthEast,
    SouthWest,
}

impl Region {
    pub const ALL: [Region; 7] = [
        Region::EastOfEngland,
        Region::London,
        Region::Midlands,
        Region::NorthEastAndYorkshire,
        Region::NorthWest,
        Region::SouthEast,
        Region::SouthWest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::EastOfEngland => "East of England",
            Region::London => "London",
            Region::Midlands => "Midlands",
            Region::NorthEastAndYorkshire => "North East and Yorkshire",
            Region::NorthWest => "North West",
            Region::SouthEast => "South East",
            Region::SouthWest => "South West",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Baseline PPE storage in kits (three 4.0 × 0.6 × 0.8 m shelves per 20
    /// beds, 1000 kits per 1.35 m³).
    pub fn base_storage_kits(self) -> f64 {
        match self {
            Region::EastOfEngland => 316_590.0,
            Region::London => 1_026_770.0,
            Region::Midlands => 661_550.0,
            Region::NorthEastAndYorkshire => 547_630.0,
            Region::NorthWest => 616_530.0,
            Region::SouthEast => 442_240.0,
            Region::SouthWest => 179_200.0,
        }
    }

    /// Peak COVID-19 occupied beds up to 01 Aug 2020.
    pub fn peak_beds(self) -> u32 {
        match self {
            Region::EastOfEngland => 1_484,
            Region::London => 4_813,
            Region::Midlands => 3_101,
            Region::NorthEastAndYorkshire => 2_567,
            Region::NorthWest => 2_890,
            Region::SouthEast => 2_073,
            Region::SouthWest => 840,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = DemandError;

    /// Case-insensitive; accepts `&` for `and`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized = s.trim().to_ascii_lowercase().replace('&', "and");
        let normalized = normalized.split_whitespace().collect::<Vec<_>>().join(" ");
        Region::ALL
            .into_iter()
            .find(|r| r.name().to_ascii_lowercase() == normalized)
            .ok_or_else(|| DemandError::UnknownRegionName(s.to_string()))
    }
}
