//! Motion directions and their command sign patterns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Command channels in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Fx,
    Fy,
    Fz,
    M,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Fx, Channel::Fy, Channel::Fz, Channel::M];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Fx => "Fx",
            Channel::Fy => "Fy",
            Channel::Fz => "Fz",
            Channel::M => "M",
        }
    }

    /// Single-axis directions whose trials drive this channel (negative, positive).
    pub fn directions(self) -> (DirectionLabel, DirectionLabel) {
        use DirectionLabel::*;
        match self {
            Channel::Fx => (L, R),
            Channel::Fy => (B, F),
            Channel::Fz => (TD, TU),
            Channel::M => (P, S),
        }
    }
}

/// Diagonal planes used for grouped accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Plane {
    FxFy,
    FxFz,
    FyFz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::FxFy, Plane::FxFz, Plane::FyFz];

    pub fn name(self) -> &'static str {
        match self {
            Plane::FxFy => "Fx-Fy",
            Plane::FxFz => "Fx-Fz",
            Plane::FyFz => "Fy-Fz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DirectionLabel {
    L,
    R,
    F,
    B,
    TU,
    TD,
    S,
    P,
    LF,
    RF,
    LB,
    RB,
    LTU,
    RTU,
    LTD,
    RTD,
    FTU,
    BTU,
    FTD,
    BTD,
    Neutral,
    Mixed,
}

use DirectionLabel::*;

impl DirectionLabel {
    pub const SINGLE: [DirectionLabel; 8] = [L, R, F, B, TU, TD, S, P];
    pub const DIAGONAL: [DirectionLabel; 12] = [LF, RF, LB, RB, LTU, RTU, LTD, RTD, FTU, BTU, FTD, BTD];
    pub const TARGETS: [DirectionLabel; 20] = [
        L, R, F, B, TU, TD, S, P, LF, RF, LB, RB, LTU, RTU, LTD, RTD, FTU, BTU, FTD, BTD,
    ];

    /// Sign of (F_x, F_y, F_z, M) required by the direction; `None` for
    /// Neutral and Mixed.
    pub fn pattern(self) -> Option<[i8; 4]> {
        Some(match self {
            L => [-1, 0, 0, 0],
            R => [1, 0, 0, 0],
            F => [0, 1, 0, 0],
            B => [0, -1, 0, 0],
            TU => [0, 0, 1, 0],
            TD => [0, 0, -1, 0],
            S => [0, 0, 0, 1],
            P => [0, 0, 0, -1],
            LF => [-1, 1, 0, 0],
            RF => [1, 1, 0, 0],
            LB => [-1, -1, 0, 0],
            RB => [1, -1, 0, 0],
            LTU => [-1, 0, 1, 0],
            RTU => [1, 0, 1, 0],
            LTD => [-1, 0, -1, 0],
            RTD => [1, 0, -1, 0],
            FTU => [0, 1, 1, 0],
            BTU => [0, -1, 1, 0],
            FTD => [0, 1, -1, 0],
            BTD => [0, -1, -1, 0],
            Neutral | Mixed => return None,
        })
    }

    /// Label whose pattern equals `signs`; all-zero is Neutral, anything
    /// outside the twenty rows is Mixed.
    pub fn from_pattern(signs: [i8; 4]) -> Self {
        if signs == [0; 4] {
            return Neutral;
        }
        Self::TARGETS
            .into_iter()
            .find(|d| d.pattern() == Some(signs))
            .unwrap_or(Mixed)
    }

    pub fn is_single(self) -> bool {
        Self::SINGLE.contains(&self)
    }

    pub fn is_diagonal(self) -> bool {
        Self::DIAGONAL.contains(&self)
    }

    pub fn is_target(self) -> bool {
        self.pattern().is_some()
    }

    /// Channel driven by a single-axis direction.
    pub fn channel(self) -> Option<Channel> {
        let p = self.pattern()?;
        if !self.is_single() {
            return None;
        }
        Channel::ALL.into_iter().find(|c| p[c.index()] != 0)
    }

    pub fn plane(self) -> Option<Plane> {
        let p = self.pattern()?;
        if !self.is_diagonal() {
            return None;
        }
        Some(match (p[0] != 0, p[1] != 0, p[2] != 0) {
            (true, true, _) => Plane::FxFy,
            (true, false, _) => Plane::FxFz,
            _ => Plane::FyFz,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            L => "L",
            R => "R",
            F => "F",
            B => "B",
            TU => "TU",
            TD => "TD",
            S => "S",
            P => "P",
            LF => "LF",
            RF => "RF",
            LB => "LB",
            RB => "RB",
            LTU => "LTU",
            RTU => "RTU",
            LTD => "LTD",
            RTD => "RTD",
            FTU => "FTU",
            BTU => "BTU",
            FTD => "FTD",
            BTD => "BTD",
            Neutral => "Neutral",
            Mixed => "Mixed",
        }
    }
}

impl fmt::Display for DirectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown direction label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for DirectionLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::TARGETS
            .into_iter()
            .chain([Neutral, Mixed])
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_round_trip() {
        for d in DirectionLabel::TARGETS {
            assert_eq!(DirectionLabel::from_pattern(d.pattern().unwrap()), d);
            assert_eq!(d.as_str().parse::<DirectionLabel>().unwrap(), d);
        }
        assert_eq!(DirectionLabel::from_pattern([0; 4]), Neutral);
        assert_eq!(DirectionLabel::from_pattern([1, 0, 0, 1]), Mixed);
        assert_eq!(DirectionLabel::from_pattern([1, 1, 1, 0]), Mixed);
    }

    #[test]
    fn channels_and_planes() {
        assert_eq!(S.channel(), Some(Channel::M));
        assert_eq!(TD.channel(), Some(Channel::Fz));
        assert_eq!(LF.channel(), None);
        assert_eq!(LF.plane(), Some(Plane::FxFy));
        assert_eq!(RTD.plane(), Some(Plane::FxFz));
        assert_eq!(BTU.plane(), Some(Plane::FyFz));
        for c in Channel::ALL {
            let (n, p) = c.directions();
            assert_eq!(n.channel(), Some(c));
            assert_eq!(p.channel(), Some(c));
            assert_eq!(p.pattern().unwrap()[c.index()], 1);
        }
    }
}
