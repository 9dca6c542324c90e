//! Pinned end-to-end example runs with every random draw fixed.
//!
//! Each fixture records a complete four-round exchange: inputs, derived
//! factors, masks, keys, announced answers, and per-round results. A few
//! recorded values in the source tables contradict the defining relations;
//! those fields are listed as errata and the fixture stores the value the
//! relations actually produce.

use crate::protocol::{PinnedDraws, ProtocolParams, RoundDraws};

/// One round of a pinned run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureRound {
    pub x: u64,
    pub y: u64,
    pub v: u64,
    pub p: u64,
    pub q: u64,
    pub s: u64,
    pub c: [u64; 4],
    pub k: [u64; 3],
    /// `[r1, r2, r3, r4]`: the welded coefficients and the announced answers.
    pub r: [u64; 4],
    pub m_value: u64,
}

/// A recorded value that contradicts the defining relations. `derived` is
/// the self-consistent replacement the fixture uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Erratum {
    pub round: usize,
    pub field: &'static str,
    pub printed: u64,
    pub derived: u64,
}

/// A full pinned run: global sizes, the shared offset `v`, the expected
/// output `u`, the per-round data, and any corrected fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub name: &'static str,
    pub m: u32,
    pub v: u64,
    pub u: u64,
    pub rounds: Vec<FixtureRound>,
    pub errata: Vec<Erratum>,
}

impl Fixture {
    pub fn params(&self) -> ProtocolParams {
        ProtocolParams::new(self.m, self.rounds.len()).expect("fixture sizes are valid")
    }

    pub fn x(&self) -> Vec<u64> {
        self.rounds.iter().map(|r| r.x).collect()
    }

    pub fn y(&self) -> Vec<u64> {
        self.rounds.iter().map(|r| r.y).collect()
    }

    pub fn expected_m(&self) -> Vec<u64> {
        self.rounds.iter().map(|r| r.m_value).collect()
    }

    /// The fixture's randomness, packaged for a pinned protocol run.
    pub fn draws(&self) -> PinnedDraws {
        PinnedDraws {
            v_parts: self.rounds.iter().map(|r| r.v).collect(),
            rounds: self.rounds.iter().map(|r| RoundDraws { c: r.c, k: r.k }).collect(),
        }
    }
}

/// Four-round exchange with `x = (1,0,1,2)`, `y = (0,3,1,3)`, `v = 1`;
/// the result is `u = 0`. The recorded fourth share of `v` breaks both the
/// share-sum constraint and its own phase value, so it is corrected.
pub fn table3() -> Fixture {
    Fixture {
        name: "table3",
        m: 2,
        v: 1,
        u: 0,
        rounds: vec![
            FixtureRound {
                x: 1,
                y: 0,
                v: 0,
                p: 3,
                q: 1,
                s: 15,
                c: [2, 15, 9, 12],
                k: [5, 9, 5],
                r: [13, 13, 5, 1],
                m_value: 2,
            },
            FixtureRound {
                x: 0,
                y: 3,
                v: 11,
                p: 1,
                q: 7,
                s: 5,
                c: [10, 6, 11, 3],
                k: [15, 5, 7],
                r: [1, 9, 1, 1],
                m_value: 12,
            },
            FixtureRound {
                x: 1,
                y: 1,
                v: 15,
                p: 3,
                q: 3,
                s: 9,
                c: [10, 11, 3, 2],
                k: [1, 1, 1],
                r: [7, 7, 7, 9],
                m_value: 2,
            },
            FixtureRound {
                x: 2,
                y: 3,
                v: 3,
                p: 5,
                q: 7,
                s: 5,
                c: [4, 9, 1, 6],
                k: [7, 9, 15],
                r: [3, 7, 11, 7],
                m_value: 8,
            },
        ],
        errata: vec![Erratum { round: 4, field: "v", printed: 13, derived: 3 }],
    }
}

/// Four-round exchange with `x = (2,3,1,0)`, `y = (3,1,2,1)`, `v = 3`;
/// the result is `u = 2`. The recorded first-round answers do not invert the
/// welded coefficient, so both are corrected.
pub fn table4() -> Fixture {
    Fixture {
        name: "table4",
        m: 2,
        v: 3,
        u: 2,
        rounds: vec![
            FixtureRound {
                x: 2,
                y: 3,
                v: 14,
                p: 5,
                q: 7,
                s: 1,
                c: [7, 3, 5, 1],
                k: [1, 7, 5],
                r: [13, 1, 5, 2],
                m_value: 4,
            },
            FixtureRound {
                x: 3,
                y: 1,
                v: 10,
                p: 7,
                q: 3,
                s: 5,
                c: [1, 14, 5, 11],
                k: [5, 11, 7],
                r: [5, 12, 13, 5],
                m_value: 10,
            },
            FixtureRound {
                x: 1,
                y: 2,
                v: 15,
                p: 3,
                q: 5,
                s: 7,
                c: [14, 12, 1, 9],
                k: [1, 3, 3],
                r: [13, 13, 5, 13],
                m_value: 6,
            },
            FixtureRound {
                x: 0,
                y: 1,
                v: 0,
                p: 1,
                q: 3,
                s: 13,
                c: [4, 1, 1, 1],
                k: [13, 3, 15],
                r: [15, 6, 15, 10],
                m_value: 0,
            },
        ],
        errata: vec![
            Erratum { round: 1, field: "r3", printed: 2, derived: 5 },
            Erratum { round: 1, field: "r4", printed: 4, derived: 2 },
        ],
    }
}

/// Look up a fixture by its id.
pub fn by_name(name: &str) -> Option<Fixture> {
    match name {
        "table3" => Some(table3()),
        "table4" => Some(table4()),
        _ => None,
    }
}
