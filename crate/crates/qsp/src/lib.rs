//! Classical simulation and verification suite for a two-party secure
//! scalar product exchange built on phase-encoded quantum registers, plus
//! its matrix-multiplication extension.
//!
//! The layers, bottom up:
//!
//! * [`modmath`]: arithmetic modulo a power of two, including odd-element
//!   inverses, two-adic valuations, and exact collapse-probability counting.
//! * [`sim`]: a dense state-vector simulator over named registers with the
//!   protocol's gate set and Born-rule measurement.
//! * [`circuits`]: elementary-gate decompositions of every semantic gate,
//!   checked against [`sim`] and costed for scaling studies.
//! * [`info`]: density matrices, entropies, and the exhaustive counting
//!   arguments behind the privacy statements.
//! * [`protocol`]: the six-step exchange itself, with per-register ownership
//!   tracking, pluggable party strategies, and JSON-serializable transcripts.
//! * [`attacks`]: adversary campaigns (forged states, intercept-resend,
//!   measured views, false announcements, probe entanglement) with detection
//!   statistics against analytic rates.
//! * [`fixtures`]: pinned end-to-end runs with every random draw fixed.
//! * [`matmul`]: matrix products assembled from per-cell protocol runs.

pub mod attacks;
pub mod circuits;
pub mod fixtures;
pub mod info;
pub mod matmul;
pub mod modmath;
pub mod protocol;
pub mod sim;
