//! Detection of extreme minute-bar price moves (jumps) and synchronous
//! multi-asset moves (cojumps), descriptive systemicity statistics,
//! news-window association, and a parsimonious N-dimensional exponential-
//! kernel Hawkes model of the cojump multiplicity with Monte-Carlo
//! moment-matching calibration.
//!
//! Pipeline: [`market_data`] ingests and normalizes minute panels,
//! [`jump_detect`] flags over-threshold returns against an EWMA bipower
//! volatility, [`cojump_stats`] reduces the flags to multiplicity
//! statistics, [`news_match`] joins scheduled announcements,
//! [`hawkes`] builds/simulates the multiplicity model, and [`calibrate`]
//! fits (eta, beta, gamma) by grid search on conditional moments.
//! [`synth`] provides seeded generators so everything runs without
//! proprietary data.

pub mod calibrate;
pub mod cojump_stats;
pub mod error;
pub mod hawkes;
pub mod io;
pub mod jump_detect;
pub mod market_data;
pub mod news_match;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};
