//! Learning dynamics in Stackelberg games between a decision-maker and a
//! population of strategic agents, where the order of play is set by the
//! players' relative update frequencies.

pub mod config;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod experiment;
pub mod games;
pub mod optimize;
pub mod rng;

pub use dynamics::{Order, Schedule, Trace};
pub use error::{Error, Result};
pub use games::{LinearRegressionGame, LogisticGame, StrategicGame, Vector};
