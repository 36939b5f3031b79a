//! Launch-effect analytics: from Hacker News posts and GitHub stargazer
//! histories to event-study curves, robust regressions and predictive models.

pub mod align;
pub mod error;
pub mod eventstudy;
pub mod features;
pub mod github;
pub mod hn;
pub mod http;
pub mod inference;
pub mod learn;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod synth;
pub mod time;

pub use error::{Error, Result};
