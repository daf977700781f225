//! Event-camera table-tennis spin estimation.
//!
//! The pipeline runs in three phases over an asynchronous event stream:
//!
//! 1. **Tracking** ([`tracker`]) – an EROS ordinal surface ([`surfaces`]) is
//!    cleaned of isolated pixels, searched with a Hough circle transform and
//!    smoothed by a constant-velocity Kalman filter over `[x, y, ẋ, ẏ, r]`.
//! 2. **Logo extraction** ([`logo`]) – events that fall strictly inside the
//!    tracked disc (minus a rim pad) are re-expressed in ball-centric
//!    coordinates.
//! 3. **Spin estimation** ([`spin`]) – local optical flow from timestamp plane
//!    fitting is lifted onto the sphere and converted to an angular velocity;
//!    the spin magnitude can also be recovered from the periodicity of the
//!    logo event rate.
//!
//! [`filters`] provides the STC / TRAIL denoising filters and [`sim`] a
//! synthetic event camera with exact ground truth for evaluation.

pub mod events;
pub mod filters;
pub mod logo;
pub mod sim;
pub mod spin;
pub mod surfaces;
pub mod tracker;

pub use events::{Event, EventError, EventStream, Format, Polarity, SensorGeometry};
