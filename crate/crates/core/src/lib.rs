//! Stop placement and fruit assignment for a dual-arm stop-and-harvest robot.
//!
//! The vehicle halts at a subset of evenly spaced stops along a row; at each
//! stop the left and right SCARA arms pick their assigned fruits in parallel,
//! returning to a collection pose after every pick. The stop set and the
//! assignment are chosen jointly to minimize total operation time.
//!
//! Modules, bottom up:
//! - [`kinematics`]: SCARA FK/IK and joint motion times
//! - [`costmap`]: per-arm lookup tables of pick times, workspace coverage
//! - [`installation`]: arm base offset and heading search
//! - [`model`]: scheduling instances, plans, plan evaluation, MPS export
//! - [`solver`]: exact branch-and-bound, greedy warm start, brute force
//! - [`baselines`]: camera-window and one-side-at-a-time strategies
//! - [`simbench`]: synthetic rows and the experiment harness

pub mod baselines;
pub mod costmap;
pub mod installation;
pub mod kinematics;
pub mod layout;
pub mod model;
pub mod par;
pub mod simbench;
pub mod solver;

pub use par::Parallelism;
