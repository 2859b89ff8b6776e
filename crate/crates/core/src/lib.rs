//! Trail following from per-frame segmentation masks.
//!
//! The pipeline turns a three-class mask (void / traversable / untraversable)
//! into a steering command:
//!
//! 1. [`mask::downsample`] reduces the mask by block majority.
//! 2. [`midline::extract_midline`] collects per-row trail midpoints and
//!    [`midline::compute_yaw`] turns them into a heading correction.
//! 3. [`pathfit::fit_poly`] fits a smooth lateral path through the midpoints.
//! 4. [`compensator::step`] blends the new path and yaw with history,
//!    distrusting frames that jump away from it.
//! 5. [`planner::make_command`] maps the result to yaw-rate and lateral
//!    velocity commands.
//!
//! [`sim`] closes the loop in a 2D world with a ray-cast camera and injected
//! segmentation failures. [`dataprep`] and [`evalkit`] cover dataset
//! relabeling, augmentation and offline mask scoring.

pub mod compensator;
pub mod config;
pub mod mask;
pub mod midline;
pub mod pathfit;
pub mod planner;
pub mod runs;
pub mod sim;
pub mod dataprep;
pub mod evalkit;
