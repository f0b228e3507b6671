//! Simulator, image-space guidance oracle, controllers, and evaluation
//! harness for reference-trajectory visual navigation.
//!
//! A recorder traverses a procedurally generated 2.5D world and leaves behind
//! a sparse trajectory of camera poses. A ground agent localizes those poses
//! in its own image as guidance triplets (image point, visibility logit,
//! normalized distance) and follows them with either a reactive yaw
//! controller or a sampling-based planner. The evaluation harness measures
//! success rate and path efficiency across initialization and camera
//! mismatch conditions.

pub mod config;
pub mod control;
pub mod eval;
pub mod geometry;
pub mod guidance;
pub mod mppi;
pub mod report;
pub mod seeding;
pub mod world;
