//! Holonic control of a desk-scale robotic assembly cell.

pub mod cell;
pub mod config;
pub mod fb;
pub mod holon;
pub mod messaging;
pub mod protocol;
pub mod runner;
pub mod scheduling;
pub mod system;
pub mod trace;
pub mod view;
