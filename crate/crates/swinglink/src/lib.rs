// SPDX-License-Identifier: Apache-2.0

//! Scenario files, trace and CSV formats, parallel sweeps and the
//! command-line front end for `swinglink-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod selftest;
pub mod sweep;

pub use swinglink_core as core;
