//! Scenario runner for `topocat`: TOML scenarios in, CSV tables and a JSON
//! manifest out.

pub mod bundled;
pub mod runner;
pub mod scenario;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
