#![allow(dead_code)]

pub mod budget;
pub mod controller;
pub mod e2e;
pub mod oracles;
pub mod scanner;
pub mod stats;

use dtv_core::oracle::process::tool_available;

pub enum Check {
    Pass,
    Skip(String),
}

pub type CheckResult = Result<Check, String>;

pub fn need(tool: &str) -> Option<Check> {
    (!tool_available(tool)).then(|| Check::Skip(format!("{tool} not found")))
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}
