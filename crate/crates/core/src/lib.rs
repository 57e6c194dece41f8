pub mod checkpoint;
pub mod scanner;
pub mod scope;
pub mod render;
pub mod oracle;
pub mod feedback;
pub mod backend;
pub mod controller;
pub mod prompt;
pub mod strategy;
pub mod par;
pub mod stats;
pub mod selftest;
pub mod harness;
