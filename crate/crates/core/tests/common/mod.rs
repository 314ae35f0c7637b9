#![allow(dead_code)]

pub mod gen;
pub mod harness;
pub mod oracle;
