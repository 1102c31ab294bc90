#![allow(dead_code, clippy::needless_range_loop)]

pub mod checks;
pub mod gradcheck;
pub mod instances;
pub mod oracle;
