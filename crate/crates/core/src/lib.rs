pub mod channel;
pub mod dyadic;
pub mod encoding;
pub mod interval;
pub mod law;
pub mod measures;
pub mod policy;
pub mod solver;
pub mod rat;
pub mod textfmt;
