pub mod plot;
pub mod roundtrip;
pub mod sweep;
pub mod train;
