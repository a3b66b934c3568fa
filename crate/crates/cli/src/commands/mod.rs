pub mod analyze;
pub mod compare;
pub mod data;
pub mod export;
pub mod fit;
pub mod mix;
pub mod serve;
pub mod simulate;
pub mod train;
