pub mod benchmarks;
pub mod check;
pub mod datagen;
pub mod error;
pub mod hypothesis;
pub mod nn;
pub mod oracle;
pub mod problems;
pub mod semialgebraic;
pub mod simplex;
pub mod surrogate;
pub mod training;
