pub mod evaluate;
pub mod features;
pub mod fit;
pub mod report;
pub mod simulate;
