pub mod model;
pub mod oracle;
pub mod rational;
pub mod scheduler;
pub mod baselines;
pub mod sim;
pub mod metrics;
pub mod cli;
