pub mod agent;
pub mod config;
pub mod dynamics;
pub mod gauss;
pub mod nn;
pub mod policy;
pub mod prior;
pub mod report;
pub mod sim;
pub mod synthetic;
