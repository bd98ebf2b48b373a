pub mod bus;
pub mod city;
pub mod config;
pub mod geo;
pub mod incident;
pub mod parking;
pub mod platform;
pub mod route;
pub mod scenario;
pub mod simulator;
