pub mod discretization;
pub mod experiment;
pub mod expm;
pub mod plant;
pub mod prox;
pub mod metrics;
pub mod solver;
pub mod trajectory;
