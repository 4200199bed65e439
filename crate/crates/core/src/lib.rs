pub mod biasgen;
pub mod cluster;
pub mod counterfactual;
pub mod data;
pub mod linalg;
pub mod manifold;
pub mod pipeline;
pub mod preprocess;
pub mod store;
pub mod synth;
