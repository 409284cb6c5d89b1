//! Random quantum channels, Schatten-norm concentration on random subspaces and
//! numerical checks of maximum output p-norm multiplicativity.

pub mod channels;
pub mod dvoretzky;
pub mod ensembles;
pub mod entropy;
pub mod error;
pub mod io;
pub mod linalg;
pub mod optimize;
pub mod stats;
pub mod violation;
