pub mod bench;
pub mod block_store;
pub mod columns;
pub mod data;
pub mod error;
pub mod libsvm;
pub mod metrics;
pub mod model_io;
pub mod objective;
pub mod prefetch;
pub mod sketch;
pub mod split;
pub mod synth;
pub mod trainer;
pub mod tree;
