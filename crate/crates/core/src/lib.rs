pub mod linalg;
pub mod network;
pub mod training;
pub mod decomposition;
pub mod poly;
pub mod sysid;
pub mod control;
pub mod data_io;
pub mod pipelines;
pub mod sdp;
