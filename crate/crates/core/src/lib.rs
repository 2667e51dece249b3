pub mod cli;
pub mod codec;
pub mod bus;
pub mod bag;
pub mod launch;
pub mod perception;
pub mod audio;
pub mod behavior;
pub mod bridge;
pub mod http;
