pub mod weights;
pub mod jets;
pub mod dynkin;
pub mod fbi;
pub mod pde;
pub mod acceptance;
pub mod cli;
