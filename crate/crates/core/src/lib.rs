pub mod bench;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod html;
pub mod ir;
pub mod postprocess;
pub mod sim;
pub mod strategies;
pub mod tables;
pub mod umple;
