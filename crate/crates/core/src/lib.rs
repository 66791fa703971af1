pub mod expr;
pub mod linalg;
pub mod model;
pub mod geometry;
pub mod flow;
pub mod certify;
