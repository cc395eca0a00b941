pub mod canonical;
pub mod cardinal;
pub mod measure;
pub mod operator;
pub mod shift;
