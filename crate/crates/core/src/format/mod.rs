//! On-disk dataset format: the `.idx` index, the `.bin` payload, and their sidecars.

pub mod index;
pub mod lock;
pub mod paths;
pub mod store;
pub mod validate;
pub mod version;
pub mod writer;

pub use index::{DatasetIndex, MAGIC};
pub use lock::WriterLock;
pub use paths::DatasetPaths;
pub use store::TokenStore;
pub use validate::{validate_dataset, write_report, Violation};
pub use writer::{build_dataset, DatasetBuilder};
