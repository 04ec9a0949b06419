//! Paired toxic / non-toxic kNN datastores.

mod index;
mod io;
mod store;

pub use index::{flat_search, squared_l2, GroupedIndex, Neighbor};
pub use io::{load_datastore, read_datastore, save_datastore, write_datastore, DATASTORE_MAGIC};
pub use store::{neighbor_distribution, neighbor_logits, Datastore, DatastoreConfig, Provenance, SparseKnn};
