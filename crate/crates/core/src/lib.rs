//! IVF-RaBitQ approximate nearest-neighbor search.
//!
//! Vectors are partitioned with k-means, and each vector's residual to its
//! centroid is rotated and quantized to a `B`-bit RaBitQ code. Search probes
//! the nearest clusters of each query, filters with the 1-bit part of the
//! code and refines survivors with the remaining bits.
//!
//! ```no_run
//! use ivf_rabitq::{BuildParams, IvfRabitqIndex, SearchParams, VectorMatrix, search_batch};
//!
//! # fn main() -> ivf_rabitq::Result<()> {
//! let base = VectorMatrix::new(4, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0])?;
//! let (index, _) = IvfRabitqIndex::build(&base, &BuildParams::default())?;
//! let hits = search_batch(&base, &index, &SearchParams::new(2, 1))?;
//! println!("{:?}", hits[0].ids);
//! # Ok(())
//! # }
//! ```

pub mod cli;
pub mod clustering;
pub mod codec;
mod error;
pub mod index;
pub mod linalg;
pub mod search;

pub use clustering::{assign, train_kmeans, Centroids};
pub use codec::QuantizationParams;
pub use error::{Error, Result};
pub use index::{build_index, BuildParams, BuildReport, IvfRabitqIndex};
pub use linalg::{exact_knn, Neighbors, Rotation, VectorMatrix};
pub use search::{search_batch, IpMode, SearchParams};
