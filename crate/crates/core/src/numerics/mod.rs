//! Dense containers, seeded randomness and the L2IM file container.

mod container;
mod matrix;
mod rng;

pub use container::{
    decode, encode, find_blob, load_blobs, load_container, save_blobs, save_container,
    TensorBlob,
};
pub use matrix::Matrix;
pub(crate) use matrix::gemm;
pub use rng::{derive_seed, SeededRng, RNG_ALGORITHM};

use sha2::{Digest, Sha256};

/// SHA-256 over the little-endian bytes of every value, in order.
pub fn hash_values<'a>(chunks: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut h = Sha256::new();
    for chunk in chunks {
        for v in chunk {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
