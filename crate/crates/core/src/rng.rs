//! Seeded random streams.
//!
//! Components that take the same user seed draw from distinct ChaCha streams,
//! so their sequences are independent. Synthetic generation owns stream 0 and
//! one stream per patient index; the named streams sit at the top of the range.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    CohortSplit = u64::MAX,
    Sgd = u64::MAX - 1,
    Importance = u64::MAX - 2,
    Traffic = u64::MAX - 3,
}

pub(crate) fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
