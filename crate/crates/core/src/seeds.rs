//! Fan-out of one master seed into independent sub-seeds.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed stream ids; changing one re-seeds only that part of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Dataset = 1,
    Vae = 2,
    Encoder = 3,
    Babble = 4,
    Latent = 5,
    Battery = 6,
}

pub fn derive(master: u64, stream: Stream) -> u64 {
    derive_raw(master, stream as u64)
}

pub fn derive_raw(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubSeeds {
    pub dataset: u64,
    pub vae: u64,
    pub encoder: u64,
    pub babble: u64,
    pub latent: u64,
    pub battery: u64,
}

impl SubSeeds {
    pub fn from_master(master: u64) -> Self {
        SubSeeds {
            dataset: derive(master, Stream::Dataset),
            vae: derive(master, Stream::Vae),
            encoder: derive(master, Stream::Encoder),
            babble: derive(master, Stream::Babble),
            latent: derive(master, Stream::Latent),
            battery: derive(master, Stream::Battery),
        }
    }
}
