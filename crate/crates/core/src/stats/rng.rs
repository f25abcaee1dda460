use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::StatsError;

/// What a stream is used for. Part of the seed material so that, for
/// example, a traced run never shares draws with an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Run,
    Evaluate,
    Trace,
    Verify,
    Test,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Run => 1,
            Purpose::Evaluate => 2,
            Purpose::Trace => 3,
            Purpose::Verify => 4,
            Purpose::Test => 5,
        }
    }
}

/// Full seed material of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub base_seed: u64,
    pub purpose: Purpose,
    pub grid: u64,
    pub run: u64,
    pub branch: bool,
}

impl StreamId {
    pub fn new(base_seed: u64, purpose: Purpose) -> Self {
        StreamId {
            base_seed,
            purpose,
            grid: 0,
            run: 0,
            branch: false,
        }
    }

    pub fn with_grid(mut self, grid: u64) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_run(mut self, run: u64) -> Self {
        self.run = run;
        self
    }

    /// The companion stream used for the resampled batch.
    pub fn branched(mut self) -> Self {
        self.branch = true;
        self
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let words = [
            self.base_seed,
            self.purpose.tag(),
            self.grid,
            self.run,
            self.branch as u64,
        ];
        let mut state = 0x6a09_e667_f3bc_c908u64;
        for w in words {
            state ^= w;
            splitmix64(&mut state);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        seed
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic random stream keyed by its [`StreamId`].
#[derive(Debug, Clone)]
pub struct RngStream {
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(id: StreamId) -> Self {
        RngStream {
            id,
            rng: ChaCha8Rng::from_seed(id.seed_bytes()),
        }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Student-t with `dof` degrees of freedom rescaled to unit variance:
/// `Z / sqrt(W / dof) * sqrt((dof - 2) / dof)` with `W` chi-square.
#[derive(Debug, Clone)]
pub struct ScaledStudentT {
    dof: u32,
    chi_square: ChiSquared<f64>,
    scale: f64,
}

impl ScaledStudentT {
    pub fn new(dof: u32) -> Result<Self, StatsError> {
        if dof < 5 {
            return Err(StatsError::DegreesOfFreedom(dof));
        }
        let n = dof as f64;
        Ok(ScaledStudentT {
            dof,
            chi_square: ChiSquared::new(n).expect("positive degrees of freedom"),
            scale: ((n - 2.0) / n).sqrt(),
        })
    }

    pub fn dof(&self) -> u32 {
        self.dof
    }

    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        let z = stream.standard_normal();
        let w = self.chi_square.sample(&mut stream.rng);
        z / (w / self.dof as f64).sqrt() * self.scale
    }

    /// `E[V^4] = 3 (n - 2) / (n - 4)`.
    pub fn fourth_moment(&self) -> f64 {
        let n = self.dof as f64;
        3.0 * (n - 2.0) / (n - 4.0)
    }
}

pub fn sample_scaled_t(stream: &mut RngStream, dof: u32) -> Result<f64, StatsError> {
    Ok(ScaledStudentT::new(dof)?.sample(stream))
}
