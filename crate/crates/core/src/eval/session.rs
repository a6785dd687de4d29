use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSession {
    pub session_id: String,
    /// Opaque participant label such as `P3`.
    pub participant: String,
    /// Presentation order.
    pub image_ids: Vec<u64>,
}

impl EvalSession {
    pub fn contains(&self, image_id: u64) -> bool {
        self.image_ids.contains(&image_id)
    }
}

/// Draws `n_participants` disjoint samples of `images_per` images from
/// `pool`, each in its own random order. The pool is deduplicated and sorted
/// first so only `seed` determines the result.
pub fn create_sessions(
    pool: &[u64],
    n_participants: usize,
    images_per: usize,
    seed: u64,
) -> Result<Vec<EvalSession>, EvalError> {
    let mut pool = pool.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let required = n_participants * images_per;
    if n_participants == 0 || images_per == 0 {
        return Err(EvalError::BadArgument(
            "participants and images per session must be positive".into(),
        ));
    }
    if pool.len() < required {
        return Err(EvalError::PoolTooSmall {
            required,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let width = n_participants.to_string().len().max(2);
    Ok(pool[..required]
        .chunks(images_per)
        .enumerate()
        .map(|(i, chunk)| {
            let mut image_ids = chunk.to_vec();
            image_ids.shuffle(&mut rng);
            EvalSession {
                session_id: format!("session-{:0width$}", i + 1),
                participant: format!("P{}", i + 1),
                image_ids,
            }
        })
        .collect())
}
