use mbdl_sim::GaussianMimoChannel;
use nalgebra::DVector;

use crate::error::DetectionError;
use crate::{Detection, Detector};

pub const MAX_CANDIDATES: u128 = 1 << 20;

fn candidate_count(levels: usize, users: usize) -> u128 {
    (levels as u128).saturating_pow(users as u32)
}

/// Symbol indices of candidate `c` in lexicographic order: the first user is
/// the most significant digit.
fn candidate(c: usize, levels: usize, users: usize) -> Vec<usize> {
    let mut out = vec![0; users];
    let mut rest = c;
    for slot in out.iter_mut().rev() {
        *slot = rest % levels;
        rest /= levels;
    }
    out
}

/// `argmin_s ||x - H s||²` over `S^K`; ties go to the lexicographically
/// smallest symbol-index vector.
pub fn map_exhaustive(x: &DVector<f64>, channel: &GaussianMimoChannel) -> Result<Vec<usize>, DetectionError> {
    Ok(MapDetector::new(channel)?.search(x))
}

/// Exhaustive detector with the `H s` images of all candidates precomputed.
#[derive(Debug, Clone)]
pub struct MapDetector {
    images: Vec<DVector<f64>>,
    levels: usize,
    users: usize,
}

impl MapDetector {
    pub fn new(channel: &GaussianMimoChannel) -> Result<Self, DetectionError> {
        let levels = channel.constellation().len();
        let users = channel.n_users();
        let count = candidate_count(levels, users);
        if count > MAX_CANDIDATES {
            return Err(DetectionError::SearchTooLarge {
                candidates: count,
                limit: MAX_CANDIDATES,
            });
        }
        let images = (0..count as usize)
            .map(|c| channel.h() * channel.symbols(&candidate(c, levels, users)))
            .collect();
        Ok(Self { images, levels, users })
    }

    fn search(&self, x: &DVector<f64>) -> Vec<usize> {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, img) in self.images.iter().enumerate() {
            let d = (x - img).norm_squared();
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        candidate(best, self.levels, self.users)
    }
}

impl Detector for MapDetector {
    fn detect(&self, x: &DVector<f64>) -> Detection {
        Detection {
            labels: self.search(x),
            pmfs: None,
        }
    }

    fn name(&self) -> &str {
        "map"
    }
}
