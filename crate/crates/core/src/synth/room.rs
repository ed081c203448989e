//! Room geometry and random scene sampling.

use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng;

use crate::rng::seeded;

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const ARRAY_RADIUS: f64 = 0.05;
pub const ARRAY_SIZE: usize = 5;
/// Minimum distance of every source from every wall and from the array.
pub const MARGIN: f64 = 0.5;

/// Shoebox room: extents in metres and reverberation time in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomSpec {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub t60: f64,
}

impl RoomSpec {
    pub fn dims(&self) -> [f64; 3] {
        [self.length, self.width, self.height]
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn surface(&self) -> f64 {
        2.0 * (self.length * self.width + self.length * self.height + self.width * self.height)
    }

    pub fn center(&self) -> [f64; 3] {
        [self.length / 2.0, self.width / 2.0, self.height / 2.0]
    }

    /// Smallest distance from `p` to any wall (negative outside).
    pub fn wall_clearance(&self, p: [f64; 3]) -> f64 {
        self.dims()
            .iter()
            .zip(p)
            .map(|(&d, x)| x.min(d - x))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    Float::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

/// Horizontal circular array of `ARRAY_SIZE` microphones around `center`.
pub fn circular_array(center: [f64; 3]) -> [[f64; 3]; ARRAY_SIZE] {
    core::array::from_fn(|k| {
        let angle = core::f64::consts::TAU * k as f64 / ARRAY_SIZE as f64;
        [
            center[0] + ARRAY_RADIUS * Float::cos(angle),
            center[1] + ARRAY_RADIUS * Float::sin(angle),
            center[2],
        ]
    })
}

/// Everything needed to render one mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub sources: Vec<[f64; 3]>,
    pub array_center: [f64; 3],
    pub mics: [[f64; 3]; ARRAY_SIZE],
    /// Fraction of the mixture where both sources are active.
    pub overlap_ratio: f64,
    /// Level of the first source over the others, in dB.
    pub snr_db: f64,
    pub sample_rate: u32,
    /// Mixture length in seconds.
    pub duration: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn samples(&self) -> usize {
        Float::round(self.duration * self.sample_rate as f64) as usize
    }
}

/// Draws a scene with `sources` sources: room sides in `[5, 10]` m, height
/// in `[2, 5]` m, T60 in `[0.1, 0.5]` s, overlap in `[0.05, 0.95]`, SNR in
/// `[0, 5]` dB. Source positions are redrawn until they clear the walls and
/// the array by [`MARGIN`].
pub fn sample_scene(seed: u64, sources: usize) -> SceneSpec {
    let mut rng = seeded(seed);
    let room = RoomSpec {
        length: rng.gen_range(5.0..=10.0),
        width: rng.gen_range(5.0..=10.0),
        height: rng.gen_range(2.0..=5.0),
        t60: rng.gen_range(0.1..=0.5),
    };
    let center = room.center();
    let mut positions = Vec::with_capacity(sources);
    while positions.len() < sources {
        let p = room.dims().map(|d| rng.gen_range(MARGIN..=d - MARGIN));
        if room.wall_clearance(p) >= MARGIN && distance(p, center) >= MARGIN + ARRAY_RADIUS {
            positions.push(p);
        }
    }
    SceneSpec {
        room,
        sources: positions,
        array_center: center,
        mics: circular_array(center),
        overlap_ratio: rng.gen_range(0.05..=0.95),
        snr_db: rng.gen_range(0.0..=5.0),
        sample_rate: 8000,
        duration: 4.0,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_stay_in_range() {
        for seed in 0..1000 {
            let s = sample_scene(seed, 2);
            let r = s.room;
            assert!((5.0..=10.0).contains(&r.length) && (5.0..=10.0).contains(&r.width));
            assert!((2.0..=5.0).contains(&r.height));
            assert!((0.1..=0.5).contains(&r.t60));
            assert!((0.05..=0.95).contains(&s.overlap_ratio));
            assert!((0.0..=5.0).contains(&s.snr_db));
            for &p in &s.sources {
                assert!(r.wall_clearance(p) >= 0.5);
            }
            for &m in &s.mics {
                assert!(r.wall_clearance(m) > 0.0);
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(sample_scene(42, 2), sample_scene(42, 2));
        assert_ne!(sample_scene(42, 2), sample_scene(43, 2));
    }

    #[test]
    fn array_is_a_circle_around_the_center() {
        let s = sample_scene(7, 2);
        assert_eq!(s.array_center, s.room.center());
        for m in s.mics {
            assert!((distance(m, s.array_center) - ARRAY_RADIUS).abs() < 1e-9);
        }
    }
}
