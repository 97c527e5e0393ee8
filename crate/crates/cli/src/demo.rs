//! Synthetic stand-in for a flight-delay dataset: thirteen flight, weather and
//! aircraft features with a planted additive signal and two interactions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use reluctant_core::rng;

use crate::dataset::Dataset;

pub const DEMO_RESPONSE: &str = "arr_delay";

pub const DEMO_FEATURES: [&str; 13] = [
    "distance",
    "sched_dep_hour",
    "sched_arr_hour",
    "temp",
    "dewp",
    "humid",
    "pressure",
    "wind_dir",
    "wind_speed",
    "precip",
    "visib",
    "plane_age",
    "seats",
];

/// Planted interactions, as 0-based feature indices.
pub const DEMO_INTERACTIONS: [(usize, usize); 2] = [(1, 9), (8, 10)];

const DEMO_STREAM: u64 = 11;
const SEAT_SIZES: [f64; 8] = [50.0, 76.0, 100.0, 140.0, 150.0, 180.0, 200.0, 250.0];

pub fn demo_dataset(n: usize, seed: u64) -> Dataset {
    let mut g = rng::stream(seed, DEMO_STREAM);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let dist = LogNormal::new(6.6, 0.6).unwrap();
    let mut x = DMatrix::zeros(n, DEMO_FEATURES.len());
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let distance: f64 = dist.sample(&mut g);
        let distance = distance.clamp(80.0, 4000.0).round();
        let dep = g.random_range(5.0..23.0_f64);
        let dep = (dep * 60.0).round() / 60.0;
        let arr = (dep + 0.75 + distance / 480.0) % 24.0;
        let temp = 55.0 + 18.0 * unit.sample(&mut g);
        let spread = 4.0 + 8.0 * g.random::<f64>();
        let dewp = temp - spread;
        let humid = (100.0 - 4.5 * spread + 3.0 * unit.sample(&mut g)).clamp(10.0, 100.0);
        let pressure = 1017.0 + 7.0 * unit.sample(&mut g);
        let wind_dir = 10.0 * g.random_range(0..=36) as f64;
        let wind_speed = g.random_range(0..=28) as f64;
        let precip = if g.random::<f64>() < 0.7 { 0.0 } else { 0.05 * g.random_range(1..=16) as f64 };
        let visib = (0.5 * g.random_range(0..=20) as f64).max(if precip > 0.0 { 0.0 } else { 6.0 });
        let plane_age = g.random_range(0..=30) as f64;
        let seats = SEAT_SIZES[g.random_range(0..SEAT_SIZES.len())];
        let row = [
            distance, dep, arr, temp, dewp, humid, pressure, wind_dir, wind_speed, precip, visib, plane_age, seats,
        ];
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
        let additive = 12.0 * ((dep - 5.0) / 18.0).powi(2)
            + 0.15 * (pressure - 1017.0).powi(2) / 7.0
            - 1.2 * visib
            + 0.4 * wind_speed;
        let inter = 1.5 * dep * precip + 0.08 * wind_speed * visib;
        y[i] = additive + inter + 4.0 * unit.sample(&mut g);
    }
    Dataset {
        names: DEMO_FEATURES.iter().map(|s| s.to_string()).collect(),
        response: DEMO_RESPONSE.to_string(),
        x,
        y,
        dropped: 0,
    }
}
