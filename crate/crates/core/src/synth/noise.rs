//! Seeded 3-D value noise.

fn hash(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed ^ 0x51_7CC1_B727_220A;
    for v in [x, y, z] {
        h ^= (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 29)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 32;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Single octave in `[0, 1]`, lattice spacing 1.
pub fn value_noise(seed: u64, p: [f64; 3]) -> f64 {
    let cell = p.map(f64::floor);
    let f = [p[0] - cell[0], p[1] - cell[1], p[2] - cell[2]].map(smooth);
    let c = cell.map(|v| v as i64);
    let mut acc = 0.0;
    for corner in 0..8 {
        let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
        let w = [(dx, f[0]), (dy, f[1]), (dz, f[2])]
            .iter()
            .map(|&(d, t)| if d == 1 { t } else { 1.0 - t })
            .product::<f64>();
        acc += w * hash(seed, c[0] + dx, c[1] + dy, c[2] + dz);
    }
    acc
}

/// Octave sum with halving amplitude and doubling frequency, in `[0, 1]`.
pub fn fractal_noise(seed: u64, p: [f64; 3], scale: f64, octaves: u32) -> f64 {
    let (mut sum, mut norm, mut amp, mut freq) = (0.0, 0.0, 1.0, 1.0 / scale);
    for o in 0..octaves.max(1) {
        sum += amp * value_noise(seed.wrapping_add(o as u64), p.map(|v| v * freq));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_and_determinism() {
        for k in 0..500 {
            let p = [k as f64 * 0.173, -(k as f64) * 0.31, (k % 7) as f64 * 1.7];
            let v = fractal_noise(9, p, 0.5, 3);
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(v, fractal_noise(9, p, 0.5, 3));
        }
        assert_ne!(value_noise(1, [0.5; 3]), value_noise(2, [0.5; 3]));
    }

    #[test]
    fn continuous_across_cells() {
        let a = value_noise(3, [0.999_999, 0.2, 0.3]);
        let b = value_noise(3, [1.000_001, 0.2, 0.3]);
        assert!((a - b).abs() < 1e-5);
    }
}
