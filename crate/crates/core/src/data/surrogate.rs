//! Synthetic stand-in for the heartbeat corpus.
//!
//! Beats are sums of Gaussian waves (P, Q, R, S, T) sampled at 125 Hz,
//! starting at the R peak, cut at 1.25 RR intervals, min-max normalized to
//! `[0, 1]` and zero-padded to 187 samples. Each class has its own rhythm
//! and morphology:
//!
//! | class | morphology |
//! |-------|------------|
//! | 0 N   | narrow QRS, upright T, P before the next R |
//! | 1 S   | premature (short RR), flattened or inverted P |
//! | 2 V   | wide bizarre QRS, discordant T, no P |
//! | 3 F   | random blend of N and V, overlapping both |
//! | 4 Q   | pacing spike before a wide QRS, fixed rate |
//!
//! Amplitudes, widths, timing, baseline wander and noise are jittered per
//! beat. The generator is deterministic per seed.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Beat, Dataset, Origin, BEAT_LEN, NUM_CLASSES};
use crate::rng::{seeded, Rng};

/// Per-class training-split sizes of the reference corpus.
pub const TRAIN_COUNTS: [usize; NUM_CLASSES] = [72471, 2223, 5788, 641, 6431];
/// Per-class test-split sizes of the reference corpus.
pub const TEST_COUNTS: [usize; NUM_CLASSES] = [18118, 556, 1448, 162, 1608];

const FS: f64 = 125.0;

#[derive(Clone, Copy)]
struct Wave {
    center: f64,
    amp: f64,
    width: f64,
}

/// Shape parameters, with positions relative to the R peak and the T and P
/// centres as fractions of RR.
#[derive(Clone, Copy)]
struct Morphology {
    rr: f64,
    rr_sd: f64,
    q_amp: f64,
    r_width: f64,
    s_amp: f64,
    s_offset: f64,
    s_width: f64,
    t_frac: f64,
    t_amp: f64,
    t_width: f64,
    p_amp: f64,
    spike: f64,
}

const NORMAL: Morphology = Morphology {
    rr: 105.0,
    rr_sd: 12.0,
    q_amp: -0.12,
    r_width: 1.6,
    s_amp: -0.25,
    s_offset: 3.0,
    s_width: 1.5,
    t_frac: 0.33,
    t_amp: 0.30,
    t_width: 6.0,
    p_amp: 0.12,
    spike: 0.0,
};

const SUPRAVENTRICULAR: Morphology = Morphology {
    rr: 72.0,
    rr_sd: 10.0,
    t_amp: 0.24,
    p_amp: -0.06,
    ..NORMAL
};

const VENTRICULAR: Morphology = Morphology {
    rr: 95.0,
    rr_sd: 12.0,
    q_amp: 0.0,
    r_width: 4.5,
    s_amp: -0.6,
    s_offset: 8.0,
    s_width: 5.0,
    t_frac: 0.38,
    t_amp: -0.45,
    t_width: 9.0,
    p_amp: 0.0,
    spike: 0.0,
};

const PACED: Morphology = Morphology {
    rr: 100.0,
    rr_sd: 4.0,
    q_amp: 0.0,
    r_width: 3.5,
    s_amp: -0.35,
    s_offset: 7.0,
    s_width: 4.0,
    t_frac: 0.40,
    t_amp: -0.2,
    t_width: 8.0,
    p_amp: 0.0,
    spike: 0.8,
};

fn blend(a: &Morphology, b: &Morphology, w: f64) -> Morphology {
    let mix = |x: f64, y: f64| x + w * (y - x);
    Morphology {
        rr: mix(a.rr, b.rr),
        rr_sd: mix(a.rr_sd, b.rr_sd),
        q_amp: mix(a.q_amp, b.q_amp),
        r_width: mix(a.r_width, b.r_width),
        s_amp: mix(a.s_amp, b.s_amp),
        s_offset: mix(a.s_offset, b.s_offset),
        s_width: mix(a.s_width, b.s_width),
        t_frac: mix(a.t_frac, b.t_frac),
        t_amp: mix(a.t_amp, b.t_amp),
        t_width: mix(a.t_width, b.t_width),
        p_amp: mix(a.p_amp, b.p_amp),
        spike: mix(a.spike, b.spike),
    }
}

fn morphology(class: u8, rng: &mut Rng) -> Morphology {
    match class {
        0 => NORMAL,
        1 => SUPRAVENTRICULAR,
        2 => VENTRICULAR,
        3 => blend(&NORMAL, &VENTRICULAR, rng.random_range(0.2..0.8)),
        _ => PACED,
    }
}

fn jitter(rng: &mut Rng, sd: f64) -> f64 {
    Normal::new(1.0, sd).expect("finite sd").sample(rng)
}

fn complex(m: &Morphology, at: f64, rng: &mut Rng, waves: &mut Vec<Wave>) {
    let r_width = m.r_width * jitter(rng, 0.1);
    if m.spike > 0.0 {
        waves.push(Wave {
            center: at - 6.0,
            amp: m.spike * jitter(rng, 0.1),
            width: 0.5,
        });
    }
    if m.q_amp != 0.0 {
        waves.push(Wave {
            center: at - 1.2 * r_width,
            amp: m.q_amp * jitter(rng, 0.15),
            width: 1.2,
        });
    }
    waves.push(Wave {
        center: at,
        amp: jitter(rng, 0.08),
        width: r_width,
    });
    waves.push(Wave {
        center: at + m.s_offset * jitter(rng, 0.1),
        amp: m.s_amp * jitter(rng, 0.15),
        width: m.s_width * jitter(rng, 0.1),
    });
}

/// One beat of `class` drawn from `rng`.
pub fn beat(class: u8, rng: &mut Rng) -> Beat {
    let m = morphology(class, rng);
    let rr = (m.rr + m.rr_sd * Normal::new(0.0, 1.0).expect("unit").sample(rng)).clamp(50.0, 148.0);
    let mut waves = Vec::with_capacity(12);
    let start = rng.random_range(-2.0..1.0);
    complex(&m, -start, rng, &mut waves);
    waves.push(Wave {
        center: -start + m.t_frac * rr * jitter(rng, 0.06),
        amp: m.t_amp * jitter(rng, 0.15),
        width: m.t_width * jitter(rng, 0.1),
    });
    if m.p_amp != 0.0 {
        waves.push(Wave {
            center: -start + rr - 16.0 * jitter(rng, 0.1),
            amp: m.p_amp * jitter(rng, 0.2),
            width: 3.5 * jitter(rng, 0.1),
        });
    }
    complex(&NORMAL, -start + rr, rng, &mut waves);

    let wander_amp = rng.random_range(0.0..0.05);
    let wander_freq = rng.random_range(0.1..0.5);
    let wander_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, rng.random_range(0.005..0.02)).expect("finite sd");

    let len = ((1.25 * rr).round() as usize).clamp(60, BEAT_LEN);
    let mut raw: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64;
            let sum: f64 = waves
                .iter()
                .map(|w| w.amp * (-0.5 * ((t - w.center) / w.width).powi(2)).exp())
                .sum();
            sum + wander_amp * (std::f64::consts::TAU * wander_freq * t / FS + wander_phase).sin() + noise.sample(rng)
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut raw {
        *v = (*v - lo) / (hi - lo);
    }
    raw.resize(BEAT_LEN, 0.0);
    Beat::new(raw, class).expect("surrogate beat is well formed")
}

/// `counts[c]` beats of each class, grouped by class in ascending order.
pub fn generate(counts: [usize; NUM_CLASSES], seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let mut ds = Dataset::new();
    for (class, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            ds.push(beat(class as u8, &mut rng), Origin::Real);
        }
    }
    ds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_range() {
        let ds = generate([5, 4, 3, 2, 1], 11);
        assert_eq!(ds.class_histogram().0, [5, 4, 3, 2, 1]);
        for b in ds.beats() {
            assert!(b.samples().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(b.samples().contains(&1.0));
        }
        assert_eq!(ds, generate([5, 4, 3, 2, 1], 11));
        assert_ne!(ds, generate([5, 4, 3, 2, 1], 12));
    }

    #[test]
    fn presets_have_reference_totals() {
        assert_eq!(TRAIN_COUNTS.iter().sum::<usize>(), 87554);
        assert_eq!(TEST_COUNTS.iter().sum::<usize>(), 21892);
    }

    #[test]
    fn classes_differ_on_average() {
        let mut rng = seeded(3);
        let mean_beat = |class: u8, rng: &mut Rng| {
            let mut acc = vec![0.0; BEAT_LEN];
            for _ in 0..50 {
                for (a, v) in acc.iter_mut().zip(beat(class, rng).samples()) {
                    *a += v / 50.0;
                }
            }
            acc
        };
        let means: Vec<Vec<f64>> = (0..5).map(|c| mean_beat(c, &mut rng)).collect();
        for a in 0..5 {
            for b in a + 1..5 {
                let dist: f64 = means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist > 0.3, "classes {a} and {b} too similar: {dist}");
            }
        }
    }
}
