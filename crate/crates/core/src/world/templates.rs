//! Parametric acceleration templates for the six motion classes.
//!
//! Time runs over the 2 s window. Onset time, amplitude and walking
//! frequency are jittered per window; Gaussian noise is added per sample.
//! Left-hand windows are the mirror image of the right-hand template on
//! the lateral axis (channel 0).

use alloc::vec;

use core::f64::consts::PI;

use rand::Rng;

use crate::math;
use crate::motion::{AccelWindow, Hand, MotionClass, CHANNELS, SAMPLE_RATE_HZ, SENSOR_RANGE_G, WINDOW_LEN};
use crate::rng::normal;

/// Channel that left-hand windows mirror.
pub const MIRROR_CHANNEL: usize = 0;

fn bump(t: f64, centre: f64, width: f64) -> f64 {
    let z = (t - centre) / width;
    math::exp(-z * z)
}

/// Noise-free right-hand template value at time `t` (seconds).
fn template(class: MotionClass, t: f64, centre: f64, amp: f64, freq: f64, phase: f64) -> [f64; 3] {
    match class {
        MotionClass::Stationary => [0.0, 0.0, 0.0],
        MotionClass::Walking => {
            let w = 2.0 * PI * freq * t + phase;
            [0.25 * math::sin(w), 0.35 * math::sin(0.5 * w), 0.7 * amp * math::sin(w)]
        }
        MotionClass::Lift => [
            0.35 * amp * bump(t, centre, 0.3),
            0.0,
            0.9 * amp * bump(t, centre, 0.25),
        ],
        MotionClass::PutDown => [
            0.35 * amp * bump(t, centre, 0.3),
            0.0,
            -0.9 * amp * bump(t, centre, 0.25),
        ],
        MotionClass::Pull => [
            1.0 * amp * bump(t, centre, 0.15),
            -0.5 * amp * bump(t, centre, 0.2),
            0.0,
        ],
        MotionClass::PickUp => [
            -0.8 * amp * bump(t, centre + 0.2, 0.15),
            0.0,
            0.6 * amp * bump(t, centre - 0.25, 0.2),
        ],
    }
}

/// Renders one noisy window of `class` as seen on `hand`.
pub fn synth_window<R: Rng + ?Sized>(class: MotionClass, hand: Hand, noise_sd: f64, rng: &mut R) -> AccelWindow {
    let centre = rng.gen_range(0.7..1.3);
    let amp = rng.gen_range(0.8..1.2);
    let freq = rng.gen_range(1.6..2.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let mut samples = vec![0.0; CHANNELS * WINDOW_LEN];
    for s in 0..WINDOW_LEN {
        let t = s as f64 / SAMPLE_RATE_HZ as f64;
        let v = template(class, t, centre, amp, freq, phase);
        for c in 0..CHANNELS {
            let mut x = v[c];
            if noise_sd > 0.0 {
                x += normal(rng, 0.0, noise_sd);
            }
            if hand == Hand::Left && c == MIRROR_CHANNEL {
                x = -x;
            }
            samples[c * WINDOW_LEN + s] = x.clamp(-SENSOR_RANGE_G, SENSOR_RANGE_G);
        }
    }
    AccelWindow::new(samples, hand).expect("templates stay within sensor range")
}

/// Balanced labelled set: `per_class` windows of every motion class.
pub fn labelled_windows<R: Rng + ?Sized>(
    per_class: usize,
    hand: Hand,
    noise_sd: f64,
    rng: &mut R,
) -> alloc::vec::Vec<(AccelWindow, MotionClass)> {
    let mut out = alloc::vec::Vec::with_capacity(per_class * MotionClass::COUNT);
    for _ in 0..per_class {
        for class in MotionClass::ALL {
            out.push((synth_window(class, hand, noise_sd, rng), class));
        }
    }
    out
}
