// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear warmup followed by cosine decay to zero.

use std::f64::consts::PI;

/// Number of warmup steps: `round(warmup_fraction * total)`.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    (warmup_fraction * total_steps as f64).round() as usize
}

/// Learning rate at `step` of `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, lr_peak: f64, warmup_fraction: f64) -> f64 {
    let warm = warmup_steps(total_steps, warmup_fraction);
    if step < warm {
        return lr_peak * step as f64 / warm as f64;
    }
    let span = total_steps.saturating_sub(warm).max(1);
    let progress = ((step - warm) as f64 / span as f64).min(1.0);
    lr_peak * 0.5 * (1.0 + (PI * progress).cos())
}

/// The `{1, 3} x 10^k` ladder between `lo` and `hi` inclusive.
pub fn lr_ladder(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let k0 = lo.log10().floor() as i32 - 1;
    let k1 = hi.log10().ceil() as i32 + 1;
    for k in k0..=k1 {
        for m in [1.0, 3.0] {
            let lr = m * 10f64.powi(k);
            if lr >= lo * (1.0 - 1e-9) && lr <= hi * (1.0 + 1e-9) {
                out.push(lr);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let total = 1000;
        assert_eq!(lr_at(0, total, 1e-3, 0.1), 0.0);
        assert_eq!(lr_at(100, total, 1e-3, 0.1), 1e-3);
        assert!(lr_at(total - 1, total, 1e-3, 0.1) < 1e-3 * 1e-4);
        assert!((lr_at(50, total, 1e-3, 0.1) - 5e-4).abs() < 1e-15);
        assert!((lr_at(550, total, 1e-3, 0.1) - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn ladder_includes_endpoints() {
        let l = lr_ladder(3e-5, 3e-2);
        assert_eq!(l.len(), 7);
        assert!((l[0] - 3e-5).abs() < 1e-18);
        assert!((l[6] - 3e-2).abs() < 1e-15);
        assert_eq!(lr_ladder(3e-5, 3e-3).len(), 5);
    }
}
