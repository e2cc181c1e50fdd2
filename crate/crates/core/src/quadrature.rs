//! Globally adaptive Gauss–Kronrod (7/15) integration on finite intervals.
//!
//! The segment with the largest error estimate is bisected until the summed
//! estimate drops below `max(abs_tol, rel_tol * |integral|)` or the
//! subdivision cap is hit, in which case an error is returned.

use crate::{ModelError, Result};

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Integration tolerances and the subdivision cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_subdivisions: 2000,
        }
    }
}

/// Value and error estimate of a converged integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lower: f64,
    upper: f64,
    value: f64,
    error: f64,
}

fn kronrod_segment<F: Fn(f64) -> f64>(f: &F, lower: f64, upper: f64) -> Segment {
    let center = 0.5 * (lower + upper);
    let half = 0.5 * (upper - lower);
    let f_center = f(center);
    let mut kronrod = KRONROD_WEIGHTS[7] * f_center;
    let mut gauss = GAUSS_WEIGHTS[3] * f_center;
    for (j, (&node, &weight)) in KRONROD_NODES[..7].iter().zip(&KRONROD_WEIGHTS[..7]).enumerate() {
        let offset = half * node;
        let pair = f(center - offset) + f(center + offset);
        kronrod += weight * pair;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    Segment {
        lower,
        upper,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

impl Quadrature {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Integrates `f` over the finite interval `[lower, upper]`.
    ///
    /// Reversed bounds negate the result; equal bounds give zero.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, lower: f64, upper: f64) -> Result<QuadratureResult> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "bounds",
                message: format!("quadrature needs finite bounds, got [{lower}, {upper}]"),
            });
        }
        if lower == upper {
            return Ok(QuadratureResult {
                value: 0.0,
                error: 0.0,
                subdivisions: 0,
            });
        }
        if lower > upper {
            let mut flipped = self.integrate(f, upper, lower)?;
            flipped.value = -flipped.value;
            return Ok(flipped);
        }

        let mut segments = vec![kronrod_segment(&f, lower, upper)];
        let mut subdivisions = 0;
        loop {
            let value: f64 = segments.iter().map(|s| s.value).sum();
            let error: f64 = segments.iter().map(|s| s.error).sum();
            let target = self.abs_tol.max(self.rel_tol * value.abs());
            if error <= target {
                return Ok(QuadratureResult {
                    value,
                    error,
                    subdivisions,
                });
            }
            if subdivisions >= self.max_subdivisions {
                return Err(ModelError::QuadratureNotConverged {
                    lower,
                    upper,
                    error,
                    subdivisions,
                });
            }
            let worst = segments
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
                .map(|(i, _)| i)
                .expect("at least one segment");
            let seg = segments.swap_remove(worst);
            let mid = 0.5 * (seg.lower + seg.upper);
            if mid <= seg.lower || mid >= seg.upper {
                // Interval can no longer be split in floating point.
                return Err(ModelError::QuadratureNotConverged {
                    lower,
                    upper,
                    error,
                    subdivisions,
                });
            }
            segments.push(kronrod_segment(&f, seg.lower, mid));
            segments.push(kronrod_segment(&f, mid, seg.upper));
            subdivisions += 1;
        }
    }
}
