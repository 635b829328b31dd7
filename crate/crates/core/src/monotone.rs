//! Image computation for piecewise coordinatewise-monotonic functions.
//!
//! A function is described by domain cells (cartesian products of intervals)
//! together with a per-coordinate monotonicity direction on each cell. The
//! image of a box inside a cell is then spanned by just two corner
//! evaluations, one per direction assignment, so the bound costs `n` steps
//! instead of `2^n` corner evaluations.

use std::sync::Arc;

use crate::interval::KInterval;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Clone, Debug)]
pub struct Cell {
    /// Domain restriction, one closed interval per coordinate.
    pub domain: Vec<(f64, f64)>,
    /// Monotonicity of the function in each coordinate over this cell.
    pub directions: Vec<Direction>,
}

#[derive(Clone)]
pub struct PiecewiseMonotonicSpec {
    pub arity: usize,
    pub cells: Vec<Cell>,
    pub eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl PiecewiseMonotonicSpec {
    pub fn new(
        arity: usize,
        cells: Vec<Cell>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        debug_assert!(cells
            .iter()
            .all(|c| c.domain.len() == arity && c.directions.len() == arity));
        PiecewiseMonotonicSpec { arity, cells, eval: Arc::new(eval) }
    }
}

/// Image of a product of k-intervals under `spec`, as a k-interval superset.
///
/// Per cell, every combination of input pieces restricted to the cell yields
/// one box; the box image is the interval between the two monotone corners.
/// All boxes are unioned, which merges down to at most `k` pieces.
pub fn image(spec: &PiecewiseMonotonicSpec, inputs: &[KInterval]) -> KInterval {
    assert_eq!(inputs.len(), spec.arity, "arity mismatch");
    let k = inputs.iter().map(KInterval::k).max().unwrap_or(crate::interval::DEFAULT_K);
    if inputs.iter().any(KInterval::is_empty) {
        return KInterval::empty(k);
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    for cell in &spec.cells {
        // Restrict each input to the cell along its coordinate.
        let restricted: Vec<Vec<(f64, f64)>> = (0..spec.arity)
            .map(|i| {
                let (lo, hi) = cell.domain[i];
                inputs[i]
                    .intersect(&KInterval::closed(lo, hi, inputs[i].k()))
                    .pieces()
                    .to_vec()
            })
            .collect();
        if restricted.iter().any(Vec::is_empty) {
            continue;
        }
        // Odometer over piece combinations.
        let mut idx = vec![0usize; spec.arity];
        loop {
            let mut lo_pt = Vec::with_capacity(spec.arity);
            let mut hi_pt = Vec::with_capacity(spec.arity);
            for i in 0..spec.arity {
                let (plo, phi) = restricted[i][idx[i]];
                match cell.directions[i] {
                    Direction::Increasing => {
                        lo_pt.push(plo);
                        hi_pt.push(phi);
                    }
                    Direction::Decreasing => {
                        lo_pt.push(phi);
                        hi_pt.push(plo);
                    }
                }
            }
            let lo = (spec.eval)(&lo_pt);
            let hi = (spec.eval)(&hi_pt);
            if lo.is_nan() || hi.is_nan() {
                // Extended-arithmetic corner the evaluator could not resolve;
                // stay sound.
                out.push((f64::NEG_INFINITY, f64::INFINITY));
            } else {
                out.push((lo.min(hi), lo.max(hi)));
            }
            // Advance odometer.
            let mut i = 0;
            loop {
                if i == spec.arity {
                    break;
                }
                idx[i] += 1;
                if idx[i] < restricted[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == spec.arity {
                break;
            }
        }
    }
    KInterval::from_pieces(out, k)
}

const FULL: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);
const NEG: (f64, f64) = (f64::NEG_INFINITY, 0.0);
const POS: (f64, f64) = (0.0, f64::INFINITY);

fn mul_ext(a: f64, b: f64) -> f64 {
    // 0 * inf is 0 for bound purposes: within a sign cell the zero endpoint
    // pins the product at zero.
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

fn div_ext(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a / b
    }
}

use Direction::{Decreasing as D, Increasing as I};

pub fn add_spec() -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        2,
        vec![Cell { domain: vec![FULL, FULL], directions: vec![I, I] }],
        |x| x[0] + x[1],
    )
}

pub fn sub_spec() -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        2,
        vec![Cell { domain: vec![FULL, FULL], directions: vec![I, D] }],
        |x| x[0] - x[1],
    )
}

/// Four sign cells.
pub fn mul_spec() -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        2,
        vec![
            Cell { domain: vec![POS, POS], directions: vec![I, I] },
            Cell { domain: vec![NEG, POS], directions: vec![I, D] },
            Cell { domain: vec![POS, NEG], directions: vec![D, I] },
            Cell { domain: vec![NEG, NEG], directions: vec![D, D] },
        ],
        |x| mul_ext(x[0], x[1]),
    )
}

/// Four cells excluding a zero divisor; a divisor piece touching zero yields
/// infinite endpoints, a divisor straddling zero yields the unbounded union.
pub fn div_spec() -> PiecewiseMonotonicSpec {
    // The divisor cells stop at the smallest subnormal instead of 0.0, so a
    // corner evaluation at the cell boundary overflows to the correctly
    // signed infinity instead of dividing by a signless zero.
    let tiny = f64::from_bits(1);
    let div_pos = (tiny, f64::INFINITY);
    let div_neg = (f64::NEG_INFINITY, -tiny);
    PiecewiseMonotonicSpec::new(
        2,
        vec![
            Cell { domain: vec![POS, div_pos], directions: vec![I, D] },
            Cell { domain: vec![NEG, div_pos], directions: vec![I, I] },
            Cell { domain: vec![POS, div_neg], directions: vec![D, D] },
            Cell { domain: vec![NEG, div_neg], directions: vec![D, I] },
        ],
        |x| div_ext(x[0], x[1]),
    )
}

pub fn neg_spec() -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        1,
        vec![Cell { domain: vec![FULL], directions: vec![D] }],
        |x| -x[0],
    )
}

pub fn abs_spec() -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        1,
        vec![
            Cell { domain: vec![NEG], directions: vec![D] },
            Cell { domain: vec![POS], directions: vec![I] },
        ],
        |x| x[0].abs(),
    )
}

pub fn exp_spec() -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        1,
        vec![Cell { domain: vec![FULL], directions: vec![I] }],
        |x| x[0].exp(),
    )
}

pub fn ln_spec() -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        1,
        vec![Cell { domain: vec![POS], directions: vec![I] }],
        |x| x[0].ln(),
    )
}

pub fn sqrt_spec() -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        1,
        vec![Cell { domain: vec![POS], directions: vec![I] }],
        |x| x[0].sqrt(),
    )
}

pub fn least_spec(arity: usize) -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        arity,
        vec![Cell { domain: vec![FULL; arity], directions: vec![I; arity] }],
        |x| x.iter().copied().fold(f64::INFINITY, f64::min),
    )
}

pub fn greatest_spec(arity: usize) -> PiecewiseMonotonicSpec {
    PiecewiseMonotonicSpec::new(
        arity,
        vec![Cell { domain: vec![FULL; arity], directions: vec![I; arity] }],
        |x| x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Exact image of sine over one k-interval, piece by piece: monotone between
/// critical points, clamped to [-1, 1] when a piece spans a full period.
pub fn sin_image(input: &KInterval) -> KInterval {
    trig_image(input, f64::sin, std::f64::consts::FRAC_PI_2)
}

/// Same for cosine (maxima at 2k*pi, i.e. phase 0).
pub fn cos_image(input: &KInterval) -> KInterval {
    trig_image(input, f64::cos, 0.0)
}

fn trig_image(input: &KInterval, f: fn(f64) -> f64, max_phase: f64) -> KInterval {
    let tau = std::f64::consts::TAU;
    let pieces = input.pieces().iter().map(|&(lo, hi)| {
        if !lo.is_finite() || !hi.is_finite() || hi - lo >= tau {
            return (-1.0, 1.0);
        }
        let mut out_lo = f(lo).min(f(hi));
        let mut out_hi = f(lo).max(f(hi));
        // Does [lo, hi] contain a maximum (phase max_phase mod tau)?
        if contains_phase(lo, hi, max_phase, tau) {
            out_hi = 1.0;
        }
        // Minima sit half a period after maxima.
        if contains_phase(lo, hi, max_phase + std::f64::consts::PI, tau) {
            out_lo = -1.0;
        }
        (out_lo, out_hi)
    });
    KInterval::from_pieces(pieces, input.k())
}

fn contains_phase(lo: f64, hi: f64, phase: f64, tau: f64) -> bool {
    let n = ((lo - phase) / tau).ceil();
    phase + n * tau <= hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::KInterval;

    fn iv(lo: f64, hi: f64) -> KInterval {
        KInterval::closed(lo, hi, 8)
    }

    #[test]
    fn abs_image() {
        let out = image(&abs_spec(), &[iv(-2.0, 1.0)]);
        assert_eq!(out.pieces(), &[(0.0, 2.0)]);
    }

    #[test]
    fn add_image() {
        let out = image(&add_spec(), &[iv(0.0, 1.0), iv(2.0, 3.0)]);
        assert_eq!(out.pieces(), &[(2.0, 4.0)]);
    }

    #[test]
    fn mul_image_mixed_signs() {
        let out = image(&mul_spec(), &[iv(-1.0, 2.0), iv(-3.0, 1.0)]);
        assert_eq!(out.min(), Some(-6.0));
        assert_eq!(out.max(), Some(3.0));
    }

    #[test]
    fn linear_combination_three_pieces() {
        // 10*a + b over a in {1,2,3}, b in [-0.1, 0.1]
        let a = KInterval::from_pieces([(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)], 8);
        let b = iv(-0.1, 0.1);
        let ten_a = image(&mul_spec(), &[KInterval::point(10.0, 8), a]);
        let out = image(&add_spec(), &[ten_a, b]);
        assert_eq!(out.pieces().len(), 3);
        assert!((out.pieces()[0].0 - 9.9).abs() < 1e-12);
        assert!((out.pieces()[2].1 - 30.1).abs() < 1e-12);
    }

    #[test]
    fn div_straddling_zero_unbounded() {
        let out = image(&div_spec(), &[iv(1.0, 2.0), iv(-2.0, 3.0)]);
        assert_eq!(out.min(), Some(f64::NEG_INFINITY));
        assert_eq!(out.max(), Some(f64::INFINITY));
    }

    #[test]
    fn div_positive_cell() {
        let out = image(&div_spec(), &[iv(1.0, 2.0), iv(2.0, 4.0)]);
        assert_eq!(out.pieces(), &[(0.25, 1.0)]);
    }

    #[test]
    fn ln_touching_zero() {
        let out = image(&ln_spec(), &[iv(0.0, 1.0)]);
        assert_eq!(out.min(), Some(f64::NEG_INFINITY));
        assert_eq!(out.max(), Some(0.0));
        // entirely non-positive input: empty image
        assert!(image(&ln_spec(), &[iv(-2.0, -1.0)]).is_empty());
    }

    #[test]
    fn sin_spanning_period_clamps() {
        let out = sin_image(&iv(0.0, 10.0));
        assert_eq!(out.pieces(), &[(-1.0, 1.0)]);
    }

    #[test]
    fn sin_monotone_window() {
        let out = sin_image(&iv(0.0, 1.0));
        assert_eq!(out.min(), Some(0.0));
        assert!((out.max().unwrap() - 1.0f64.sin()).abs() < 1e-12);
        // window containing the max at pi/2
        let out = sin_image(&iv(1.0, 2.0));
        assert_eq!(out.max(), Some(1.0));
    }

    /// Exhaustive-corner oracle: hull of f over all 2^n corners of one box.
    fn corner_oracle(spec: &PiecewiseMonotonicSpec, boxes: &[(f64, f64)]) -> (f64, f64) {
        let n = boxes.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for mask in 0..(1usize << n) {
            let pt: Vec<f64> = (0..n)
                .map(|i| if mask & (1 << i) == 0 { boxes[i].0 } else { boxes[i].1 })
                .collect();
            let v = (spec.eval)(&pt);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    #[test]
    fn image_matches_corner_oracle_within_cells() {
        // Boxes entirely inside a sign cell; the n-step image must equal the
        // exhaustive corner hull exactly.
        let cases: Vec<(PiecewiseMonotonicSpec, Vec<(f64, f64)>)> = vec![
            (mul_spec(), vec![(1.0, 3.0), (2.0, 5.0)]),
            (mul_spec(), vec![(-3.0, -1.0), (2.0, 5.0)]),
            (mul_spec(), vec![(-3.0, -1.0), (-5.0, -2.0)]),
            (div_spec(), vec![(1.0, 3.0), (2.0, 5.0)]),
            (div_spec(), vec![(-3.0, -1.0), (-5.0, -2.0)]),
            (add_spec(), vec![(-3.0, 7.0), (2.0, 5.0)]),
            (sub_spec(), vec![(-3.0, 7.0), (2.0, 5.0)]),
            (greatest_spec(3), vec![(-3.0, 7.0), (2.0, 5.0), (-9.0, 1.0)]),
            (least_spec(3), vec![(-3.0, 7.0), (2.0, 5.0), (-9.0, 1.0)]),
        ];
        for (spec, boxes) in cases {
            let inputs: Vec<KInterval> =
                boxes.iter().map(|&(lo, hi)| iv(lo, hi)).collect();
            let got = image(&spec, &inputs);
            let (lo, hi) = corner_oracle(&spec, &boxes);
            assert_eq!(got.min(), Some(lo));
            assert_eq!(got.max(), Some(hi));
        }
    }
}
