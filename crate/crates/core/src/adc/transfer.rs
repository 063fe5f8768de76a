//! Code transitions, DNL and INL.

use serde::{Deserialize, Serialize};

use super::AdcTrial;

/// Resolution of the measurement grid, steps per LSB.
pub const BISECTION_STEPS_PER_LSB: u32 = 64;

/// Servo iterations per code when the comparator is noisy; the second half is
/// averaged.
const SERVO_ITERATIONS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub bits: u32,
    /// `edges[i - 1]` is `T(i)`: the lowest input converted to `i` or above,
    /// for `i` in `1..2^N`.
    pub edges: Vec<f64>,
    /// Codes whose input interval is empty.
    pub missing_codes: Vec<u64>,
    /// Codes `i` with `T(i + 1) < T(i)`.
    pub non_monotone: Vec<u64>,
}

impl TransferFunction {
    pub(crate) fn from_edges(bits: u32, edges: Vec<f64>) -> Self {
        let top = (1u64 << bits) as f64;
        let widths = code_widths(&edges, top);
        let missing_codes = widths
            .iter()
            .enumerate()
            .filter(|(_, &w)| w <= 0.0)
            .map(|(i, _)| i as u64)
            .collect();
        let non_monotone = edges
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] < w[0])
            .map(|(k, _)| k as u64 + 1)
            .collect();
        Self {
            bits,
            edges,
            missing_codes,
            non_monotone,
        }
    }

    /// Width of every code's input interval, LSB.
    pub fn widths(&self) -> Vec<f64> {
        code_widths(&self.edges, (1u64 << self.bits) as f64)
    }
}

fn code_widths(edges: &[f64], top: f64) -> Vec<f64> {
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(edges.len() + 1);
    for &t in edges {
        out.push(t - prev);
        prev = t;
    }
    out.push(top - prev);
    out
}

/// Edges of the noiseless converter, exact.
///
/// The SAR is a binary decision tree. Below a node with threshold `t` and
/// midpoint code `m`, `{x : code(x) >= i}` is `{x >= t} ∩ right(i)` for
/// `i >= m` and `{x >= t} ∪ left(i)` otherwise, so `T(i)` is a max/min
/// chain along one root-to-leaf path. The result is clamped to the input
/// range.
pub(crate) fn exact_edges(t: &AdcTrial) -> TransferFunction {
    let bits = t.config().bits;
    let codes = 1u64 << bits;
    let top = codes as f64;
    let edges = (1..codes)
        .map(|i| {
            // Walk from the leaf up so the combination order matches the
            // nesting above.
            let mut acc = f64::NEG_INFINITY;
            for k in 0..bits {
                let prefix = (i >> (k + 1)) << (k + 1);
                let mid = prefix | 1 << k;
                if i & (1 << k) != 0 {
                    acc = acc.max(t.effective_threshold(mid));
                } else if i != prefix {
                    acc = acc.min(t.effective_threshold(mid));
                }
            }
            acc.clamp(0.0, top)
        })
        .collect();
    TransferFunction::from_edges(bits, edges)
}

/// Edges found by servo search on a `1/64` LSB grid: step the input up
/// when the output is below `i`, down otherwise, and average the input over
/// the settled half of the run.
pub(crate) fn servo_edges(t: &mut AdcTrial) -> TransferFunction {
    let bits = t.config().bits;
    let codes = 1u64 << bits;
    let step = 1.0 / BISECTION_STEPS_PER_LSB as f64;
    let top = codes as f64 - step;
    let mut edges = Vec::with_capacity(codes as usize - 1);
    for i in 1..codes {
        let mut x = (t.effective_threshold(i)).clamp(0.0, top);
        x = (x / step).round() * step;
        let mut acc = 0.0;
        for it in 0..SERVO_ITERATIONS {
            let c = t.sar_convert(x).expect("servo stays in range");
            x = if c >= i { (x - step).max(0.0) } else { (x + step).min(top) };
            if it >= SERVO_ITERATIONS / 2 {
                acc += x;
            }
        }
        edges.push(acc / (SERVO_ITERATIONS / 2) as f64);
    }
    TransferFunction::from_edges(bits, edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearity {
    /// `DNL(i) = T(i+1) - T(i) - 1` for `i` in `1..2^N - 1`.
    pub dnl: Vec<f64>,
    /// End-point fit residual of `T(i)`, in units of the fitted step, for
    /// `i` in `1..2^N`.
    pub inl: Vec<f64>,
}

impl Linearity {
    pub fn max_abs_dnl(&self) -> f64 {
        self.dnl.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_inl(&self) -> f64 {
        self.inl.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dnl_inl(tf: &TransferFunction) -> Linearity {
    let e = &tf.edges;
    let dnl = e.windows(2).map(|w| w[1] - w[0] - 1.0).collect();
    let inl = if e.len() < 2 {
        vec![0.0; e.len()]
    } else {
        let first = e[0];
        let step = (e[e.len() - 1] - first) / (e.len() - 1) as f64;
        if step > 0.0 {
            e.iter()
                .enumerate()
                .map(|(k, &t)| (t - first - k as f64 * step) / step)
                .collect()
        } else {
            vec![f64::INFINITY; e.len()]
        }
    };
    Linearity { dnl, inl }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adc::{AdcConfig, ConversionMode};

    fn bisect(t: &AdcTrial, i: u64) -> f64 {
        let n = (1u64 << t.config().bits) * BISECTION_STEPS_PER_LSB as u64;
        let at = |g: u64| g as f64 / BISECTION_STEPS_PER_LSB as f64;
        // First grid point with code >= i; monotone in x for a fixed table.
        let (mut lo, mut hi) = (0u64, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if t.convert_noiseless(at(mid)) >= i {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        at(lo)
    }

    #[test]
    fn matched_edges_are_integers() {
        let mut t = AdcTrial::new(&AdcConfig::new(8, ConversionMode::Binary, 0.0, 1), 0).unwrap();
        let tf = t.transfer_function();
        for (k, &e) in tf.edges.iter().enumerate() {
            assert_eq!(e, k as f64 + 1.0);
        }
        assert!(tf.missing_codes.is_empty() && tf.non_monotone.is_empty());
        let lin = dnl_inl(&tf);
        assert_eq!(lin.max_abs_dnl(), 0.0);
        assert_eq!(lin.max_abs_inl(), 0.0);
    }

    #[test]
    fn exact_edges_agree_with_bisection() {
        for (mode, sigma) in [
            (ConversionMode::Binary, 0.2),
            (ConversionMode::Binary, 0.03),
            (ConversionMode::HeuristicCalibrated, 0.1),
            (ConversionMode::OracleOptimal, 0.3),
        ] {
            for trial in 0..4 {
                let mut t = AdcTrial::new(&AdcConfig::new(9, mode, sigma, 11), trial).unwrap();
                let tf = t.transfer_function();
                for i in 1..512u64 {
                    let b = bisect(&t, i);
                    let e = tf.edges[i as usize - 1];
                    assert!(b >= e - 1e-12 && b < e + 1.0 / 64.0 + 1e-12, "{mode} i={i} {b} {e}");
                }
            }
        }
    }

    #[test]
    fn missing_codes_have_dnl_minus_one() {
        let mut seen = 0;
        for trial in 0..10 {
            let mut t = AdcTrial::new(&AdcConfig::new(10, ConversionMode::Binary, 0.2, 2), trial).unwrap();
            let tf = t.transfer_function();
            let lin = dnl_inl(&tf);
            for &c in &tf.missing_codes {
                if (1..1023).contains(&c) && tf.non_monotone.is_empty() {
                    assert_eq!(lin.dnl[c as usize - 1], -1.0);
                    seen += 1;
                }
            }
            for (k, &d) in lin.dnl.iter().enumerate() {
                if d == -1.0 {
                    assert!(tf.missing_codes.contains(&(k as u64 + 1)));
                }
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn servo_tracks_noiseless_edges() {
        let mut cfg = AdcConfig::new(6, ConversionMode::Binary, 0.05, 8);
        cfg.comparator_noise_sigma = 0.1;
        let mut noisy = AdcTrial::new(&cfg, 0).unwrap();
        let tf = noisy.transfer_function();
        cfg.comparator_noise_sigma = 0.0;
        let mut clean = AdcTrial::new(&cfg, 0).unwrap();
        let exact = clean.transfer_function();
        for (a, b) in tf.edges.iter().zip(&exact.edges) {
            assert!((a - b).abs() < 0.1, "{a} {b}");
        }
    }
}
