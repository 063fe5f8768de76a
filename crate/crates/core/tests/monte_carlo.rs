use rayon::prelude::*;

use redsense::adc::{AdcConfig, AdcTrial, ConversionMode, Quartiles};
use redsense::component::{build_binary_set, sample_realization};
use redsense::oracle;
use redsense::quantizer::{entropy_of, ReferenceSet};

fn binary_refs(bits: u32, sigma0: f64, seed: u64, trial: u64) -> ReferenceSet {
    let nominal = build_binary_set(bits).unwrap();
    let real = sample_realization(&nominal, sigma0, seed, trial).unwrap();
    let model = real.reference_model();
    let refs = (0..1u64 << bits)
        .map(|c| model.reference(nominal.identity.binary_assembly(c)))
        .collect();
    ReferenceSet::from_references(bits, refs).unwrap()
}

#[test]
fn high_resolution_binary_is_mismatch_dominated() {
    // Linearized prediction: MQR ≈ 2σ0²K ≈ 13 at N = 16, σ0 = 1%.
    let mqr: Vec<f64> = (0..1000)
        .into_par_iter()
        .map(|t| binary_refs(16, 0.01, 21, t).metrics().mqr)
        .collect();
    let q = Quartiles::of(&mqr).unwrap();
    assert!(q.median > 5.0, "{q:?}");
    assert!(q.median < 40.0, "{q:?}");
}

#[test]
fn closed_form_mse_matches_grid_integration() {
    let mut checked = 0;
    for trial in 0..20 {
        let refs = binary_refs(8, 0.05, 4, trial);
        if !refs.is_monotone() {
            continue;
        }
        checked += 1;
        let m = refs.total_mse();
        // Cells straddling a threshold carry O(h) error each.
        let coarse = oracle::grid_mse(8, 128, |x| refs.quantize(x).unwrap());
        let fine = oracle::grid_mse(8, 1024, |x| refs.quantize(x).unwrap());
        assert!((m - fine).abs() < 1e-4 * m, "{m} vs {fine}");
        assert!((m - fine).abs() < (m - coarse).abs());
    }
    assert!(checked > 5);
}

#[test]
fn closed_form_mse_matches_region_sums_under_large_mismatch() {
    // Mean plus variance about the centre per forward region, summed in a
    // different order from the library's cubic differences.
    for trial in 0..3 {
        let refs = binary_refs(16, 0.10, 4, trial);
        let t = refs.thresholds();
        let mut acc: Vec<f64> = (0..t.len() - 1)
            .filter(|&i| t[i + 1] > t[i])
            .map(|i| {
                let len = t[i + 1] - t[i];
                let off = 0.5 * (t[i] + t[i + 1]) - (i as f64 + 0.5);
                len * off * off + len.powi(3) / 12.0
            })
            .collect();
        acc.sort_by(f64::total_cmp);
        let direct = acc.iter().sum::<f64>() / 2f64.powi(48);
        let m = refs.total_mse();
        assert!((m - direct).abs() < 1e-9 * m, "{m} vs {direct}");
        assert!((refs.metrics().entropy - entropy_of(direct).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn realized_thresholds_match_converter_output() {
    // The entropy used for ENOB is computed from the same thresholds the
    // SAR compares against.
    let cfg = AdcConfig::new(10, ConversionMode::HeuristicCalibrated, 0.03, 12);
    let mut adc = AdcTrial::new(&cfg, 0).unwrap();
    let refs = adc.reference_set();
    let tf = adc.transfer_function();
    if tf.non_monotone.is_empty() {
        for (k, &e) in tf.edges.iter().enumerate() {
            assert!((e - refs.thresholds()[k + 1]).abs() < 1e-12);
        }
    }
    let grid = oracle::grid_mse(10, 16, |x| adc.convert_noiseless(x));
    assert!((grid - refs.total_mse()).abs() / grid < 1e-2);
}
