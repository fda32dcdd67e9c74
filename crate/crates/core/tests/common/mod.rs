#![allow(dead_code)]

use std::path::{Path, PathBuf};

use msb::fat::{FeatureActionTable, TableParser};
use msb::timeseries::{load_cts, load_nts, SeriesSet};
use msb::CompileSettings;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    fixture("golden").join(name)
}

/// Compares against a golden file; `MSB_BLESS=1` rewrites it instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden(name);
    if std::env::var_os("MSB_BLESS").is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs from the compiled output", path.display()))
    }
}

pub fn table(name: &str) -> FeatureActionTable {
    TableParser::default().parse_file(fixture(name)).unwrap()
}

/// Single-peak NTS as TS1 plus the three-event CTS as EV.
pub fn story_data() -> SeriesSet<f64> {
    let mut set = SeriesSet::new();
    set.insert(load_nts::<f64>(fixture("single_peak.csv"), "TS1").unwrap())
        .unwrap();
    set.insert(load_cts::<f64>(fixture("events.csv"), "EV", 10.0).unwrap())
        .unwrap();
    set
}

pub fn bedford_settings() -> CompileSettings {
    CompileSettings {
        k: 3,
        context: [("REGION".to_string(), "Bedford".to_string())].into(),
        ..CompileSettings::default()
    }
}

/// Peak regions following the descent rule step by step: strict maxima,
/// visited tallest first (earlier on ties), each walking outward while the
/// next value is no higher, then stepping back over any flat run at the
/// bottom so the bound is where the lowest value was first reached. Maxima
/// inside a region are dropped.
pub fn oracle_peaks(v: &[i64]) -> Vec<(usize, usize, usize)> {
    let n = v.len();
    let mut maxima = Vec::new();
    for i in 0..n {
        let left_ok = if i == 0 { true } else { v[i] > v[i - 1] };
        let right_ok = if i + 1 == n { true } else { v[i] > v[i + 1] };
        if left_ok && right_ok {
            maxima.push(i);
        }
    }
    // insertion sort: taller first, earlier first among equals
    let mut order: Vec<usize> = Vec::new();
    for m in maxima {
        let pos = order.iter().position(|&o| v[m] > v[o]).unwrap_or(order.len());
        order.insert(pos, m);
    }
    let mut removed = vec![false; n];
    let mut out = Vec::new();
    for apex in order {
        if removed[apex] {
            continue;
        }
        let mut l = apex;
        while l > 0 && v[l - 1] <= v[l] {
            l -= 1;
        }
        while l < apex && v[l + 1] == v[l] {
            l += 1;
        }
        let mut r = apex;
        while r + 1 < n && v[r + 1] <= v[r] {
            r += 1;
        }
        while r > apex && v[r - 1] == v[r] {
            r -= 1;
        }
        for slot in removed.iter_mut().take(r + 1).skip(l) {
            *slot = true;
        }
        out.push((l, apex, r));
    }
    out.sort_by_key(|p| p.1);
    out
}

/// All value sequences of length `len` over `0..base`.
pub fn all_sequences(len: usize, base: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..base).map(move |x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out
}

/// `amp * exp(-(t - c)^2 / (2 sigma^2))`.
pub fn gaussian(amp: f64, c: f64, sigma: f64, t: f64) -> f64 {
    amp * (-((t - c) * (t - c)) / (2.0 * sigma * sigma)).exp()
}
