use coopharq_web::{ltat_vs_rate, matched_cdf, outage_curve};

#[test]
fn outage_curve_decreases_with_snr_and_rounds() {
    let c = outage_curve(2.0, 0.5, 3, 4.0, 0.0, 5.0, 20.0, 6).unwrap();
    assert_eq!(c.snr_db.len(), 5);
    let rows: Vec<Vec<f64>> = c.p_out.into_iter().map(|r| r.unwrap()).collect();
    for w in rows.windows(2) {
        assert!(w[1][2] < w[0][2], "{rows:?}");
    }
    for r in &rows {
        assert!(r[1] <= r[0] && r[2] <= r[1], "{r:?}");
    }
}

#[test]
fn matched_cdf_tracks_samples() {
    let c = matched_cdf(2.0, 0.5, 2, 10.0, &[2, 6], 41, 200_000, 3).unwrap();
    assert_eq!(c.curves.len(), 2);
    assert_eq!(c.empirical.len(), 41);
    let worst = c.curves[1]
        .cdf
        .iter()
        .zip(&c.empirical)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.03, "{worst}");
}

#[test]
fn ltat_vanishes_at_high_rate() {
    let c = ltat_vs_rate(6.0, 0.5, 3, 10.0, 0.5, 0.5, 20.0, 6).unwrap();
    let t: Vec<f64> = c.ltat.iter().map(|v| v.unwrap_or(0.0)).collect();
    let peak = t.iter().cloned().fold(0.0, f64::max);
    assert!(peak > t[0] && peak > *t.last().unwrap(), "{t:?}");
}

#[test]
fn rejects_bad_grids() {
    assert!(outage_curve(2.0, 0.5, 3, 4.0, 5.0, 1.0, 0.0, 6).is_err());
    assert!(ltat_vs_rate(2.0, 0.5, 3, 10.0, 0.1, 0.0, 1.0, 6).is_err());
    assert!(matched_cdf(2.0, 0.5, 2, 10.0, &[2], 1, 10, 0).is_err());
}
