//! Scratch probe of the full pipeline on the Pöschl–Teller family.

use std::collections::BTreeMap;

use hamflow::catalog;
use hamflow::hamsys::{crossing_detector, IntegratorConfig};
use hamflow::specflow::{
    detect_crossings, spectral_flow_crossings, spectral_flow_discretized, BoundaryCondition,
    DiscretizedPath, SpecflowConfig,
};

#[test]
fn probe_poschl_teller_crossing_route() {
    let entry = catalog::build("poschl_teller", &BTreeMap::new()).unwrap();
    let fam = &entry.family;
    let cfg = SpecflowConfig::default();

    let t0 = std::time::Instant::now();
    let scan = detect_crossings(fam, &cfg).unwrap();
    println!("scan took {:?}", t0.elapsed());
    println!("crossings: {:?}", scan.locations);
    assert_eq!(scan.locations.len(), 1);
    let unmapped = entry.unmap(scan.locations[0]);
    println!("unmapped crossing: {unmapped}");
    assert!(
        (unmapped + 1.0).abs() < 1e-6,
        "crossing at {unmapped}, expected -1"
    );

    let t0 = std::time::Instant::now();
    let (sfl, reports, endpoints) = spectral_flow_crossings(fam, &cfg).unwrap();
    println!("crossing route took {:?}", t0.elapsed());
    println!("sfl = {sfl}, endpoints = {endpoints:?}");
    for r in &reports {
        println!(
            "  lambda0 = {:.8}, dim = {}, sig = {}, form = {:?}",
            r.lambda0, r.kernel_dim, r.signature, r.form.matrix
        );
    }
    assert_eq!(sfl, -1);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].kernel_dim, 1);
    // analytic: 1.5 * (-int q^2 / ||u||^2) = 1.5 * (-2 / (8/3)) = -1.125
    let form_val = reports[0].form.matrix[(0, 0)];
    assert!(
        (form_val + 1.125).abs() < 1e-4,
        "form value {form_val}, expected -1.125"
    );
}

#[test]
fn probe_poschl_teller_discretized_route() {
    let entry = catalog::build("poschl_teller", &BTreeMap::new()).unwrap();
    let fam = &entry.family;
    let t0 = std::time::Instant::now();
    let disc = DiscretizedPath::new(fam, 12.0, 1200, BoundaryCondition::PlateauFrozen, 1.0).unwrap();
    let sfl = spectral_flow_discretized(&disc, 200).unwrap();
    println!("discretized route took {:?}", t0.elapsed());
    assert_eq!(sfl, -1);
}

#[test]
fn probe_detector_profile() {
    let entry = catalog::build("poschl_teller", &BTreeMap::new()).unwrap();
    let fam = &entry.family;
    let integ = IntegratorConfig::default();
    for i in 0..=10 {
        let l = i as f64 / 10.0;
        let d = crossing_detector(fam, l, 0.0, &integ).unwrap();
        println!("lambda = {l:.2}  detector = {d:.6e}");
    }
}
