use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use smbbayes_core::analysis::{classify_region, flowrate_ratios, linear_fit, SeparationRegion};
use smbbayes_core::network::{derive_flowrates, OperatingPoint};
use smbbayes_core::performance::SmbPosterior;
use smbbayes_core::presets::klatt_reference;
use smbbayes_core::transport::TransportMode;

fn weighted_stats(d_ax: f64, d_k: f64, n_pts: usize) {
    let mut case = klatt_reference::<f64>();
    case.plant.discretization.axial_cells = 20;
    case.plant.discretization.mode = TransportMode::EdmEquilibrium;
    case.plant.axial_dispersion = [d_ax; 4];
    case.plant.network.css_max_switches = 150;
    case.objective.penalty_factor = d_k;
    let plant = case.plant.clone();
    let posterior = SmbPosterior::new(plant.clone(), case.objective).unwrap();
    let iso = plant.isotherm().unwrap();
    let lo = case.bounds.lower.to_array();
    let hi = case.bounds.upper.to_array();
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let (mut m2, mut m3, mut w, mut d32, mut d14, mut in_a) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    let mut evals = 0;
    while m2.len() < n_pts {
        let theta: Vec<f64> = (0..6).map(|i| lo[i] + (hi[i]-lo[i]) * rng.random::<f64>()).collect();
        let op = OperatingPoint::from_array(&theta);
        let Ok(flows) = derive_flowrates(&op) else { continue };
        let r = flowrate_ratios(&op, &plant.geometry(op.length), &flows);
        // restrict proposals to the broad neighborhood of the separation region
        if r.m3() <= r.m2() || r.m2() < 0.2 || r.m3() > 0.62 { continue }
        evals += 1;
        let logp = match posterior.evaluate(&op) { Ok((_, lp)) => lp, Err(_) => continue };
        let weight = (logp - 1.0f64).exp();
        if weight < 1e-6 { continue }
        m2.push(r.m2()); m3.push(r.m3()); w.push(weight);
        d32.push(r.m3()-r.m2()); d14.push(r.m1()-r.m4());
        in_a.push(classify_region(r.m2(), r.m3(), &iso) == SeparationRegion::CompleteSeparation);
    }
    // weighted slope
    let sw: f64 = w.iter().sum();
    let mx: f64 = m2.iter().zip(&w).map(|(x, wi)| x*wi).sum::<f64>() / sw;
    let my: f64 = m3.iter().zip(&w).map(|(y, wi)| y*wi).sum::<f64>() / sw;
    let mut sxx = 0.0; let mut sxy = 0.0;
    for i in 0..m2.len() {
        sxx += w[i]*(m2[i]-mx)*(m2[i]-mx);
        sxy += w[i]*(m2[i]-mx)*(m3[i]-my);
    }
    let slope = sxy/sxx;
    let fa: f64 = in_a.iter().zip(&w).map(|(a, wi)| if *a { *wi } else { 0.0 }).sum::<f64>() / sw;
    // weighted mean of d32 as mode proxy
    let md32: f64 = d32.iter().zip(&w).map(|(d, wi)| d*wi).sum::<f64>() / sw;
    let md14: f64 = d14.iter().zip(&w).map(|(d, wi)| d*wi).sum::<f64>() / sw;
    // unweighted comparison fit
    let plain = linear_fit(&m2, &m3).unwrap();
    println!("D_ax {d_ax:.0e} d_k {d_k:.0e}: kept {} of {evals} evals | weighted slope {slope:.3}, A {:.0}%, d32 mean {md32:.3}, d14 mean {md14:.3} (unweighted slope {:.3})",
        m2.len(), fa*100.0, plain.slope);
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let d_ax: f64 = args[1].parse().unwrap();
    let d_k: f64 = args[2].parse().unwrap();
    let n: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(400);
    weighted_stats(d_ax, d_k, n);
}
