use dkf_core::confilter::{bandpass_step, BandpassCoupling};
use dkf_core::harness::scenarios;
use dkf_core::kalman::exact_average_information;
use dkf_core::mintime::{final_value, hankel_of_differences};
use dkf_core::sysmodel::information_terms;
use dkf_core::graph::random_connected_graph;
use nalgebra::{DMatrix, DVector};

// phi estimate at a given hankel size (None if sigma test fails or degenerate)
fn phi_at(y: &[f64], k: usize, sigma: f64) -> Option<f64> {
    let len = 2 * k + 1;
    if len + 1 > y.len() { return None; }
    let diffs: Vec<f64> = (0..len).map(|t| y[t + 1] - y[t]).collect();
    let g = hankel_of_differences(&diffs).unwrap();
    let svd = g.clone().svd(false, true);
    let (mut mi, mut ma) = (0usize, 0usize);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < svd.singular_values[mi] { mi = i; }
        if s > svd.singular_values[ma] { ma = i; }
    }
    if svd.singular_values[mi] > sigma * svd.singular_values[ma].max(1.0) { return None; }
    let v = svd.v_t.unwrap().row(mi).transpose();
    if v[v.nrows() - 1].abs() < 1e-12 { return None; }
    let beta = &v / v[v.nrows() - 1];
    final_value(y, &beta).ok()
}

fn main() {
    for p in [0.15, 0.25] {
        for gseed in [3u64, 9] {
            let graph = random_connected_graph(20, p, gseed).unwrap();
            let n = 20;
            let eps = 0.015;
            let sensors = scenarios::two_class_sensors(n);
            let s_exact = exact_average_information(&sensors);
            let u_mats: Vec<DMatrix<f64>> = sensors
                .iter().map(|s| information_terms(s, &DVector::zeros(2)).0).collect();
            let mut states = vec![(DMatrix::<f64>::zeros(2, 2), DMatrix::<f64>::zeros(2, 2)); n];
            let steps = 700;
            let mut traj: Vec<Vec<DMatrix<f64>>> = vec![vec![DMatrix::zeros(2, 2); n]];
            for _ in 0..steps {
                states = bandpass_step(&graph, &states, &u_mats, eps, BandpassCoupling::StageOutput).unwrap();
                traj.push(states.iter().map(|(s, _)| s.clone()).collect());
            }
            // A0 tube times (1e-3 relative inf-norm, persistent)
            let tube = 1e-3 * s_exact.amax();
            let mut ttimes = Vec::new();
            for i in 0..n {
                let mut entry: Option<usize> = None;
                for t in 1..=steps {
                    let dev = (&traj[t][i] - &s_exact).amax();
                    if dev <= tube { entry.get_or_insert(t); } else { entry = None; }
                }
                ttimes.push(entry.unwrap_or(usize::MAX));
            }
            let mean_a0: f64 = ttimes.iter().map(|&t| t as f64).sum::<f64>() / n as f64;
            // phi error vs observation budget (worst over node/element)
            let mut line = format!("p={p} seed={gseed}: A0 tube mean={mean_a0:.0} max={} | worst-rel-err@obs: ",
                ttimes.iter().max().unwrap());
            for budget in [40usize, 60, 82, 120, 160] {
                let k = budget / 2 - 1;
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    for (h, l) in [(0usize, 0usize), (0, 1), (1, 1)] {
                        let y: Vec<f64> = (0..=steps).map(|t| traj[t][i][(h, l)]).collect();
                        if let Some(phi) = phi_at(&y, k, 1e-9) {
                            let err = (phi - s_exact[(h, l)]).abs() / s_exact.amax();
                            if err > worst { worst = err; }
                        } else {
                            worst = f64::INFINITY;
                        }
                    }
                }
                line.push_str(&format!("{budget}:{worst:.1e} "));
            }
            println!("{line}");
        }
    }
}
