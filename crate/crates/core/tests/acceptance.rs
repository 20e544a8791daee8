//! Acceptance suite: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use srpt_ht::distributions::Law;
use srpt_ht::engine::{generate_primitives, simulate, simulate_coupled, workload_from_reflection, InitialCondition, SimConfig};
use srpt_ht::harness::{fclt_check, run_ensemble, ExperimentConfig};
use srpt_ht::reference::{biased_walk_hit, biased_walk_mc, rbm_endpoints, LimitParams, Summary, W0Law};
use srpt_ht::scaling::{drift, drift_limit, make_params};
use srpt_ht::seed::{replication_seed, stream, stream_rng};
use srpt_ht::verify::path_checks;

const HEAVY_TRAFFIC: &str = include_str!("../../../configs/heavy_traffic.json");
const FCLT: &str = include_str!("../../../configs/fclt.json");

/// Weibull shape 2 with unit mean.
const WEIBULL2_SCALE: f64 = 0.886_226_925_452_758;

struct Line {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, title: &'static str, pass: bool, detail: String) -> Line {
    Line { id, title, pass, detail }
}

fn sandwich_suite() -> Line {
    let laws = [Law::exponential(1.0).unwrap(), Law::weibull(WEIBULL2_SCALE, 2.0).unwrap()];
    let rs = [10.0, 20.0, 40.0];
    let scaled_a = [0.5, 1.0, 2.0];
    let reps_per_cell = 170;
    let mut cells = Vec::new();
    for (li, law) in laws.iter().enumerate() {
        for (ri, &r) in rs.iter().enumerate() {
            cells.push((li, law, ri, r));
        }
    }
    let results: Vec<(u64, u64, u64)> = cells
        .par_iter()
        .flat_map_iter(|&(li, law, ri, r)| (0..reps_per_cell).map(move |rep| (li, law, ri, r, rep)))
        .map(|(li, law, ri, r, rep)| {
            let p = make_params(law, r, -0.5).unwrap();
            let inter = Law::exponential(p.lambda_r).unwrap();
            let seed = replication_seed(1, (li * rs.len() + ri) as u64, rep as u64);
            let prims = generate_primitives(law, &inter, &inter, &InitialCondition::Empty, p.horizon(1.0), seed).unwrap();
            let tr = simulate_coupled(&prims, &p.sim_config(&scaled_a, 0.005)).unwrap();
            let (mut checks, mut w_bad, mut q_bad) = (0u64, 0u64, 0u64);
            for s in &tr.snapshots {
                for (c, &a) in s.cutoffs.iter().zip(&tr.a_grid) {
                    let (y, z) = (c.y_a.unwrap(), c.z_a.unwrap());
                    checks += 1;
                    w_bad += u64::from(!(y <= c.w_a + 1e-9 && c.w_a <= y + a + 1e-9));
                    q_bad += u64::from(!(z <= c.q_a && c.q_a <= z + 1));
                }
            }
            (checks, w_bad, q_bad)
        })
        .collect();
    let reps = results.len();
    let (checks, w_bad, q_bad) = results.iter().fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    line(
        "1",
        "exact sandwich suite",
        reps >= 1000 && w_bad == 0 && q_bad == 0,
        format!("{reps} replications, {checks} checks: {w_bad} workload and {q_bad} queue-length violations"),
    )
}

fn reflection_identity() -> Line {
    let law = Law::exponential(1.0).unwrap();
    let p = make_params(&law, 10.0, -0.5).unwrap();
    let inter = Law::exponential(p.lambda_r).unwrap();
    let worst = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let mut init_rng = stream_rng(replication_seed(2, 0, i), stream::INITIAL);
            let tasks = (0..init_rng.random_range(0..5)).map(|_| law.sample(&mut init_rng)).collect();
            let prims =
                generate_primitives(&law, &inter, &inter, &InitialCondition::Explicit { tasks }, p.horizon(1.0), replication_seed(2, 1, i))
                    .unwrap();
            let tr = simulate(&prims, &SimConfig::new(vec![], 0.5)).unwrap();
            let g = workload_from_reflection(&prims, None, prims.initial_workload(None)).unwrap();
            tr.snapshots.iter().map(|s| (s.w - g.value_at(s.t).unwrap()).abs()).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    line("2", "reflection identity W = Γ[X]", worst <= 1e-9, format!("200 streams, max |W − Γ[X]| = {worst:e}"))
}

fn skorokhod_axioms() -> Line {
    let checks = path_checks(3);
    let wanted = ["Lipschitz factor 2", "monotonicity", "shift property"];
    let picked: Vec<_> = checks.iter().filter(|c| wanted.contains(&c.name)).collect();
    let pass = picked.len() == 3 && picked.iter().all(|c| c.pass);
    let detail = picked.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ");
    line("3", "Skorokhod map axioms (500 trials each)", pass, detail)
}

fn scale_identities() -> Line {
    let mut rng = stream_rng(4, stream::REFERENCE);
    let mut inv_err = 0.0f64;
    for law in [Law::exponential(1.0).unwrap(), Law::weibull(WEIBULL2_SCALE, 2.0).unwrap(), Law::pareto(2.0, 1.0).unwrap()] {
        let s0 = law.big_s(0.0).unwrap();
        for _ in 0..100 {
            let r = s0 * 1e6f64.powf(rng.random::<f64>()).max(1.0 + 1e-3);
            let c = law.s_inverse(r).unwrap();
            inv_err = inv_err.max((law.big_s(c).unwrap() - r).abs() / r);
        }
    }
    let mut cf_err = 0.0f64;
    for lam in [0.5, 1.0, 2.0] {
        let law = Law::exponential(lam).unwrap();
        for x in [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let closed = lam * (lam * x).exp() / (lam * x + 1.0);
            let quad = 1.0 / law.tail_work_quadrature(x).unwrap();
            cf_err = cf_err.max((closed - quad).abs() / closed);
        }
    }
    let law = Law::exponential(1.0).unwrap();
    let ratios: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&r: &f64| law.s_inverse(r).unwrap() / r.ln()).collect();
    let monotone = ratios.windows(2).all(|w| w[1] < w[0]);
    let within = (ratios[2] - 1.0).abs() <= 0.15;
    line(
        "4",
        "scale-function identities",
        inv_err <= 1e-9 && cf_err <= 1e-8 && monotone && within,
        format!(
            "S(S⁻¹(r)) rel err {inv_err:e}; closed form vs quadrature rel err {cf_err:e}; c_r/log r at 1e2,1e4,1e6 = {ratios:.4?} (monotone: {monotone}, within 15% of 1 at 1e6: {within})"
        ),
    )
}

fn drift_identities() -> Line {
    let mut exact = true;
    for law in [Law::exponential(1.0).unwrap(), Law::weibull(WEIBULL2_SCALE, 2.0).unwrap(), Law::pareto(2.5, 1.0).unwrap()] {
        for r in [10.0, 100.0, 1000.0] {
            for kappa in [-1.0, -0.5, 0.0] {
                let p = make_params(&law, r, kappa).unwrap();
                exact &= drift(&p, 1.0).unwrap() == kappa - p.lambda_r;
            }
        }
    }
    let (lam, kappa) = (1.0, -0.5);
    let table = [drift_limit(0.5, lam, kappa), drift_limit(1.0, lam, kappa), drift_limit(3.0, lam, kappa)];
    let table_ok = table[0] == f64::NEG_INFINITY && table[1] == kappa - lam && table[2] == kappa;
    let law = Law::exponential(1.0).unwrap();
    let near = (drift(&make_params(&law, 1e4, kappa).unwrap(), 3.0).unwrap() - kappa).abs();
    let half: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&r| drift(&make_params(&law, r, kappa).unwrap(), 0.5).unwrap()).collect();
    let diverging = half.windows(2).all(|w| w[1] < w[0]);
    line(
        "5",
        "drift identities",
        exact && table_ok && near < 1e-6 && diverging,
        format!("drift(1) = κ − λ_r exactly: {exact}; limits at a = 0.5, 1, 3: {table:?}; |drift(3) − κ| at r = 1e4: {near:e}; drift(0.5) at r = 10, 1e2, 1e3: {half:.3?}"),
    )
}

fn biased_walk() -> Line {
    let h23 = biased_walk_hit(2, 3).unwrap();
    let h34 = biased_walk_hit(3, 4).unwrap();
    let exact = (h23 - 1.0 / 3.0).abs() < 1e-15 && (h34 - 3.0 / 7.0).abs() < 1e-15;
    let mut mc_ok = true;
    let mut notes = Vec::new();
    for (k, (j, l)) in [(2u32, 3u32), (3, 4), (2, 5)].into_iter().enumerate() {
        let mut rng = stream_rng(replication_seed(6, 0, k as u64), stream::WALK);
        let est = biased_walk_mc(j, l, 100_000, &mut rng).unwrap();
        let h = biased_walk_hit(j, l).unwrap();
        let z = (est.estimate - h).abs() / est.stderr;
        mc_ok &= z <= 3.0;
        notes.push(format!("({j},{l}): exact {h:.6}, MC {:.6} ({z:.2} se)", est.estimate));
    }
    line("6", "biased walk", exact && mc_ok, notes.join("; "))
}

fn rbm_oracle() -> Line {
    let start = Instant::now();
    let p = LimitParams { w0: W0Law::Deterministic { w: 0.0 }, sigma: 1.0, kappa: 0.0, lambda: 1.0 };
    let ends = rbm_endpoints(&p, 1.0, 1 << 14, 100_000, 7).unwrap();
    let s = Summary::of(&ends).unwrap();
    let target = (2.0 / PI).sqrt();
    let rel = (s.mean - target).abs() / target;
    let secs = start.elapsed().as_secs_f64();
    line(
        "7",
        "RBM oracle E[W*(1)] = √(2/π)",
        rel <= 0.01 && secs <= 60.0,
        format!("mean {:.5} vs {target:.5} (rel err {:.3}%), {secs:.1} s", s.mean, 100.0 * rel),
    )
}

fn fclt_constants() -> Line {
    let cfg: ExperimentConfig = serde_json::from_str(FCLT).unwrap();
    let rep = fclt_check(&cfg).unwrap();
    let row = rep.rows.iter().find(|r| r.r == 50.0 && r.t == 1.0).unwrap();
    line(
        "8",
        "FCLT constant Var V̂(1) = σ²",
        row.rel_err_v() <= 0.10,
        format!("Var V̂(1) = {:.4}, σ² = {:.4} (rel err {:.2}%), reps = {}", row.var_v, row.expected_var_v, 100.0 * row.rel_err_v(), cfg.reps),
    )
}

fn heavy_traffic() -> Vec<Line> {
    let cfg: ExperimentConfig = serde_json::from_str(HEAVY_TRAFFIC).unwrap();
    let rep = run_ensemble(&cfg).unwrap();
    let verdict = |id, title, name: &str| {
        let t = rep.trend(name).unwrap_or_else(|| panic!("trend {name} missing"));
        let bound = t.bound.map(|b| format!(", bound {b}")).unwrap_or_default();
        line(id, title, t.pass, format!("{name} over r = {:?}: {:.4?}{bound}", cfg.r_list, t.values))
    };
    vec![
        verdict("9a", "median ‖Q̃−W̃‖_T strictly decreasing", "median supQminusW"),
        verdict("9b", "median ‖Q̃_0.5‖_T strictly decreasing", "median supQ_a@0.5"),
        verdict("9c", "median ‖W̃−W̃_2‖_T strictly decreasing", "median supWminusWa@2"),
        verdict("9d", "mean concentration ratio (eps 0.5) nondecreasing", "mean conc@0.5"),
        verdict("9e", "KS(W̃(1), W*(1)) at r = 80 ≤ at r = 20 and ≤ 0.15", "KS WT vs reference"),
    ]
}

fn heavy_tail_contrast() -> Line {
    let pareto = Law::pareto(2.0, 1.0).unwrap();
    let dev = [1.0, 2.0, 5.0, 10.0, 100.0].iter().map(|&x| (pareto.ratio_tail(2.0, x).unwrap() - 0.125).abs()).fold(0.0, f64::max);
    let expo = Law::exponential(1.0).unwrap().ratio_tail(2.0, 20.0).unwrap();
    line(
        "10",
        "heavy-tail contrast",
        dev <= 1e-12 && expo < 1e-8,
        format!("Pareto(2) max |ratio − 2⁻³| = {dev:e}; exponential ratio_tail(2, 20) = {expo:e}"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut lines = vec![
        sandwich_suite(),
        reflection_identity(),
        skorokhod_axioms(),
        scale_identities(),
        drift_identities(),
        biased_walk(),
        rbm_oracle(),
        fclt_constants(),
    ];
    lines.extend(heavy_traffic());
    lines.push(heavy_tail_contrast());
    for l in &lines {
        println!("{} criterion {:<3} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.title, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {} passed, {failed} failed in {:.1} s", lines.len() - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
