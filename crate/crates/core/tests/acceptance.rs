//! Acceptance suite. One line per criterion; exits non-zero if any fails.
//!
//! Run a subset with `cargo test --test acceptance -- 3 7` (criterion numbers).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use nonadditivity::channels::{kraus_from_isometry, product_channel_on_max_entangled, PartialTraceChannel};
use nonadditivity::dvoretzky::{estimate_m, shrinking_experiment, window_experiment};
use nonadditivity::ensembles::{haar_isometry, random_subspace_basis, Field, Isometry, RngStream};
use nonadditivity::io::write_json;
use nonadditivity::linalg::{
    hermitian_eigenvalues, partial_trace_2, schatten_from_singular_values, schatten_norm, schmidt_coefficients,
    singular_values, CMatrix, DensityMatrix, PureState, SchattenOrder, C64,
};
use nonadditivity::optimize::{
    estimate_max_output_norm, random_unit_vector, sphere_ascent, AscentConfig, Sense, SubspaceNorm,
};
use nonadditivity::stats::spearman_rho;
use nonadditivity::violation::{run_scan, ScanGrid};
use rand::Rng;

type Outcome = Result<String, String>;

fn order(q: f64) -> SchattenOrder {
    SchattenOrder::new(q).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `(Φ ⊗ Φ̄)(ψ_m)` by summing over every index of the Kraus representation.
fn product_output_by_contraction(ch: &PartialTraceChannel) -> CMatrix {
    let kraus = kraus_from_isometry(ch);
    let ops = kraus.operators();
    let (d, m) = (ch.output_dim(), ch.input_dim());
    let n = d * d;
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for kj in ops {
        for kl in ops {
            // column vector (K_j ⊗ K̄_l) ψ_m, entry (a, b) = Σ_k K_j[a,k] conj(K_l[b,k]) / sqrt(m)
            let mut v = vec![C64::new(0.0, 0.0); n];
            for a in 0..d {
                for b in 0..d {
                    let mut s = C64::new(0.0, 0.0);
                    for k in 0..m {
                        s += kj.get(a, k) * kl.get(b, k).conj();
                    }
                    v[a * d + b] = s / (m as f64).sqrt();
                }
            }
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] += v[i] * v[j].conj();
                }
            }
        }
    }
    CMatrix::from_row_major(n, n, &out).unwrap()
}

fn ac1() -> Outcome {
    let mut rng = RngStream::new(0xAC01, 0);
    let mut worst = f64::INFINITY;
    for i in 0..200 {
        let d = 2 + i % 7;
        let m = rng.random_range(1..=d * d);
        let field = if i % 2 == 0 { Field::Complex } else { Field::Real };
        let v = haar_isometry(m, d, d, field, &mut rng).map_err(|e| e.to_string())?;
        let sigma = product_channel_on_max_entangled(&PartialTraceChannel::new(v)).map_err(|e| e.to_string())?;
        worst = worst.min(sigma.lambda_max() - m as f64 / (d * d) as f64);
    }
    check(worst >= -1e-9, format!("min(lambda_max - m/d^2) = {worst:.3e} over 200 channels"))
}

fn ac2() -> Outcome {
    let mut worst_state = 0.0f64;
    let mut worst_lambda = 0.0f64;
    for d in 2..=4 {
        let ch = PartialTraceChannel::new(Isometry::identity(d, d));
        let sigma = product_channel_on_max_entangled(&ch).map_err(|e| e.to_string())?;
        let oracle = product_output_by_contraction(&ch);
        let n = d * d;
        let psi: Vec<C64> =
            (0..n).map(|k| if k / d == k % d { C64::new(1.0 / (d as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) }).collect();
        let proj = CMatrix::outer(&DVector::from_vec(psi.clone()), &DVector::from_vec(psi));
        worst_state = worst_state.max(sigma.matrix().max_abs_diff(&oracle)).max(sigma.matrix().max_abs_diff(&proj));
        worst_lambda = worst_lambda.max((sigma.lambda_max() - 1.0).abs());
    }
    check(
        worst_state <= 1e-10 && worst_lambda <= 1e-10,
        format!("max entry error {worst_state:.1e}, |lambda_max - 1| {worst_lambda:.1e}"),
    )
}

fn ac3() -> Outcome {
    let mut worst = 0.0f64;
    for d in [2usize, 4, 16] {
        let rho = DensityMatrix::maximally_mixed(d);
        for p in [1.5, 2.0, 3.0, f64::INFINITY] {
            let got = schatten_norm(rho.matrix(), order(p)).map_err(|e| e.to_string())?;
            let want = (d as f64).powf(1.0 / p - 1.0);
            worst = worst.max((got - want).abs());
        }
    }
    check(worst <= 1e-12, format!("max error {worst:.1e}"))
}

fn ac4() -> Outcome {
    let mut rng = RngStream::new(0xAC04, 0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = 2 + i % 5;
        let r = 1 + (i / 5) % 6;
        let m = rng.random_range(1..=d * r);
        let v = haar_isometry(m, d, r, Field::Complex, &mut rng).map_err(|e| e.to_string())?;
        let ch = PartialTraceChannel::new(v);
        let x = PureState::new(random_unit_vector(m, &mut rng)).map_err(|e| e.to_string())?;
        let y = ch.embed(&x).map_err(|e| e.to_string())?;
        let rho = partial_trace_2(&y.projector(), d, r).map_err(|e| e.to_string())?;
        let mut eig = hermitian_eigenvalues(&rho).map_err(|e| e.to_string())?;
        eig.sort_by(|a, b| b.total_cmp(a));
        let schmidt = schmidt_coefficients(&y).map_err(|e| e.to_string())?;
        for k in 0..d {
            let s2 = schmidt.get(k).map_or(0.0, |s| s * s);
            worst = worst.max((eig[k] - s2).abs());
        }
    }
    check(worst <= 1e-10, format!("max |lambda - s^2| = {worst:.1e} over 100 pairs"))
}

fn ac5() -> Outcome {
    let mut rng = RngStream::new(0xAC05, 0);
    let qs = [2.5, 4.0, 10.0, f64::INFINITY];
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..10_000 {
        let d = 1 + i % 16;
        let a = nonadditivity::ensembles::complex_gaussian_matrix(d, d, &mut rng);
        let s = singular_values(&a).map_err(|e| e.to_string())?;
        let hs = a.hs_norm();
        for q in qs {
            let nq = schatten_from_singular_values(&s, order(q));
            let low = (d as f64).powf(1.0 / q - 0.5) * hs;
            let excess = ((low - nq) / hs).max((nq - hs) / hs);
            worst = worst.max(excess);
            if excess > 1e-10 {
                violations += 1;
            }
        }
    }
    check(violations == 0, format!("{violations} violations, worst relative excess {worst:.1e}"))
}

fn ac6() -> Outcome {
    let mut rng = RngStream::new(0xAC06, 0);
    let s = estimate_m(32, order(4.0), 500, &mut rng).map_err(|e| e.to_string())?;
    check(
        s.lower_bound_holds() && s.holder_bound_holds(),
        format!(
            "floor {:.5} <= M_hat {:.5} (+/- {:.1e}) <= Hoelder cap {:.5}",
            32f64.powf(-0.25),
            s.m_hat,
            3.0 * s.m_stderr,
            s.holder_cap()
        ),
    )
}

fn ac7() -> Outcome {
    let mut rng = RngStream::new(0xAC07, 0);
    let s = estimate_m(64, SchattenOrder::INFINITY, 500, &mut rng).map_err(|e| e.to_string())?;
    let scaled = s.m_hat * 8.0;
    check((1.8..=2.3).contains(&scaled), format!("E||X||_inf * sqrt(64) = {scaled:.4}"))
}

fn ac8() -> Outcome {
    let (d, q) = (16, order(4.0));
    let mut rng = RngStream::new(0xAC08, 0);
    let stats = estimate_m(d, q, 500, &mut rng).map_err(|e| e.to_string())?;
    let win = window_experiment(d, q, 64, 20, &AscentConfig::default(), &stats, &mut rng).map_err(|e| e.to_string())?;
    let spread = win.worst_spread();
    check(
        spread <= 3.0,
        format!("worst max/min ratio {spread:.4} over 20 trials, eps_eff {:.3}", win.epsilon_effective),
    )
}

fn ac9() -> Outcome {
    let ms = [16usize, 32, 64, 128, 256];
    let mut rng = RngStream::new(0xAC09, 0);
    let rows = shrinking_experiment(16, SchattenOrder::INFINITY, &ms, 20, &AscentConfig::default(), &mut rng)
        .map_err(|e| e.to_string())?;
    let cs: Vec<f64> = rows.iter().map(|r| r.empirical_c).collect();
    let in_range = rows.iter().filter(|r| r.m >= 64).all(|r| (0.8..=4.0).contains(&r.empirical_c));
    let rho = spearman_rho(&ms.map(|m| m as f64), &cs);
    let listed: Vec<String> = rows.iter().map(|r| format!("{}:{:.3}", r.m, r.empirical_c)).collect();
    check(in_range && rho <= 0.5, format!("C by m [{}], Spearman {rho:.2}", listed.join(" ")))
}

/// `max ||Φ(xx^dag)||_2` over a Bloch-sphere mesh, via `||A||_4^4 = tr((A^dag A)^2)`.
fn mesh_max_two_norm(v: &Isometry, n: usize) -> f64 {
    let w = v.matrix();
    let mut best = 0.0f64;
    for i in 0..n {
        let theta = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let phi = std::f64::consts::TAU * j as f64 / n as f64;
            let x = [C64::new(theta.cos(), 0.0), C64::from_polar(theta.sin(), phi)];
            let y: Vec<C64> = (0..9).map(|k| w.get(k, 0) * x[0] + w.get(k, 1) * x[1]).collect();
            // G = A^dag A with A[a][b] = y[3a + b]
            let mut tr = 0.0;
            for b in 0..3 {
                for c in 0..3 {
                    let mut g = C64::new(0.0, 0.0);
                    for a in 0..3 {
                        g += y[3 * a + b].conj() * y[3 * a + c];
                    }
                    tr += g.norm_sqr();
                }
            }
            best = best.max(tr.sqrt());
        }
    }
    best
}

fn ac10() -> Outcome {
    let mut rng = RngStream::new(0xAC10, 0);
    // (a) gradient against central differences
    let mut worst_grad = 0.0f64;
    let h = 1e-5;
    for i in 0..100 {
        let m = 2 + i % 7;
        let w = random_subspace_basis(m, 4, &mut rng).map_err(|e| e.to_string())?;
        let obj = SubspaceNorm::new(&w, order(4.0));
        let c = random_unit_vector(m, &mut rng);
        let (_, g) = obj.value_and_gradient(&c);
        let mut fd = DVector::from_element(m, C64::new(0.0, 0.0));
        for k in 0..m {
            for (unit, part) in [(C64::new(1.0, 0.0), 0), (C64::new(0.0, 1.0), 1)] {
                let (mut cp, mut cm) = (c.clone(), c.clone());
                cp[k] += unit * h;
                cm[k] -= unit * h;
                let diff = (obj.value(&cp) - obj.value(&cm)) / (2.0 * h);
                if part == 0 {
                    fd[k].re = diff;
                } else {
                    fd[k].im = diff;
                }
            }
        }
        worst_grad = worst_grad.max((&fd - &g).norm() / g.norm());
    }
    // (b) mesh oracle on C^2 -> M_3
    let cfg = AscentConfig::default();
    let mut worst_mesh = 0.0f64;
    for _ in 0..3 {
        let v = haar_isometry(2, 3, 3, Field::Complex, &mut rng).map_err(|e| e.to_string())?;
        let mesh = mesh_max_two_norm(&v, 1000);
        let est = estimate_max_output_norm(&PartialTraceChannel::new(v), SchattenOrder::TWO, &cfg, &mut rng)
            .map_err(|e| e.to_string())?;
        worst_mesh = worst_mesh.max((est.best_value - mesh).abs() / mesh);
    }
    // (c) accepted steps never go backwards
    let mut backwards = 0;
    for i in 0..40 {
        let q = [order(3.0), order(4.0), order(10.0), SchattenOrder::INFINITY][i % 4];
        let sense = if i % 8 < 4 { Sense::Maximize } else { Sense::Minimize };
        let w = random_subspace_basis(12, 5, &mut rng).map_err(|e| e.to_string())?;
        let obj = SubspaceNorm::new(&w, q);
        let run = sphere_ascent(&obj, random_unit_vector(12, &mut rng), sense, &cfg);
        backwards += run
            .history
            .windows(2)
            .filter(|p| match sense {
                Sense::Maximize => p[1] < p[0],
                Sense::Minimize => p[1] > p[0],
            })
            .count();
    }
    check(
        worst_grad <= 1e-6 && worst_mesh < 5e-4 && backwards == 0,
        format!("gradient rel err {worst_grad:.1e}, mesh rel diff {worst_mesh:.1e}, backward steps {backwards}"),
    )
}

fn ac11() -> Outcome {
    let grid = ScanGrid::default();
    let out = run_scan(&grid, &AscentConfig::default(), 0xAC11).map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    for r in &out.reports {
        let cap_ok = r.product_entropy_ub <= r.certified_entropy_cap + 1e-9;
        let s = r.single_norm();
        let range_ok = s >= r.norm_floor() - 1e-9 && s <= 1.0 + 1e-9;
        if !cap_ok || !range_ok {
            bad.push(format!("(p={}, d={}, seed={})", r.p, r.d, r.seed));
        }
    }
    let g8 = out.summary_for(3.0, 8).map(|s| s.mean_additivity_gap).unwrap_or(f64::NAN);
    let g32 = out.summary_for(3.0, 32).map(|s| s.mean_additivity_gap).unwrap_or(f64::NAN);
    let fractions: Vec<String> =
        out.summary.iter().map(|s| format!("({},{}):{:.1}", s.p, s.d, s.violation_fraction)).collect();
    check(
        bad.is_empty() && g32 > g8,
        format!(
            "{} cells, {} out of bounds {:?}; mean additivity gap p=3: d=8 {g8:.4}, d=32 {g32:.4}; violation fraction {}",
            out.reports.len(),
            bad.len(),
            bad,
            fractions.join(" ")
        ),
    )
}

fn run_in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn ac12() -> Outcome {
    let dir = std::env::temp_dir().join(format!("nonadd-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let cfg = AscentConfig { restarts: 6, max_iters: 200, sample_baseline: 100, ..Default::default() };
    let produce = |threads: usize| -> Result<Vec<PathBuf>, String> {
        run_in_pool(threads, || {
            let mut paths = Vec::new();
            let grid = ScanGrid { p_values: vec![2.0, 3.0], d_values: vec![4, 6], trials: 2, ..Default::default() };
            let scan = run_scan(&grid, &cfg, 12).map_err(|e| e.to_string())?;
            let mut rng = RngStream::new(12, 0);
            let stats = estimate_m(8, order(4.0), 200, &mut rng).map_err(|e| e.to_string())?;
            let win = window_experiment(8, order(4.0), 16, 4, &cfg, &stats, &mut rng).map_err(|e| e.to_string())?;
            for (name, res) in [
                ("scan", write_json(&dir.join(format!("scan-{threads}.json")), &scan)),
                ("stats", write_json(&dir.join(format!("stats-{threads}.json")), &stats)),
                ("window", write_json(&dir.join(format!("window-{threads}.json")), &win)),
            ] {
                res.map_err(|e| e.to_string())?;
                paths.push(dir.join(format!("{name}-{threads}.json")));
            }
            Ok(paths)
        })
    };
    let one = produce(1)?;
    let four = produce(4)?;
    let mut differing = Vec::new();
    for (a, b) in one.iter().zip(&four) {
        if std::fs::read(a).map_err(|e| e.to_string())? != std::fs::read(b).map_err(|e| e.to_string())? {
            differing.push(a.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    check(differing.is_empty(), format!("3 report files at 1 vs 4 threads, differing: {differing:?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("certified eigenvalue bound", ac1),
        ("identity equality case", ac2),
        ("maximally mixed norm", ac3),
        ("Schmidt/eigenvalue identity", ac4),
        ("Schatten sandwich", ac5),
        ("Hoelder chain for M", ac6),
        ("operator-norm mean", ac7),
        ("concentration window", ac8),
        ("shrinking sweep", ac9),
        ("optimizer correctness", ac10),
        ("violation scan", ac11),
        ("determinism across threads", ac12),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("AC{n:<2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("AC{n:<2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
