//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Set `CONDWALK_ACCEPTANCE=1,5,7` to run a subset.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use condwalk::excursions::{total_variation_geometric, AnnulusSpec, ChainConfig, ChainMode, ChainSampler};
use condwalk::experiments::{
    adaptive_schedule, ks_statistic, median, run_big_holes, run_recurrence, run_survival_curve, run_uniform_law,
    BigHolesParams, Family, RecurrenceParams, RegionG, UniformLawParams,
};
use condwalk::hitting::{annulus_radii, excursion_hit_prob, psi_min, psi_n, solve_boundary_values, two_target_split};
use condwalk::kernel::GAMMA_STAR;
use condwalk::par::Execution;
use condwalk::range::SetSpec;
use condwalk::walk::{conditioned_step, Acceleration, NoObserver, StopReason, StoppingSpec, WalkKind, Walker};
use condwalk::{asymptotic_a, LatticePoint, PotentialKernel, RandomSource};

type Outcome = (bool, String);

fn p(x: i64, y: i64) -> LatticePoint {
    LatticePoint::new(x, y)
}

fn sites_within(r: f64) -> Vec<LatticePoint> {
    let m = r.floor() as i64;
    let mut v = Vec::new();
    for x in -m..=m {
        for y in -m..=m {
            let q = p(x, y);
            if !q.is_origin() && q.norm() <= r {
                v.push(q);
            }
        }
    }
    v
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let k = PotentialKernel::build(200.0).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let mut worst_nb: f64 = k.value(LatticePoint::ORIGIN).abs();
    for q in p(0, 0).neighbours() {
        worst_nb = worst_nb.max((k.value(q) - 1.0).abs());
    }
    let harm = sites_within(200.0).iter().map(|&q| k.harmonicity_residual(q).unwrap()).fold(0.0, f64::max);
    let d11 = (k.value(p(1, 1)) - 4.0 / PI).abs();
    let d20 = (k.value(p(2, 0)) - (4.0 - 8.0 / PI)).abs();
    let pass = k.value(LatticePoint::ORIGIN) == 0.0 && worst_nb <= 1e-12 && harm <= 1e-10 && d11 <= 1e-12 && d20 <= 1e-12 && secs < 1.0;
    (pass, format!("neighbour dev {worst_nb:.1e}, max harmonicity residual {harm:.1e}, |a(1,1)-4/pi| {d11:.1e}, |a(2,0)-(4-8/pi)| {d20:.1e}, build {secs:.3}s"))
}

fn criterion_2(k: &PotentialKernel) -> Outcome {
    let mut worst: f64 = 0.0;
    for q in sites_within(200.0) {
        let r = q.norm();
        if r >= 10.0 {
            worst = worst.max((k.value(q) - asymptotic_a(r).unwrap()).abs() * r * r);
        }
    }
    (worst <= 1.0, format!("max |a - asym| r^2 = {worst:.4} over 10 <= r <= 200"))
}

fn criterion_3(k: &PotentialKernel) -> Outcome {
    let mut worst: f64 = 0.0;
    for x in sites_within(200.0) {
        let sx = conditioned_step(k, x).unwrap();
        for (i, &y) in sx.neighbours.iter().enumerate() {
            if y.is_origin() {
                continue;
            }
            let sy = conditioned_step(k, y).unwrap();
            let back = sy.neighbours.iter().position(|&z| z == x).unwrap();
            let lhs = k.value(x).powi(2) * sx.weights[i];
            let rhs = k.value(y).powi(2) * sy.weights[back];
            worst = worst.max((lhs - rhs).abs());
        }
    }
    (worst <= 1e-12, format!("max |a(x)^2 P(x,y) - a(y)^2 P(y,x)| = {worst:.2e}"))
}

fn criterion_4(k: &PotentialKernel) -> Outcome {
    let domain: Vec<LatticePoint> = sites_within(30.0).into_iter().filter(|q| q.norm() > 1.0 && q.norm() < 30.0).collect();
    let inside: HashSet<LatticePoint> = domain.iter().copied().collect();
    let mut boundary = HashMap::new();
    for &x in &domain {
        for y in x.neighbours() {
            if !inside.contains(&y) && !y.is_origin() {
                boundary.insert(y, 1.0 / k.value(y));
            }
        }
    }
    let u = solve_boundary_values(k, &domain, &boundary, WalkKind::Conditioned).unwrap();
    let mut rng = RandomSource::new(4, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = domain[(rng.uniform() * domain.len() as f64) as usize];
        worst = worst.max((u[&x] - 1.0 / k.value(x)).abs());
    }
    (worst <= 1e-10, format!("max |E[1/a(stop)] - 1/a(x)| = {worst:.2e} over 50 starts, {} sites", domain.len()))
}

fn criterion_5(k: &PotentialKernel) -> Outcome {
    // scale n, outer radius n ln^2 n, |x| >= n / ln n, y in B(n) minus B(n / ln n)
    let n = 1000.0;
    let (r_in, radius) = annulus_radii(n);
    let configs = [
        (p(300, 0), p(0, 300)),
        (p(r_in.round() as i64, 0), p(500, 0)),
        (p(200, 150), p(-400, 600)),
        (p(900, 0), p(850, 30)),
        (p(20_000, 5_000), p(-300, -700)),
    ];
    let runs = 100_000u64;
    let walker = Walker::new(k, WalkKind::Conditioned, Acceleration::FAST);
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, &(x, y)) in configs.iter().enumerate() {
        let f = excursion_hit_prob(k, x, y, n).unwrap();
        let stop = StoppingSpec::exit(radius).with_target_site(y);
        let mut hits = 0u64;
        for s in 0..runs {
            let mut rng = RandomSource::derived(5, &[c as u64, s]);
            if walker.run(x, &stop, &mut rng, &mut NoObserver).unwrap().reason == StopReason::HitTarget {
                hits += 1;
            }
        }
        let mc = hits as f64 / runs as f64;
        let sd = (mc * (1.0 - mc) / runs as f64).sqrt();
        let ok = (mc - f.value).abs() <= (3.0 * sd).max(0.01);
        pass &= ok;
        parts.push(format!("{x}->{y}: formula {:.4} mc {mc:.4}", f.value));
    }
    (pass, format!("R = {radius:.0}; {}", parts.join("; ")))
}

fn srw_frequency(k: &PotentialKernel, start: LatticePoint, stop: &StoppingSpec<'_>, want: StopReason, tag: u64, runs: u64) -> (f64, f64) {
    let walker = Walker::new(k, WalkKind::Simple, Acceleration::Fast { min_jump: 16 });
    let mut hits = 0u64;
    for s in 0..runs {
        let mut rng = RandomSource::derived(6, &[tag, s]);
        if walker.run(start, stop, &mut rng, &mut NoObserver).unwrap().reason == want {
            hits += 1;
        }
    }
    let f = hits as f64 / runs as f64;
    (f, f * (1.0 - f) / runs as f64)
}

fn criterion_6(k: &PotentialKernel) -> Outcome {
    let (x, y, o) = (p(3, 0), p(0, 3), LatticePoint::ORIGIN);
    let radius = 50.0;
    let runs = 100_000;
    let hit = StopReason::HitTarget;
    let (h1, v_h1) = srw_frequency(k, x, &StoppingSpec::exit(radius).with_target_site(o), hit, 0, runs);
    let (h2, v_h2) = srw_frequency(k, x, &StoppingSpec::exit(radius).with_target_site(y), hit, 1, runs);
    let (q12, v_q12) = srw_frequency(k, o, &StoppingSpec::exit(radius).with_target_site(y), hit, 2, runs);
    let (q21, v_q21) = srw_frequency(k, y, &StoppingSpec::exit(radius).with_target_site(o), hit, 3, runs);
    let split = two_target_split(h1, h2, q12, q21).unwrap();
    // direct first-hit frequencies: stop at whichever target comes first
    let targets = [o, y];
    struct Pair([LatticePoint; 2]);
    impl condwalk::walk::Target for Pair {
        fn contains(&self, q: LatticePoint) -> bool {
            self.0.contains(&q)
        }
        fn distance_lower_bound(&self, q: LatticePoint) -> f64 {
            q.distance(self.0[0]).min(q.distance(self.0[1]))
        }
    }
    let pair = Pair(targets);
    let walker = Walker::new(k, WalkKind::Simple, Acceleration::Fast { min_jump: 16 });
    let stop = StoppingSpec::exit(radius).with_target_set(&pair);
    let (mut first_o, mut first_y) = (0u64, 0u64);
    for s in 0..runs {
        let mut rng = RandomSource::derived(6, &[4, s]);
        let out = walker.run(x, &stop, &mut rng, &mut NoObserver).unwrap();
        if out.reason == StopReason::HitSet {
            if out.end == o {
                first_o += 1;
            } else {
                first_y += 1;
            }
        }
    }
    let (d1, d2) = (first_o as f64 / runs as f64, first_y as f64 / runs as f64);
    // delta-method variance of the split from the four independent estimates
    let var_of = |f: &dyn Fn(f64, f64, f64, f64) -> f64| {
        let e = 1e-6;
        let g = [
            (f(h1 + e, h2, q12, q21) - f(h1 - e, h2, q12, q21)) / (2.0 * e),
            (f(h1, h2 + e, q12, q21) - f(h1, h2 - e, q12, q21)) / (2.0 * e),
            (f(h1, h2, q12 + e, q21) - f(h1, h2, q12 - e, q21)) / (2.0 * e),
            (f(h1, h2, q12, q21 + e) - f(h1, h2, q12, q21 - e)) / (2.0 * e),
        ];
        g[0] * g[0] * v_h1 + g[1] * g[1] * v_h2 + g[2] * g[2] * v_q12 + g[3] * g[3] * v_q21
    };
    let v1 = var_of(&|a, b, c, d| (a - b * d) / (1.0 - c * d)) + d1 * (1.0 - d1) / runs as f64;
    let v2 = var_of(&|a, b, c, d| (b - a * c) / (1.0 - c * d)) + d2 * (1.0 - d2) / runs as f64;
    let ok1 = (split.p1 - d1).abs() <= 3.0 * v1.sqrt();
    let ok2 = (split.p2 - d2).abs() <= 3.0 * v2.sqrt();
    (
        ok1 && ok2,
        format!(
            "h1 {h1:.4} h2 {h2:.4} q12 {q12:.4} q21 {q21:.4}; p1 {:.4} vs direct {d1:.4} (3sd {:.4}); p2 {:.4} vs direct {d2:.4} (3sd {:.4})",
            split.p1,
            3.0 * v1.sqrt(),
            split.p2,
            3.0 * v2.sqrt()
        ),
    )
}

fn criterion_7(k: &PotentialKernel) -> Outcome {
    let n = 256.0;
    let chains = 10_000;
    let spec = AnnulusSpec::new(n).unwrap();
    let sampler = ChainSampler::new(k, spec, ChainConfig { mode: ChainMode::Direct, ..Default::default() }).unwrap();
    let counts: Vec<u32> = (0..chains)
        .map(|i| {
            let mut rng = RandomSource::derived(7, &[i]);
            sampler.sample(p(1, 0), &mut rng, &mut NoObserver).unwrap().count
        })
        .collect();
    let psi_def = psi_min(k, n).unwrap();
    let psi_disp = psi_n(n).unwrap();
    let tv = total_variation_geometric(&counts, psi_def.value);
    let tv_disp = total_variation_geometric(&counts, psi_disp.value);
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / chains as f64;
    println!(
        "  note 7: the displayed closed form {:.5} of psi_n gives TV {tv_disp:.4}; it omits the constant of a",
        psi_disp.value
    );
    (tv <= 0.03, format!("TV(N, Geometric(psi_n = {:.5})) = {tv:.4}, mean N {mean:.3} vs 1/psi {:.3}", psi_def.value, 1.0 / psi_def.value))
}

fn ks_at(k: &PotentialKernel, n: f64, samples: usize, seed: u64, accel: Acceleration) -> f64 {
    let mut params = UniformLawParams::new(n, SetSpec::Circle { r: n }, samples);
    params.accel = accel;
    run_uniform_law(k, &params, seed, Execution::Sequential).unwrap().summary.ks
}

fn criterion_8(k: &PotentialKernel) -> Outcome {
    let t = Instant::now();
    let ks64 = ks_at(k, 64.0, 500, 8, Acceleration::FAST);
    let t_fast = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let ks64_naive = ks_at(k, 64.0, 500, 8, Acceleration::Naive);
    let t_naive = t.elapsed().as_secs_f64();
    let batches64: Vec<f64> = (0..5).map(|b| ks_at(k, 64.0, 500, 80 + b, Acceleration::FAST)).collect();
    let batches256: Vec<f64> = (0..5).map(|b| ks_at(k, 256.0, 500, 800 + b, Acceleration::FAST)).collect();
    let (m64, m256) = (median(&batches64), median(&batches256));
    let pass = ks64 <= 0.20 && m256 <= m64 && (ks64 - ks64_naive).abs() <= 0.05 && t_naive <= 900.0;
    (
        pass,
        format!(
            "KS(n=64) {ks64:.4} (naive {ks64_naive:.4}, {t_naive:.0}s; fast {t_fast:.0}s); median KS n=64 {m64:.4} {batches64:.3?}, n=256 {m256:.4} {batches256:.3?}"
        ),
    )
}

fn criterion_9(k: &PotentialKernel) -> Outcome {
    let curve = run_survival_curve(k, 256.0, 8, 1000, 9, Execution::Sequential).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for pt in &curve {
        let rel = (pt.unvisited - pt.predicted).abs() / pt.predicted;
        pass &= rel <= 0.25;
        parts.push(format!("k={} {:.3}/{:.3}", pt.k, pt.unvisited, pt.predicted));
    }
    // per-excursion hit probability from the exact kernel, averaged over entrance directions
    let n = 256.0;
    let (r_in, _) = annulus_radii(n);
    let h: f64 = (0..256)
        .map(|i| {
            let t = 2.0 * PI * (i as f64 + 0.5) / 256.0;
            let x = p((r_in * t.cos()).round() as i64, (r_in * t.sin()).round() as i64);
            excursion_hit_prob(k, x, p(256, 0), n).unwrap().value
        })
        .sum::<f64>()
        / 256.0;
    println!(
        "  note 9: mean exact hit per excursion {h:.4} vs leading order {:.4}; decay factor {:.3} vs {:.3}",
        n.ln().ln() / n.ln(),
        1.0 - h,
        (-n.ln().ln() / n.ln()).exp()
    );
    (pass, format!("MC/predicted: {}", parts.join(", ")))
}

fn criterion_10(k: &PotentialKernel) -> Outcome {
    let g = RegionG::parse("box:0.5,0.5,1,1", 0.1).unwrap();
    let run = run_big_holes(k, &BigHolesParams::new(g, vec![1, 2, 3], 20_000), 10, Execution::Sequential).unwrap();
    let s = &run.summary;
    let l2 = &s.levels[1];
    let tol = l2.p_escape_bias + 3.0 * l2.p_escape_se;
    let esc_ok = (l2.p_escape - 1.0 / (6.0 + GAMMA_STAR)).abs() <= tol;
    let pair_ok = s.pairs.iter().all(|q| q.joint <= 2.0 * q.formula && q.joint >= 0.5 * q.formula);
    let avoid_ok = s.levels.iter().all(|l| l.p_avoid >= 0.05);
    let pairs: Vec<String> = s.pairs.iter().map(|q| format!("({},{}) {:.4}/{:.4}", q.m, q.n, q.joint, q.formula)).collect();
    let avoid: Vec<String> = s.levels.iter().map(|l| format!("{:.3}", l.p_avoid)).collect();
    (
        esc_ok && pair_ok && avoid_ok,
        format!(
            "p_escape(2) {:.4} vs {:.4} (tol {tol:.4}, mc {:.4}); joint/formula {}; p_avoid {}; Kochen-Stone {:.3}",
            l2.p_escape,
            1.0 / (6.0 + GAMMA_STAR),
            l2.p_escape_mc,
            pairs.join(" "),
            avoid.join(" "),
            s.kochen_stone_event
        ),
    )
}

fn criterion_11(k: &PotentialKernel) -> Outcome {
    let start = p(1, 0);
    let scheduled = adaptive_schedule(k, start, 8, condwalk::experiments::recurrence::DEFAULT_RADIUS_CAP);
    // simulate the prefix of the schedule that fits under the radius cap
    let mut feasible = 0;
    for s in 1..=8 {
        if adaptive_schedule(k, start, s, condwalk::experiments::recurrence::DEFAULT_RADIUS_CAP).is_ok() {
            feasible = s;
        }
    }
    let mut detail = String::new();
    let mut freq_ok = true;
    if feasible > 0 {
        let run = run_recurrence(k, &RecurrenceParams::new(Family::Axis, feasible, 200), 11, Execution::Sequential).unwrap();
        freq_ok = run.passed();
        let parts: Vec<String> = run
            .summary
            .schedule
            .iter()
            .zip(&run.summary.scales)
            .map(|(e, sc)| format!("R_{}={:.3e} hit {:.3}", e.k, e.radius, sc.hit_target))
            .collect();
        detail = parts.join(", ");
    }
    let dir = std::env::temp_dir().join(format!("condwalk-acceptance-{}.csv", std::process::id()));
    std::fs::write(&dir, "x,y\n2,0\n5,-3\n").unwrap();
    let fam = Family::Finite { set: SetSpec::Points { path: dir.display().to_string() } };
    let finite = run_recurrence(k, &RecurrenceParams::new(fam, 0, 200), 11, Execution::Sequential).unwrap();
    std::fs::remove_file(&dir).ok();
    let finite_ok = finite.samples.iter().all(|s| s.visits.is_some());
    let sched = match &scheduled {
        Ok(_) => "8 scales scheduled".to_string(),
        Err(e) => format!("{e}"),
    };
    (
        scheduled.is_ok() && freq_ok && finite_ok,
        format!(
            "{sched}; simulated {feasible} scales: {detail}; finite set max visits {}",
            finite.summary.max_visits.unwrap_or(0)
        ),
    )
}

fn criterion_12(k: &PotentialKernel) -> Outcome {
    let params = UniformLawParams::new(32.0, SetSpec::Circle { r: 32.0 }, 200);
    let a = run_uniform_law(k, &params, 12, Execution::Sequential).unwrap().to_json().unwrap();
    let b = run_uniform_law(k, &params, 12, Execution::Sequential).unwrap().to_json().unwrap();
    let c = run_uniform_law(k, &params, 12, Execution::threads(4)).unwrap();
    let g = RegionG::parse("box:0.5,0.5,1,1", 0.1).unwrap();
    let bh = BigHolesParams::new(g, vec![1, 2], 300);
    let d = run_big_holes(k, &bh, 12, Execution::Sequential).unwrap();
    let e = run_big_holes(k, &bh, 12, Execution::threads(3)).unwrap();
    let same_json = a == b;
    let same_threads = a == c.to_json().unwrap();
    let same_bh = d.to_json().unwrap() == e.to_json().unwrap();
    let ks = ks_statistic(&c.samples.iter().map(|s| s.v).collect::<Vec<_>>()).unwrap().ks;
    (
        same_json && same_threads && same_bh,
        format!("rerun identical {same_json}, 4 threads identical {same_threads}, big-holes 3 threads identical {same_bh} (KS {ks:.3})"),
    )
}

fn main() {
    let only: Option<HashSet<u32>> = std::env::var("CONDWALK_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let kernel = PotentialKernel::build(256.0).unwrap();
    let k = &kernel;
    let criteria: Vec<(u32, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(|| criterion_2(k))),
        (3, Box::new(|| criterion_3(k))),
        (4, Box::new(|| criterion_4(k))),
        (5, Box::new(|| criterion_5(k))),
        (6, Box::new(|| criterion_6(k))),
        (7, Box::new(|| criterion_7(k))),
        (8, Box::new(|| criterion_8(k))),
        (9, Box::new(|| criterion_9(k))),
        (10, Box::new(|| criterion_10(k))),
        (11, Box::new(|| criterion_11(k))),
        (12, Box::new(|| criterion_12(k))),
    ];
    let mut failed = Vec::new();
    for (id, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => (false, format!("panicked: {}", e.downcast_ref::<String>().cloned().unwrap_or_default())),
        };
        println!("criterion {id}: {} [{:.1}s] {detail}", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
