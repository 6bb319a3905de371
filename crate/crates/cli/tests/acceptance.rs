//! Acceptance suite. Runs every criterion in one process and prints one
//! `PASS`/`FAIL`/`SKIP` line per criterion; exits non-zero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use dogma::evidential::{combine, discount, pignistic, pignistic_free, GridSpec, MassCell};
use dogma::filter::{DogmaMode, FilterStep};
use dogma::measurement::{raytrace, segment_ground, GroundParams, Label, PointCloud, Pose2};
use dogma::pipeline::{run_pipeline, simulate_run, PipelineConfig, SimRun};
use dogma::predict::{evaluate, EvalConfig, EvalSequence, PfState, PredictorKind, SEED_FRAMES, SEQUENCE_LEN};
use dogma::sim::{labeled_ground_scene, scan, standard_scene, EgoTrajectory, Owner, Rect, SceneConfig, GROUND_LABEL};
use dogma_cli::{cmd_eval, cmd_pipeline, cmd_simulate, EvalOptions, OutputFormat, PipelineOptions, SceneSource, SimulateOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

/// Environment variable naming a directory of KITTI-derived runs.
const KITTI_ENV: &str = "DOGMA_KITTI_DIR";

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_cell(rng: &mut ChaCha8Rng) -> MassCell {
    // Uniform on the mass simplex via sorted uniforms.
    let (a, b): (f64, f64) = (rng.random(), rng.random());
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    MassCell::new(lo, hi - lo).unwrap()
}

/// Dempster's rule written out over the 3×3 table of focal-set products.
fn dempster_table(a: MassCell, b: MassCell) -> (f64, f64, f64, f64) {
    let fa = [(a.m_occ, 'O'), (a.m_free, 'F'), (1.0 - a.m_occ - a.m_free, 'U')];
    let fb = [(b.m_occ, 'O'), (b.m_free, 'F'), (1.0 - b.m_occ - b.m_free, 'U')];
    let (mut o, mut f, mut u, mut k) = (0.0, 0.0, 0.0, 0.0);
    for (ma, sa) in fa {
        for (mb, sb) in fb {
            let m = ma * mb;
            match (sa, sb) {
                ('O', 'F') | ('F', 'O') => k += m,
                ('U', 'U') => u += m,
                ('O', _) | (_, 'O') => o += m,
                _ => f += m,
            }
        }
    }
    let z = 1.0 - k;
    (o / z, f / z, u / z, k)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut norm, mut comm, mut assoc) = (0.0f64, 0.0f64, 0.0f64);
    let mut identity = true;
    let mut checked = 0;
    for _ in 0..10_000 {
        let (a, b, c) = (random_cell(&mut rng), random_cell(&mut rng), random_cell(&mut rng));
        identity &= combine(a, MassCell::VACUOUS).unwrap() == a && combine(MassCell::VACUOUS, a).unwrap() == a;
        if a.conflict(&b) >= 0.99 {
            continue;
        }
        checked += 1;
        let ab = combine(a, b).unwrap();
        let (o, f, u, _) = dempster_table(a, b);
        norm = norm
            .max((ab.m_occ - o).abs())
            .max((ab.m_free - f).abs())
            .max((ab.m_unknown() - u).abs())
            .max((o + f + u - 1.0).abs());
        let ba = combine(b, a).unwrap();
        comm = comm.max((ab.m_occ - ba.m_occ).abs()).max((ab.m_free - ba.m_free).abs());
        if ab.conflict(&c) < 0.99 && b.conflict(&c) < 0.99 {
            let left = combine(ab, c).unwrap();
            let bc = combine(b, c).unwrap();
            if a.conflict(&bc) < 0.99 {
                let right = combine(a, bc).unwrap();
                assoc = assoc
                    .max((left.m_occ - right.m_occ).abs())
                    .max((left.m_free - right.m_free).abs());
            }
        }
    }
    let ex = combine(MassCell::new(0.6, 0.2).unwrap(), MassCell::new(0.5, 0.3).unwrap()).unwrap();
    let example = (ex.m_occ - 0.7222).abs() < 1e-4 && (ex.m_free - 0.2222).abs() < 1e-4;
    let secs = start.elapsed().as_secs_f64();
    let ok = norm <= 1e-12 && comm <= 1e-12 && assoc <= 1e-9 && identity && example && secs < 1.0;
    verdict(
        ok,
        format!(
            "{checked} pairs: norm {norm:.1e}, comm {comm:.1e}, assoc {assoc:.1e}, vacuous identity {identity}, \
             example ({:.4},{:.4}), {secs:.3} s",
            ex.m_occ, ex.m_free
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut identity = true;
    for _ in 0..10_000 {
        let c = random_cell(&mut rng);
        worst = worst.max((pignistic(c) + pignistic_free(c) - 1.0).abs());
        identity &= discount(c, 1.0) == c;
    }
    verdict(
        worst <= 1e-12 && identity,
        format!("max |betP(O)+betP(F)-1| {worst:.1e}, alpha=1 identity {identity}"),
    )
}

/// Does the closed square `[x0,x1]×[y0,y1]` meet the segment `p→q`?
/// Liang–Barsky clipping.
fn segment_meets_box(p: [f64; 2], q: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> bool {
    let d = [q[0] - p[0], q[1] - p[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        for (num, den) in [(p[axis] - lo[axis], -d[axis]), (hi[axis] - p[axis], d[axis])] {
            if den == 0.0 {
                if num < 0.0 {
                    return false;
                }
            } else {
                let t = num / den;
                if den < 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
        }
    }
    t0 <= t1
}

fn wall_scene(rng: &mut ChaCha8Rng, seed: u64) -> SceneConfig {
    let mut cfg = SceneConfig::from_json("{}").unwrap();
    let dist = rng.random_range(3.0..18.0);
    let half = rng.random_range(2.0..15.0);
    let along = rng.random_range(-3.0..3.0);
    let thick = rng.random_range(0.2..1.0);
    let (a0, a1) = (along - half, along + half);
    let (n0, n1) = (dist, dist + thick);
    cfg.static_shapes = vec![match rng.random_range(0..4) {
        0 => Rect::new([a0, n0], [a1, n1]),
        1 => Rect::new([a0, -n1], [a1, -n0]),
        2 => Rect::new([n0, a0], [n1, a1]),
        _ => Rect::new([-n1, a0], [-n0, a1]),
    }];
    cfg.seed = seed;
    cfg.sensor.beam_count = 360;
    cfg.ground_plane.enabled = false;
    cfg.ego = EgoTrajectory::ConstantVelocity {
        start: Pose2::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-3.1..3.1),
        ),
        velocity: [0.0, 0.0],
    };
    cfg
}

fn criterion_3() -> Outcome {
    let spec = GridSpec::default();
    let cs = spec.side_length / spec.cells_per_side as f64;
    let centre = (spec.cells_per_side / 2) as f64 + 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut beams, mut bad_hits, mut beyond) = (0usize, 0usize, 0usize);
    for s in 0..100 {
        let cfg = wall_scene(&mut rng, s);
        let state = cfg.initial_state();
        let cloud = scan(&state, &cfg).cloud;
        let pose = cloud.sensor_pose;
        let anchor = [(pose.x / cs).round() * cs, (pose.y / cs).round() * cs];
        for p in &cloud.points {
            beams += 1;
            let (h, c) = (pose.heading.sin(), pose.heading.cos());
            let (px, py) = (p.x as f64, p.y as f64);
            let hit = [pose.x + c * px - h * py, pose.y + h * px + c * py];
            let col = ((hit[0] - anchor[0]) / cs + centre).floor() as usize;
            let row = (centre - (hit[1] - anchor[1]) / cs).floor() as usize;

            let single = PointCloud::new(vec![*p], pose, 0);
            let grid = raytrace(&single, &spec);
            let occupied: Vec<usize> = (0..grid.labels.len())
                .filter(|&i| grid.labels[i] == Label::Occupied)
                .collect();
            if occupied != [row * spec.cells_per_side + col] {
                bad_hits += 1;
            }
            let eps = 1e-9;
            for i in (0..grid.labels.len()).filter(|&i| grid.labels[i] == Label::Free) {
                let (r, c) = (i / spec.cells_per_side, i % spec.cells_per_side);
                let x0 = anchor[0] + (c as f64 - centre) * cs;
                let y1 = anchor[1] + (centre - r as f64) * cs;
                let lo = [x0 - eps, y1 - cs - eps];
                let hi = [x0 + cs + eps, y1 + eps];
                if (r, c) == (row, col) || !segment_meets_box([pose.x, pose.y], hit, lo, hi) {
                    beyond += 1;
                }
            }
        }
    }
    verdict(
        beams > 5_000 && bad_hits == 0 && beyond == 0,
        format!("{beams} beams in 100 scenes: {bad_hits} wrong hit cells, {beyond} FREE cells off the beam"),
    )
}

fn criterion_4() -> Outcome {
    let (mut worst_ground, mut worst_obstacle) = (1.0f64, 0.0f64);
    for seed in 0..20 {
        let scene = labeled_ground_scene(seed, 1000, 200, 0.02, 0.0);
        let params = GroundParams { seed, ..GroundParams::default() };
        let mask = match segment_ground(&scene.cloud, &params) {
            Ok(seg) => seg.ground_mask,
            Err(e) => return Outcome::Fail(format!("seed {seed}: {e}")),
        };
        let (mut g, mut gr, mut o, mut or) = (0usize, 0usize, 0usize, 0usize);
        for (label, removed) in scene.labels.iter().zip(mask) {
            if *label == GROUND_LABEL {
                g += 1;
                gr += removed as usize;
            } else {
                o += 1;
                or += removed as usize;
            }
        }
        worst_ground = worst_ground.min(gr as f64 / g as f64);
        worst_obstacle = worst_obstacle.max(or as f64 / o as f64);
    }
    verdict(
        worst_ground >= 0.99 && worst_obstacle <= 0.01,
        format!("worst seed: {:.2}% ground removed, {:.2}% obstacle removed", worst_ground * 100.0, worst_obstacle * 100.0),
    )
}

fn filter_run(scene_name: &str, seed: u64, frames: usize, cfg: &PipelineConfig, keep: bool) -> (SimRun, Vec<FilterStep>) {
    let mut scene = standard_scene(scene_name).unwrap();
    scene.seed = seed;
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let run = simulate_run(&scene, frames, &cfg).unwrap();
    let steps = run_pipeline(&run.measurements, &run.velocities, &cfg, keep).unwrap();
    (run, steps)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = PipelineConfig::default();
    let (run, steps) = filter_run("static_corridor", 0, 50, &cfg, false);
    let secs = start.elapsed().as_secs_f64();
    let v_max = cfg.effective_filter().v_max;
    let (mut stat, mut total, mut speed, mut min_frame) = (0usize, 0usize, 0.0, 1.0f64);
    for k in 20..50 {
        let (s, gt) = (&steps[k], &run.truths[k]);
        let occ: Vec<usize> = (0..gt.occupied.len()).filter(|&i| gt.occupied[i]).collect();
        let st = occ.iter().filter(|&&i| !s.dynamic[i]).count();
        stat += st;
        total += occ.len();
        min_frame = min_frame.min(st as f64 / occ.len() as f64);
        speed += occ
            .iter()
            .map(|&i| s.dogma.velocity_x()[i].hypot(s.dogma.velocity_y()[i]) * v_max)
            .sum::<f64>()
            / occ.len() as f64;
    }
    let share = stat as f64 / total as f64;
    let speed = speed / 30.0;
    verdict(
        share >= 0.95 && speed < 0.5 && secs < 60.0,
        format!("{:.1}% gated static (worst frame {:.1}%), mean speed {speed:.3} m/s, {secs:.1} s", share * 100.0, min_frame * 100.0),
    )
}

fn criterion_6() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let (run, steps) = filter_run("crossing_vehicle", seed, 50, &cfg, false);
        let (mut frac, mut vx, mut vy, mut n) = (0.0, 0.0, 0.0, 0.0);
        for k in 30..50 {
            let (s, gt) = (&steps[k], &run.truths[k]);
            let agent: Vec<usize> = gt.agent_cells().collect();
            frac += agent.iter().filter(|&&i| s.dynamic[i]).count() as f64 / agent.len() as f64;
            let (mut wx, mut wy, mut ww) = (0.0, 0.0, 0.0);
            for &i in agent.iter().filter(|&&i| s.dynamic[i]) {
                let w = s.stats[i].m_occ;
                wx += w * s.stats[i].mean[0];
                wy += w * s.stats[i].mean[1];
                ww += w;
            }
            if ww > 0.0 {
                vx += wx / ww;
                vy += wy / ww;
            }
            n += 1.0;
        }
        let (frac, vx, vy) = (frac / n, vx / n, vy / n);
        let (mag, angle) = (vx.hypot(vy), vy.atan2(vx).to_degrees());
        ok &= frac >= 0.6 && (mag - 5.0).abs() <= 1.5 && angle.abs() <= 20.0;
        parts.push(format!("seed {seed}: {:.0}% dyn, |v| {mag:.2}, {angle:+.1}°", frac * 100.0));
    }
    verdict(ok, parts.join("; "))
}

/// Spearman correlation of `v` with its index, ties at average rank.
fn spearman(v: &[f64]) -> f64 {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut rank = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            rank[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    let pos: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mean = (n - 1) as f64 / 2.0;
    let cov: f64 = rank.iter().zip(&pos).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let var_r: f64 = rank.iter().map(|a| (a - mean).powi(2)).sum();
    let var_p: f64 = pos.iter().map(|b| (b - mean).powi(2)).sum();
    cov / (var_r * var_p).sqrt()
}

/// 4 seeds × 5 windows of a 60-frame run; optionally masked to truth-agent cells.
fn sequences(scene: &str, cfg: &PipelineConfig, masked: bool) -> Vec<EvalSequence> {
    let mut out = Vec::new();
    for seed in 0..4 {
        let (run, steps) = filter_run(scene, seed, 60, cfg, true);
        for w in [20usize, 25, 30, 35, 40] {
            let win = &steps[w..w + SEQUENCE_LEN];
            let frames: Vec<_> = win.iter().map(|s| s.dogma.clone()).collect();
            let mut seq = EvalSequence::from_frames(&frames);
            let last = &win[SEED_FRAMES - 1];
            seq.pf_state = Some(PfState {
                particles: last.particles.clone().unwrap(),
                dynamic: last.dynamic.clone(),
                posterior: last.posterior.clone(),
                ego_velocity: run.velocities[w + SEED_FRAMES - 1],
            });
            if masked {
                seq.region = Some(
                    (SEED_FRAMES..SEQUENCE_LEN)
                        .map(|k| run.truths[w + k].owner.iter().map(|o| matches!(o, Owner::Agent(_))).collect())
                        .collect(),
                );
            }
            out.push(seq);
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let cfg = PipelineConfig { mode: DogmaMode::Dst, ..PipelineConfig::default() };
    let kinds = [PredictorKind::Static, PredictorKind::Pf];
    let ec = EvalConfig::default();
    let full = evaluate(&sequences("crossing_vehicle", &cfg, false), &kinds, &ec).unwrap();
    let masked = evaluate(&sequences("crossing_vehicle", &cfg, true), &kinds, &ec).unwrap();
    let still = evaluate(&sequences("static_corridor", &cfg, false), &kinds, &ec).unwrap();

    let (rho_s, rho_p) = (spearman(&full.curve("static")), spearman(&full.curve("pf")));
    let (ms, mp) = (masked.curve("static"), masked.curve("pf"));
    let b = (9..15).all(|k| mp[k] < ms[k]);
    let (ss, sp) = (still.curve("static"), still.curve("pf"));
    let c = ss.iter().zip(&sp).all(|(s, p)| s <= p);
    verdict(
        rho_s > 0.95 && rho_p > 0.95 && b && c,
        format!(
            "(a) rho static {rho_s:.3}, pf {rho_p:.3}; (b) agent region step 15 pf {:.4} vs static {:.4}: {b}; \
             (c) static <= pf on static scene: {c}",
            mp[14], ms[14]
        ),
    )
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let mut opts = SimulateOptions::new(SceneSource::Standard("crossing_vehicle".into()), &sim);
    opts.frame_count = Some(40);
    cmd_simulate(&opts).unwrap();
    let cfg = tmp.path().join("pipeline.json");
    fs::write(&cfg, r#"{"dump_particles": true}"#).unwrap();
    let once = |tag: &str| {
        let run = tmp.path().join(format!("run-{tag}"));
        cmd_pipeline(&PipelineOptions {
            config: Some(cfg.clone()),
            frames_dir: Some(sim.clone()),
            out_dir: Some(run.clone()),
            seed: Some(7),
            mode: None,
        })
        .unwrap();
        let eval = tmp.path().join(format!("eval-{tag}"));
        let mut opts = EvalOptions::new(vec![run.clone()], &eval);
        opts.predictors = vec![PredictorKind::Static, PredictorKind::Pf];
        opts.formats = vec![OutputFormat::Csv];
        cmd_eval(&opts).unwrap();
        (tree(&run.join("dogma")), fs::read(eval.join("metrics.csv")).unwrap())
    };
    let (a, b) = (once("a"), once("b"));
    let egrids = a.0.len();
    verdict(
        egrids == 40 && a == b,
        format!("{egrids} EGRIDs and metrics.csv identical: {}", a == b),
    )
}

fn criterion_9() -> Outcome {
    let mut cfg = PipelineConfig { mode: DogmaMode::Probabilistic, ..PipelineConfig::default() };
    let (_, prob) = filter_run("crossing_vehicle", 3, 30, &cfg, false);
    cfg.mode = DogmaMode::Dst;
    let (_, dst) = filter_run("crossing_vehicle", 3, 30, &cfg, false);
    let mut worst = 0.0f64;
    for (p, d) in prob.iter().zip(&dst) {
        for i in 0..p.dogma.channels[0].len() {
            let cell = MassCell { m_occ: d.dogma.channels[0][i], m_free: d.dogma.channels[1][i] };
            worst = worst.max((p.dogma.channels[0][i] - pignistic(cell)).abs());
        }
    }
    verdict(worst <= 1e-12, format!("{} frames, max deviation {worst:.1e}", prob.len()))
}

/// Each subdirectory of `$DOGMA_KITTI_DIR` (or the directory itself) is a
/// frames directory as accepted by `dogma pipeline`: `velodyne/*.bin` plus
/// `poses.csv`.
fn criterion_10() -> Outcome {
    let Some(root) = std::env::var_os(KITTI_ENV).map(PathBuf::from) else {
        return Outcome::Skip(format!("{KITTI_ENV} not set"));
    };
    let mut dirs: Vec<PathBuf> = fs::read_dir(&root)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join("poses.csv").is_file()).collect())
        .unwrap_or_default();
    if root.join("poses.csv").is_file() {
        dirs.push(root.clone());
    }
    dirs.sort();
    if dirs.is_empty() {
        return Outcome::Fail(format!("no frames directories under {}", root.display()));
    }
    let tmp = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        if let Err(e) = cmd_pipeline(&PipelineOptions {
            frames_dir: Some(d.clone()),
            out_dir: Some(out.clone()),
            ..Default::default()
        }) {
            return Outcome::Fail(format!("{}: {e}", d.display()));
        }
        runs.push(out);
    }
    let mut opts = EvalOptions::new(runs, tmp.path().join("eval"));
    opts.predictors = vec![PredictorKind::Static];
    let table = match cmd_eval(&opts) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let c = table.curve("static");
    let monotone = c.windows(2).all(|w| w[1] >= w[0]);
    let (first, last) = (c[0], c[c.len() - 1]);
    verdict(
        monotone && (0.015..=0.045).contains(&first) && (0.045..=0.135).contains(&last),
        format!("{} runs: monotone {monotone}, step 1 {first:.4}, step 15 {last:.4}", dirs.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("DS algebra", criterion_1),
        ("pignistic and discount", criterion_2),
        ("ray-tracing oracle", criterion_3),
        ("ground segmentation", criterion_4),
        ("static-scene filter", criterion_5),
        ("dynamic-scene filter", criterion_6),
        ("predictor ordering", criterion_7),
        ("reproducibility", criterion_8),
        ("mode consistency", criterion_9),
        ("KITTI static baseline", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} {tag} {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
