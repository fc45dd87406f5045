//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
//!
//! Run with `cargo test -p ivos-core --test acceptance -- --nocapture`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::{Duration, Instant};

use ivos_core::backends::{
    BackendError, Backends, CopyNearestPropagator, DistanceWeightedFusion, FusionKind, InteractionBackend,
    InteractionKind, InteractionRequest, NoFrames, PropagatorKind,
};
use ivos_core::dataset::{generate_synthetic, load_dataset, load_sequence, Shape, SynthObject, SynthSpec};
use ivos_core::harness::{report_to_json, run_evaluation, RunConfig};
use ivos_core::interactions::{error_regions, min_region_pixels, strategy_f1, strategy_f2};
use ivos_core::mask::{BinaryMask, LabelMask, ObjectId, PixelCoord};
use ivos_core::metrics::{boundary_f, jaccard, r_auc, RoundCurve};
use ivos_core::robot::{next_annotation, synthesize_scribbles, GroundTruth, RobotConfig, RoundAnnotation, Strategy};
use ivos_core::scheduler::{
    fusion_flags, memory_indices, propagation_bounds, propagation_ranges, run_round, Direction, RoundContext,
    SessionState,
};
use ivos_core::{BackendConfig, Polarity, ProbMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(), String>;

fn criterion(id: &str, title: &str, check: impl FnOnce() -> Outcome) {
    let started = Instant::now();
    let result = check();
    let secs = started.elapsed().as_secs_f64();
    match &result {
        Ok(()) => println!("{id} PASS {title} ({secs:.2}s)"),
        Err(why) => println!("{id} FAIL {title} ({secs:.2}s): {why}"),
    }
    if let Err(why) = result {
        panic!("{id} failed: {why}");
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, started: Instant) -> Outcome {
    let spent = started.elapsed();
    ensure!(spent < limit, "took {spent:?}, limit {limit:?}");
    Ok(())
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    // Mix of sparse noise and solid blobs.
    let density = rng.random_range(0.05..0.7);
    let mut m = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap();
    if rng.random_bool(0.5) {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (x1, y1) = (rng.random_range(x0..w), rng.random_range(y0..h));
        for y in y0..=y1 {
            for x in x0..=x1 {
                m.set(x, y, true);
            }
        }
    }
    if rng.random_bool(0.05) {
        m = BinaryMask::empty(w, h).unwrap();
    }
    m
}

fn set_of(m: &BinaryMask) -> BTreeSet<(usize, usize)> {
    m.pixels().map(|p| (p.x, p.y)).collect()
}

fn brute_boundary(s: &BTreeSet<(usize, usize)>, w: usize, h: usize) -> BTreeSet<(usize, usize)> {
    s.iter()
        .copied()
        .filter(|&(x, y)| {
            [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| {
                let (qx, qy) = (x as i64 + dx, y as i64 + dy);
                qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 || !s.contains(&(qx as usize, qy as usize))
            })
        })
        .collect()
}

fn brute_f(p: &BinaryMask, g: &BinaryMask, tol: usize) -> f64 {
    let (w, h) = p.dims();
    let bp = brute_boundary(&set_of(p), w, h);
    let bg = brute_boundary(&set_of(g), w, h);
    if bp.is_empty() && bg.is_empty() {
        return 1.0;
    }
    if bp.is_empty() || bg.is_empty() {
        return 0.0;
    }
    let near = |a: &(usize, usize), b: &(usize, usize)| a.0.abs_diff(b.0).max(a.1.abs_diff(b.1)) <= tol;
    let mp = bp.iter().filter(|a| bg.iter().any(|b| near(a, b))).count();
    let mg = bg.iter().filter(|b| bp.iter().any(|a| near(a, b))).count();
    let (prec, rec) = (mp as f64 / bp.len() as f64, mg as f64 / bg.len() as f64);
    if prec + rec == 0.0 {
        return 0.0;
    }
    2.0 * prec * rec / (prec + rec)
}

#[test]
fn ac1_metric_oracle_equivalence() {
    criterion("AC1", "J and F match brute-force oracles on 1000 random masks", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0xac1);
        for case in 0..1000 {
            let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
            let p = random_mask(&mut rng, w, h);
            let g = random_mask(&mut rng, w, h);
            let (sp, sg) = (set_of(&p), set_of(&g));
            let union = sp.union(&sg).count();
            let expected_j = if union == 0 {
                1.0
            } else {
                sp.intersection(&sg).count() as f64 / union as f64
            };
            let j = jaccard(&p, &g).map_err(|e| e.to_string())?;
            ensure!(j == expected_j, "case {case}: J {j} != {expected_j}");
            for tol in [0, 1, 2, 3] {
                let f = boundary_f(&p, &g, tol).map_err(|e| e.to_string())?;
                let expected = brute_f(&p, &g, tol);
                ensure!((f - expected).abs() <= 1e-12, "case {case} tol {tol}: F {f} != {expected}");
            }
        }
        within(Duration::from_secs(10), started)
    });
}

fn hand_r_auc(values: &[f64], r_max: usize) -> f64 {
    let last = *values.last().unwrap();
    let held: Vec<f64> = (0..r_max).map(|i| values.get(i).copied().unwrap_or(last)).collect();
    held.iter().sum::<f64>() / r_max as f64
}

#[test]
fn ac2_r_auc_correctness() {
    criterion("AC2", "R-AUC matches the held-last mean, is exact on constants, ignores timestamps", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xac2);
        for case in 0..100 {
            for r_max in 1..=8usize {
                let len = rng.random_range(1..=r_max);
                let values: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..=1.0)).collect();
                let mut curve = RoundCurve::from_values(&values);
                let got = r_auc(&curve, r_max as u32).map_err(|e| e.to_string())?;
                let want = hand_r_auc(&values, r_max);
                ensure!((got - want).abs() <= 1e-12, "case {case}, r_max {r_max}: {got} != {want}");

                let mut t = 0.0;
                for s in &mut curve.samples {
                    t += rng.random_range(0.001..100.0);
                    s.wall_clock_seconds = Some(t);
                }
                let timed = r_auc(&curve, r_max as u32).map_err(|e| e.to_string())?;
                ensure!(timed == got, "case {case}: timestamps changed R-AUC {got} -> {timed}");

                let c: f64 = rng.random_range(0.0..=1.0);
                let constant = RoundCurve::from_values(&vec![c; len]);
                let v = r_auc(&constant, r_max as u32).map_err(|e| e.to_string())?;
                ensure!(v == c, "constant {c} over {len}/{r_max} rounds gave {v}");
            }
        }
        Ok(())
    });
}

/// Interaction backend that marks every pixel of the annotated frame with
/// a round-specific probability.
struct Stamp(f32);

impl InteractionBackend for Stamp {
    fn name(&self) -> &'static str {
        "stamp"
    }

    fn interact(&self, request: &InteractionRequest<'_>) -> Result<ProbMask, BackendError> {
        let mut out = request.previous.clone();
        out.channel_mut(1).unwrap().fill(self.0);
        Ok(out)
    }
}

fn subsets(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for i in 0..n {
        let mut extra = Vec::new();
        for s in &out {
            if s.len() < max {
                let mut t = s.clone();
                t.push(i);
                extra.push(t);
            }
        }
        out.extend(extra);
    }
    out
}

fn stamp_round(
    state: &mut SessionState,
    gt: &GroundTruth,
    frame_index: usize,
    value: f32,
) -> Result<ivos_core::PropagationPlan, String> {
    let stamp = Stamp(value);
    let ctx = RoundContext {
        gt,
        backends: Backends {
            interaction: &stamp,
            propagation: &CopyNearestPropagator,
            fusion: &DistanceWeightedFusion,
        },
        frames: &NoFrames,
        stride: 2,
        click_radius: 0,
    };
    let annotation = RoundAnnotation {
        round: state.round() + 1,
        frame_index,
        clicks: vec![ivos_core::Click {
            position: PixelCoord::new(0, 0),
            object_id: 1,
            polarity: Polarity::Positive,
            frame_index,
        }],
    };
    run_round(state, &annotation, &ctx).map_err(|e| e.to_string())
}

#[test]
fn ac3_scheduler_algebra() {
    criterion("AC3", "bounds, ranges, locality and memory selection hold exhaustively", || {
        let started = Instant::now();
        let mut cases = 0usize;
        for n in 1..=12usize {
            let jn = n - 1;
            let gt = GroundTruth::new(vec![LabelMask::background(2, 1).unwrap(); n], BTreeSet::from([1]))
                .map_err(|e| e.to_string())?;
            for history in subsets(n, 3) {
                let prev: BTreeSet<usize> = history.iter().copied().collect();
                // Distinct earlier stamps so every untouched frame is recognisable.
                let mut base = SessionState::new(&gt, 0).map_err(|e| e.to_string())?;
                for (k, &i) in history.iter().enumerate() {
                    stamp_round(&mut base, &gt, i, 0.1 + 0.05 * k as f32)?;
                }
                for i_r in 0..n {
                    cases += 1;
                    let (p_b, p_f) = propagation_bounds(&prev, i_r, 0, jn).map_err(|e| e.to_string())?;
                    let (bw, fw) = propagation_ranges(p_b, p_f, i_r);
                    let mut union: Vec<usize> = bw.clone().chain([i_r]).chain(fw.clone()).collect();
                    let total = union.len();
                    union.sort_unstable();
                    union.dedup();
                    ensure!(union.len() == total, "ranges overlap for I={prev:?}, i_r={i_r}");
                    ensure!(union == (p_b..=p_f).collect::<Vec<_>>(), "partition broken for I={prev:?}, i_r={i_r}");
                    for extra in 0..n {
                        let mut more = prev.clone();
                        more.insert(extra);
                        let (b2, f2) = propagation_bounds(&more, i_r, 0, jn).map_err(|e| e.to_string())?;
                        ensure!(b2 >= p_b && f2 <= p_f, "adding {extra} to {prev:?} widened bounds at {i_r}");
                    }
                    let (fb, ff) = fusion_flags(&prev, p_b, p_f);
                    ensure!(
                        fb == (p_b > 0 && prev.contains(&(p_b - 1))) && ff == prev.contains(&(p_f + 1)),
                        "fusion flags wrong for I={prev:?}, i_r={i_r}"
                    );
                    if prev.is_empty() {
                        ensure!(!fb && !ff, "fusion flag set in round 1");
                    }

                    let mut state = base.clone();
                    let plan = stamp_round(&mut state, &gt, i_r, 0.9)?;
                    ensure!((plan.p_b, plan.p_f) == (p_b, p_f), "plan disagrees with bounds");
                    for j in 0..n {
                        let before = base.probabilities(j);
                        let after = state.probabilities(j);
                        if j < p_b || j > p_f {
                            ensure!(before == after, "frame {j} outside [{p_b}, {p_f}] changed (I={prev:?}, i_r={i_r})");
                        }
                    }
                    ensure!(
                        state.probabilities(i_r).channel(1).unwrap().iter().all(|&v| v == 0.9),
                        "annotated frame {i_r} was overwritten"
                    );
                }
            }
        }
        ensure!(cases > 0, "no cases");

        let mut memory_cases = 0usize;
        for i_r in 0..=30usize {
            for s in 1..=12usize {
                for d in 1..=5usize {
                    for p_b in 0..=i_r.saturating_sub(s) {
                        if i_r < s {
                            break;
                        }
                        let range = p_b..i_r;
                        let got = memory_indices(i_r, s, d, Direction::Backward, &range).indices;
                        let mut want: BTreeSet<usize> = (0..=i_r + 12)
                            .filter(|&m| range.contains(&m) && i_r > m && m + s > i_r && (i_r - m) % d == 0)
                            .collect();
                        if range.contains(&(i_r + 1 - s)) {
                            want.insert(i_r + 1 - s);
                        }
                        want.insert(i_r);
                        ensure!(got == want.into_iter().collect::<Vec<_>>(), "backward i_r={i_r} s={s} d={d} p_b={p_b}");
                        memory_cases += 1;
                    }
                    for p_f in i_r + s..=i_r + s + 3 {
                        let range = i_r + 1..p_f + 1;
                        let got = memory_indices(i_r, s, d, Direction::Forward, &range).indices;
                        let mut want: BTreeSet<usize> = (0..=p_f + 12)
                            .filter(|&m| range.contains(&m) && i_r < m && m < i_r + s && (m - i_r) % d == 0)
                            .collect();
                        if range.contains(&(i_r + s - 1)) {
                            want.insert(i_r + s - 1);
                        }
                        want.insert(i_r);
                        ensure!(got == want.into_iter().collect::<Vec<_>>(), "forward i_r={i_r} s={s} d={d} p_f={p_f}");
                        memory_cases += 1;
                    }
                }
            }
        }
        println!("AC3 checked {cases} bound cases and {memory_cases} memory selections");
        within(Duration::from_secs(30), started)
    });
}

fn random_labels(rng: &mut ChaCha8Rng, w: usize, h: usize, objects: usize) -> LabelMask {
    let mut m = LabelMask::background(w, h).unwrap();
    for o in 1..=objects as ObjectId {
        for _ in 0..rng.random_range(1..=3) {
            let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
            let (x1, y1) = ((x0 + rng.random_range(0..8)).min(w - 1), (y0 + rng.random_range(0..8)).min(h - 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    m.set(x, y, o);
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..6) {
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        m.set(x, y, rng.random_range(0..=objects as ObjectId));
    }
    m
}

#[test]
fn ac4_strategy_conformance() {
    criterion("AC4", "f1/f2/f3 clicks conform on 500 random prediction/ground-truth pairs", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xac4);
        for case in 0..500 {
            let (w, h) = (rng.random_range(8..=24), rng.random_range(8..=24));
            let objects = rng.random_range(1..=3usize);
            let frames = rng.random_range(1..=3usize);
            let gt_frames: Vec<LabelMask> = (0..frames).map(|_| random_labels(&mut rng, w, h, objects)).collect();
            let ids: BTreeSet<ObjectId> = (1..=objects as ObjectId).collect();
            let gt = GroundTruth::new(gt_frames, ids.clone()).map_err(|e| e.to_string())?;
            let pred: Vec<LabelMask> = (0..frames).map(|_| random_labels(&mut rng, w, h, objects)).collect();
            let history = if rng.random_bool(0.3) { vec![] } else { vec![0] };
            let round = history.len() as u32 + 1;
            let state = SessionState::resume(&gt, pred.clone(), history, 1).map_err(|e| e.to_string())?;

            for strategy in [Strategy::F1, Strategy::F2, Strategy::F3] {
                let config = RobotConfig {
                    strategy,
                    ..RobotConfig::default()
                };
                let a = next_annotation(&state, &gt, &config, None).map_err(|e| e.to_string())?;
                let f = a.frame_index;
                let min_area = min_region_pixels(config.min_region_fraction, w, h).max(1);
                let mut per_object = std::collections::BTreeMap::<ObjectId, usize>::new();
                for c in &a.clicks {
                    *per_object.entry(c.object_id).or_default() += 1;
                    let e = error_regions(&pred[f], &gt.frames()[f], c.object_id).map_err(|e| e.to_string())?;
                    ensure!(
                        e.mask_for(c.polarity).at(c.position),
                        "case {case} {strategy:?}: click {c:?} not in a matching error region"
                    );
                }
                let cap = if round == 1 { 1 } else { 3 };
                ensure!(
                    per_object.values().all(|&n| n <= cap),
                    "case {case} {strategy:?}: cap {cap} exceeded in round {round}: {per_object:?}"
                );
                if strategy == Strategy::F1 {
                    for &o in &ids {
                        let e = error_regions(&pred[f], &gt.frames()[f], o).map_err(|e| e.to_string())?;
                        let qualifies = e.ranked().iter().any(|(r, _)| r.area() >= min_area);
                        let n = per_object.get(&o).copied().unwrap_or(0);
                        ensure!(n == usize::from(qualifies), "case {case} f1: object {o} got {n} clicks");
                    }
                }
            }

            // Scribble-derived clicks land on scribble points.
            let f = rng.random_range(0..frames);
            for &o in &ids {
                let e = error_regions(&pred[f], &gt.frames()[f], o).map_err(|e| e.to_string())?;
                let scribbles = synthesize_scribbles(&e, f, 1, 3);
                if scribbles.is_empty() {
                    continue;
                }
                let on_scribble = |p: PixelCoord| scribbles.iter().any(|s| s.path.contains(&p));
                let one = strategy_f1(&scribbles).map_err(|e| e.to_string())?;
                ensure!(on_scribble(one.position), "case {case}: f1 point off the scribbles");
                for c in strategy_f2(&scribbles).map_err(|e| e.to_string())? {
                    ensure!(on_scribble(c.position), "case {case}: f2 point off the scribbles");
                }
            }
        }
        Ok(())
    });
}

fn converge_config() -> RunConfig {
    RunConfig {
        strategy: Strategy::F3,
        max_rounds: 8,
        backends: BackendConfig {
            interaction: InteractionKind::Oracle,
            propagator: PropagatorKind::Copy,
            fusion: FusionKind::DistanceWeighted,
            ..BackendConfig::default()
        },
        ..RunConfig::default()
    }
}

fn block(id: ObjectId, x: i64, y: i64, width: i64, height: i64, velocity: [i64; 2], move_every: usize) -> SynthObject {
    SynthObject {
        id,
        shape: Shape::Rect { x, y, width, height },
        velocity,
        move_every,
    }
}

#[test]
fn ac5_end_to_end_convergence() {
    criterion("AC5", "piecewise-static scenes converge monotonically; a static scene scores 1.0", || {
        let started = Instant::now();
        let scene = |name: &str, objects: Vec<SynthObject>| {
            generate_synthetic(&SynthSpec {
                name: name.into(),
                width: 48,
                height: 32,
                frames: 20,
                seed: 5,
                objects,
            })
            .map_err(|e| e.to_string())
        };
        let piecewise = [
            scene("one-jump", vec![block(1, 4, 6, 12, 10, [14, 0], 10)])?,
            scene("late-jump", vec![block(1, 6, 4, 10, 12, [0, 9], 15)])?,
            scene(
                "two-objects",
                vec![block(1, 2, 2, 10, 8, [12, 0], 10), block(2, 30, 18, 8, 8, [0, 0], 1)],
            )?,
        ];
        let mut problems = Vec::new();
        for seq in &piecewise {
            let report = run_evaluation(std::slice::from_ref(seq), &converge_config(), 1).map_err(|e| e.to_string())?;
            let values: Vec<f64> = report.sequences[0].curve.samples.iter().map(|x| x.global_jf).collect();
            println!("AC5 {}: {:?}", seq.name, values);
            if !values.windows(2).all(|p| p[1] >= p[0]) {
                problems.push(format!("{}: curve decreases {values:?}", seq.name));
            }
            if values.last() != Some(&1.0) {
                problems.push(format!("{}: did not reach 1.0 within 8 rounds {values:?}", seq.name));
            }
        }
        let still = scene("static", vec![block(1, 10, 8, 14, 12, [0, 0], 1)])?;
        let report = run_evaluation(&[still], &converge_config(), 1).map_err(|e| e.to_string())?;
        let first = report.sequences[0].curve.samples[0].global_jf;
        if first != 1.0 || report.r_auc != Some(1.0) {
            problems.push(format!("static scene: round 1 J&F {first}, r_auc {:?}", report.r_auc));
        }
        ensure!(problems.is_empty(), "{}", problems.join("; "));
        within(Duration::from_secs(10), started)
    });
}

/// Golden values from `oracles/decay_fixture_oracle.py`.
const DECAY_CURVE: [f64; 8] = [
    0.7413398402839396,
    0.7700798580301685,
    0.7988198757763976,
    0.8275598935226265,
    0.8562999112688554,
    0.8850399290150843,
    0.9137799467613132,
    0.9425199645075422,
];
const DECAY_R_AUC: f64 = 0.841929902395741;

#[test]
fn ac6_decay_fixture_regression() {
    criterion("AC6", "decay fixture curve and R-AUC match the brute-force goldens", || {
        let seq = generate_synthetic(&SynthSpec {
            name: "decay".into(),
            width: 40,
            height: 30,
            frames: 10,
            seed: 0,
            objects: vec![
                block(1, 3, 4, 12, 10, [0, 0], 1),
                SynthObject {
                    id: 2,
                    shape: Shape::Ellipse {
                        cx: 28,
                        cy: 16,
                        rx: 8,
                        ry: 10,
                    },
                    velocity: [0, 0],
                    move_every: 1,
                },
            ],
        })
        .map_err(|e| e.to_string())?;
        let config = RunConfig {
            strategy: Strategy::F3,
            max_rounds: 8,
            boundary_tolerance: Some(2),
            backends: BackendConfig {
                interaction: InteractionKind::Oracle,
                propagator: PropagatorKind::DecayOracle,
                fusion: FusionKind::DistanceWeighted,
                decay_lambda: 2.0,
                ..BackendConfig::default()
            },
            ..RunConfig::default()
        };
        let report = run_evaluation(&[seq], &config, 1).map_err(|e| e.to_string())?;
        let got: Vec<f64> = report.global_curve.samples.iter().map(|s| s.global_jf).collect();
        ensure!(got.len() == 8, "expected 8 rounds, got {got:?}");
        for (r, (g, w)) in got.iter().zip(DECAY_CURVE).enumerate() {
            ensure!((g - w).abs() <= 1e-9, "round {}: {g} vs {w}", r + 1);
        }
        let auc = report.r_auc.ok_or("no r_auc")?;
        ensure!((auc - DECAY_R_AUC).abs() <= 1e-9, "r_auc {auc} vs {DECAY_R_AUC}");
        let hand = DECAY_CURVE.iter().sum::<f64>() / 8.0;
        ensure!((auc - hand).abs() <= 1e-12, "r_auc {auc} vs hand integration {hand}");
        Ok(())
    });
}

fn determinism_sequences() -> Vec<ivos_core::SequenceDataset> {
    let mut out = Vec::new();
    for k in 0..6u64 {
        out.push(
            generate_synthetic(&SynthSpec {
                name: format!("seq-{k}"),
                width: 40,
                height: 28,
                frames: 8 + k as usize,
                seed: k,
                objects: vec![
                    block(1, 2 + k as i64, 3, 9, 7, [1, 0], 1 + k as usize % 3),
                    block(2, 24, 12, 8, 10, [0, -1], 2),
                ],
            })
            .unwrap(),
        );
    }
    out
}

#[test]
fn ac7_determinism() {
    criterion("AC7", "reports are byte-identical across repeats and worker counts", || {
        let seqs = determinism_sequences();
        for backends in [
            converge_config().backends,
            BackendConfig {
                interaction: InteractionKind::RegionGrow,
                propagator: PropagatorKind::DecayOracle,
                ..BackendConfig::default()
            },
        ] {
            let config = RunConfig {
                backends,
                seed: 42,
                ..RunConfig::default()
            };
            let json = |workers| -> Result<String, String> {
                let r = run_evaluation(&seqs, &config, workers).map_err(|e| e.to_string())?;
                report_to_json(&r).map_err(|e| e.to_string())
            };
            let a = json(1)?;
            let b = json(1)?;
            let c = json(4)?;
            ensure!(a == b, "repeat runs differ");
            ensure!(a == c, "1-worker and 4-worker reports differ");
        }
        // With timing on, everything outside the timing section still matches.
        let config = RunConfig {
            timing: true,
            ..RunConfig::default()
        };
        let strip = |workers| -> Result<String, String> {
            let mut r = run_evaluation(&seqs, &config, workers).map_err(|e| e.to_string())?;
            ensure!(r.timing.is_some(), "timing section missing");
            r.timing = None;
            report_to_json(&r).map_err(|e| e.to_string())
        };
        ensure!(strip(1)? == strip(4)?, "reports differ outside the timing section");
        Ok(())
    });
}

fn write_indexed_png(path: &Path, w: usize, h: usize, values: &[u8]) {
    let file = fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let mut palette = vec![0u8; 256 * 3];
    palette[3..6].copy_from_slice(&[128, 0, 0]);
    palette[6..9].copy_from_slice(&[0, 128, 0]);
    enc.set_palette(palette);
    let mut writer = enc.write_header().unwrap();
    writer.write_image_data(values).unwrap();
}

#[test]
fn ac8_format_fidelity() {
    criterion("AC8", "DAVIS toy dataset and scribble file decode exactly", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = dir.path();
        let (w, h) = (7usize, 5usize);
        let img_dir = root.join("JPEGImages/480p/toy");
        let ann_dir = root.join("Annotations/480p/toy");
        fs::create_dir_all(&img_dir).unwrap();
        fs::create_dir_all(&ann_dir).unwrap();
        let mut expected = Vec::new();
        for t in 0..3usize {
            let values: Vec<u8> = (0..w * h)
                .map(|i| {
                    let (x, y) = (i % w, i / w);
                    if x == t + 1 && y >= 1 {
                        1
                    } else if x == 5 && y == t {
                        2
                    } else {
                        0
                    }
                })
                .collect();
            write_indexed_png(&ann_dir.join(format!("{t:05}.png")), w, h, &values);
            image::RgbImage::from_pixel(w as u32, h as u32, image::Rgb([40, 80, 120]))
                .save(img_dir.join(format!("{t:05}.jpg")))
                .unwrap();
            expected.push(values);
        }
        let scribble_dir = root.join("Scribbles/toy");
        fs::create_dir_all(&scribble_dir).unwrap();
        fs::write(
            scribble_dir.join("001.json"),
            r#"{"sequence": "toy", "annotated_frame": 1, "scribbles": [[], [
                {"path": [[0.0, 0.0], [1.0, 1.0], [0.5, 0.5], [0.25, 0.75]], "object_id": 1, "start_time": 1, "end_time": 2},
                {"path": [[0.8333333333, 0.0]], "object_id": 2}
            ], []]}"#,
        )
        .unwrap();

        let seqs = load_dataset(root, "480p", &[]).map_err(|e| e.to_string())?;
        ensure!(seqs.len() == 1 && seqs[0].name == "toy", "expected one sequence");
        let seq = &seqs[0];
        ensure!(seq.num_frames() == 3, "expected 3 frames");
        ensure!(seq.object_ids() == &BTreeSet::from([1, 2]), "object ids {:?}", seq.object_ids());
        for (t, values) in expected.iter().enumerate() {
            let labels = seq.ground_truth.frames()[t].labels();
            ensure!(
                labels.iter().zip(values).all(|(&l, &v)| l == ObjectId::from(v)),
                "frame {t} labels differ from PNG values"
            );
        }
        let scribbles = seq.initial_scribbles.as_ref().ok_or("scribbles not loaded")?;
        ensure!(scribbles.len() == 3 && scribbles[0].is_empty() && scribbles[2].is_empty(), "per-frame lists");
        let path = &scribbles[1][0].path;
        let want = [
            PixelCoord::new(0, 0),
            PixelCoord::new(w - 1, h - 1),
            PixelCoord::new(3, 2),
            PixelCoord::new(2, 3),
        ];
        ensure!(path.as_slice() == want, "scribble pixels {path:?}, want {want:?}");
        ensure!(scribbles[1][1].path == [PixelCoord::new(5, 0)], "second scribble {:?}", scribbles[1][1].path);

        fs::remove_file(img_dir.join("00002.jpg")).unwrap();
        let err = load_sequence(root, "480p", "toy").err().ok_or("count mismatch accepted")?;
        ensure!(err.to_string().contains("toy"), "error does not name the sequence: {err}");

        let rgb = ann_dir.join("00000.png");
        image::RgbImage::new(w as u32, h as u32).save(&rgb).unwrap();
        image::RgbImage::from_pixel(w as u32, h as u32, image::Rgb([1, 2, 3]))
            .save(img_dir.join("00002.jpg"))
            .unwrap();
        let err = load_sequence(root, "480p", "toy").err().ok_or("RGB annotation accepted")?;
        ensure!(err.to_string().contains("00000.png"), "error does not name the file: {err}");
        Ok(())
    });
}
