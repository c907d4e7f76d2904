//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Runs without the libtest harness so the
//! lines show under plain `cargo test`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};
use sonarflow_core::analytics::{CountEvent, CountSummary};
use sonarflow_core::assign::{hungarian, CostMatrix};
use sonarflow_core::frame::{GridBox, SonarFrame};
use sonarflow_core::metrics::{
    default_alpha_grid, dominant_tracks, evaluate, hota, idf1, mota, EvaluationInput, MetricsConfig,
};
use sonarflow_core::mot::{parse_mot_csv, sort_records, write_mot, MotRecord};
use sonarflow_core::pipeline::{
    execute, report_without_timings, InputSource, RunConfig, RunOutcome,
};
use sonarflow_core::review::{EdgeUpload, Reason, ReviewItem, ReviewStatus, UploadOutput};
use sonarflow_core::rng::Xorshift64Star;
use sonarflow_core::simulator::{
    ground_truth_to_mot, Direction, GroundTruth, ScenarioConfig, Simulator,
};
use sonarflow_core::sraw::{decode_sraw, encode_sraw, stored_geometry};
use sonarflow_core::SonarGeometry;
use sonarflow_review::{AppState, CountsResponse, QueueResponse};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn builtin(name: &str, out: &Path) -> RunConfig {
    RunConfig::new(
        InputSource::Builtin {
            name: name.into(),
            seed: None,
        },
        out,
    )
}

fn run_builtin(name: &str, gate: bool) -> (RunOutcome, f64) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = builtin(name, &dir.path().join("out"));
    cfg.gate.enabled = gate;
    let start = Instant::now();
    let o = execute(&cfg).unwrap();
    (o, start.elapsed().as_secs_f64())
}

// 1. Assignment oracle

fn brute_force_min(cost: &CostMatrix) -> f64 {
    let (r, c) = (cost.rows(), cost.cols());
    fn go(
        cost: &CostMatrix,
        row: usize,
        used: &mut Vec<bool>,
        acc: f64,
        best: &mut f64,
        transpose: bool,
    ) {
        let (r, c) = if transpose {
            (cost.cols(), cost.rows())
        } else {
            (cost.rows(), cost.cols())
        };
        if row == r {
            *best = best.min(acc);
            return;
        }
        for j in 0..c {
            if !used[j] {
                used[j] = true;
                let v = if transpose {
                    cost.get(j, row)
                } else {
                    cost.get(row, j)
                };
                go(cost, row + 1, used, acc + v, best, transpose);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    let transpose = r > c;
    go(
        cost,
        0,
        &mut vec![false; r.max(c)],
        0.0,
        &mut best,
        transpose,
    );
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = Xorshift64Star::new(1);
    let mut mismatches = 0;
    for k in 0..1000 {
        let r = 1 + (rng.next_u64() % 7) as usize;
        let c = 1 + (rng.next_u64() % 7) as usize;
        // multiples of 1/8 keep every partial sum exact; small ranges force ties
        let range = if k % 3 == 0 { 4 } else { 800 };
        let rows: Vec<Vec<f64>> = (0..r)
            .map(|_| {
                (0..c)
                    .map(|_| (rng.next_u64() % range) as f64 / 8.0)
                    .collect()
            })
            .collect();
        let cost = CostMatrix::from_rows(&rows);
        let a = hungarian(&cost);
        let pairs: Vec<(usize, usize)> = a.pairs().collect();
        let mut cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        cols.sort_unstable();
        cols.dedup();
        let got: f64 = pairs.iter().map(|&(i, j)| cost.get(i, j)).sum();
        if pairs.len() != r.min(c)
            || cols.len() != pairs.len()
            || got != brute_force_min(&cost)
            || got != a.total_cost
        {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 10.0,
        format!("1000 random matrices up to 7x7, {mismatches} cost mismatches, {secs:.2} s (limit 10 s)"),
    )
}

// 2. Metric sanity

fn criterion_2() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["single-fish", "river-20", "length-10", "length-10-clean"] {
        let truth = Simulator::new(ScenarioConfig::named(name).unwrap())
            .unwrap()
            .ground_truth();
        let gt = ground_truth_to_mot(&truth);
        let counts = [
            (truth.upstream_total as f64, truth.upstream_total as f64),
            (truth.downstream_total as f64, truth.downstream_total as f64),
        ];
        let lengths: Vec<(f64, f64)> = dominant_tracks(&gt, &gt, 0.5)
            .into_iter()
            .map(|(fish, track)| {
                (
                    truth.length_of(track as u32).unwrap(),
                    truth.length_of(fish as u32).unwrap(),
                )
            })
            .collect();
        let m = evaluate(&EvaluationInput {
            gt: &gt,
            detections: &gt,
            tracks: &gt,
            counts: &counts,
            lengths: &lengths,
            config: MetricsConfig::default(),
        })
        .unwrap();
        let pass = m.map50 == 1.0
            && m.mota == Some(1.0)
            && m.hota == 1.0
            && m.idf1 == 1.0
            && m.count_mape == Some(0.0)
            && m.length_mae_m == Some(0.0)
            && lengths.len() == truth.fish.len();
        ok &= pass;
        lines.push(format!(
            "{name}: mAP50 {} MOTA {:?} HOTA {} IDF1 {} MAPE {:?} lenMAE {:?}",
            m.map50, m.mota, m.hota, m.idf1, m.count_mape, m.length_mae_m
        ));
    }
    check(ok, lines.join("; "))
}

// 3. Metric hand cases

fn rec(frame: u32, id: i64, x: f64) -> MotRecord {
    MotRecord::track(frame, id, GridBox::new(x, 10.0, 4.0, 8.0), 1.0, "salmonid")
}

fn criterion_3() -> Outcome {
    // one object over 10 frames; the tracker hands it a new id halfway
    let gt: Vec<MotRecord> = (0..10).map(|t| rec(t, 1, t as f64)).collect();
    let split: Vec<MotRecord> = (0..10)
        .map(|t| rec(t, if t < 5 { 1 } else { 2 }, t as f64))
        .collect();
    let id = idf1(&gt, &split, 0.5);
    let h = hota(&gt, &split, &default_alpha_grid()).unwrap();
    let target = 0.5f64.sqrt();
    let worst = h
        .hota_per_alpha
        .iter()
        .map(|v| (v - target).abs())
        .fold(0.0, f64::max);
    // 10 ground-truth boxes; frame 4's prediction misses entirely
    let fp_fn: Vec<MotRecord> = (0..10)
        .map(|t| rec(t, 1, if t == 4 { 60.0 } else { t as f64 }))
        .collect();
    let m = mota(&gt, &fp_fn, 0.5).unwrap();
    check(
        id.idf1 == 0.5 && worst <= 1e-9 && m.mota == 0.8 && m.fn_count == 1 && m.fp_count == 1,
        format!(
            "split identity IDF1 {} HOTA max |HOTA-sqrt(0.5)| {worst:.1e} over {} alphas; FN {} FP {} MOTA {}",
            id.idf1,
            h.hota_per_alpha.len(),
            m.fn_count,
            m.fp_count,
            m.mota
        ),
    )
}

// 4. End-to-end counting on river-20

/// Fish whose centers stay at least `min_m` from every other fish whenever
/// both are in view.
fn separated_fish(truth: &GroundTruth, min_m: f64) -> Vec<u32> {
    let mut closest: BTreeMap<u32, f64> =
        truth.fish.iter().map(|f| (f.id, f64::INFINITY)).collect();
    for frame in &truth.frames {
        let seen: Vec<_> = frame.iter().filter(|e| e.visible()).collect();
        for a in &seen {
            for b in &seen {
                if a.fish_id != b.fish_id {
                    let d = (a.center_m.0 - b.center_m.0).hypot(a.center_m.1 - b.center_m.1);
                    let c = closest.get_mut(&a.fish_id).unwrap();
                    *c = c.min(d);
                }
            }
        }
    }
    closest
        .into_iter()
        .filter(|&(_, d)| d >= min_m)
        .map(|(id, _)| id)
        .collect()
}

fn ape(pred: u32, truth: u32) -> f64 {
    if truth == 0 {
        if pred == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (pred as f64 - truth as f64).abs() / truth as f64
    }
}

fn criterion_4(river: &(RunOutcome, f64)) -> Outcome {
    let (o, secs) = river;
    let r = &o.report;
    let truth = Simulator::new(ScenarioConfig::named("river-20").unwrap())
        .unwrap()
        .ground_truth();
    let eligible = separated_fish(&truth, 1.0);
    let gt = o.ground_truth.as_ref().unwrap();
    let subset: Vec<MotRecord> = gt
        .iter()
        .filter(|g| eligible.contains(&(g.id as u32)))
        .cloned()
        .collect();
    let switches = mota(&subset, &o.tracks, 0.5).unwrap().id_switches;
    let t = r.true_counts.unwrap();
    let (up, down) = (
        ape(r.counts.upstream, t.upstream),
        ape(r.counts.downstream, t.downstream),
    );
    check(
        up <= 0.10 && down <= 0.10 && switches == 0 && *secs < 60.0,
        format!(
            "counts up {}/{} down {}/{} (APE {:.1}% / {:.1}%, limit 10%), {} of {} fish separated >= 1 m, their ID switches {switches} (all fish {}), {secs:.1} s (limit 60 s)",
            r.counts.upstream,
            t.upstream,
            r.counts.downstream,
            t.downstream,
            up * 100.0,
            down * 100.0,
            eligible.len(),
            truth.fish.len(),
            r.metrics.as_ref().unwrap().id_switches
        ),
    )
}

// 5. Length recovery

fn criterion_5() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, limit) in [("length-10-clean", 0.05), ("length-10", 0.10)] {
        let scenario = ScenarioConfig::named(name).unwrap();
        let in_range = scenario.fish.len() == 10
            && scenario
                .fish
                .iter()
                .all(|f| (0.4..=0.9).contains(&f.length_m));
        let (o, _) = run_builtin(name, false);
        let m = o.report.metrics.unwrap();
        let measured = o.report.lengths.len();
        let mae = m.length_mae_m.unwrap_or(f64::INFINITY);
        ok &= in_range && mae <= limit;
        parts.push(format!(
            "{name}: MAE {mae:.4} m (limit {limit}), {measured} tracks measured"
        ));
    }
    check(ok, parts.join("; "))
}

// 6. Echogram gating

fn criterion_6() -> Outcome {
    let (o, _) = run_builtin("river-20", true);
    let g = o.report.gate.unwrap();
    let kept = g.fish_frames_retained as f64 / g.frames_with_fish as f64;
    let dropped = g.empty_frames_discarded as f64 / g.empty_frames as f64;
    check(
        kept >= 0.99 && dropped >= 0.50,
        format!(
            "fish frames kept {}/{} ({:.2}%, need >= 99%), empty frames dropped {}/{} ({:.1}%, need >= 50%)",
            g.fish_frames_retained,
            g.frames_with_fish,
            kept * 100.0,
            g.empty_frames_discarded,
            g.empty_frames,
            dropped * 100.0
        ),
    )
}

// 7. Determinism of `sonarflow run`

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let bytes = std::fs::read(&p).unwrap();
        let bytes = if name == "report.json" {
            serde_json::to_vec(&report_without_timings(&bytes).unwrap()).unwrap()
        } else {
            bytes
        };
        out.insert(name, bytes);
    }
    out
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let cfg = json!({
        "input": {"type": "builtin", "name": "length-10"},
        "output_dir": "out",
        "gate": {"enabled": true},
        "review": {"site_id": "weir", "write_frames": true}
    });
    std::fs::write(&config, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    let run = || {
        let output = Command::new(env!("CARGO_BIN_EXE_sonarflow"))
            .args(["run", "--config"])
            .arg(&config)
            .env_remove("SONARFLOW_SEED_OVERRIDE")
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "sonarflow run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        snapshot(&dir.path().join("out"))
    };
    let first = run();
    let second = run();
    let differing: Vec<&String> = first
        .keys()
        .filter(|k| first.get(*k) != second.get(*k))
        .collect();
    let csvs = first.keys().filter(|k| k.ends_with(".csv")).count();
    check(
        first.len() == second.len()
            && differing.is_empty()
            && csvs >= 3
            && first.contains_key("report.json"),
        format!(
            "{} output files compared ({csvs} CSVs), differing: {differing:?}",
            first.len()
        ),
    )
}

// 8. Format round trips

fn random_f32(rng: &mut Xorshift64Star) -> f32 {
    match rng.next_u64() % 4 {
        0 => f32::from_bits(rng.next_u64() as u32),
        1 => rng.next_f64() as f32,
        2 => -0.0,
        _ => f32::from_bits((rng.next_u64() % 0x0080_0000) as u32),
    }
}

fn random_f64(rng: &mut Xorshift64Star) -> f64 {
    loop {
        let v = match rng.next_u64() % 3 {
            0 => f64::from_bits(rng.next_u64()),
            1 => rng.uniform(-1e3, 1e3),
            _ => rng.next_f64() * 1e-300,
        };
        if v.is_finite() {
            return v;
        }
    }
}

fn criterion_8() -> Outcome {
    let mut rng = Xorshift64Star::new(8);
    let mut sraw_bad = 0;
    let mut mot_bad = 0;
    for _ in 0..100 {
        let beams = 2 + (rng.next_u64() % 15) as u32;
        let bins = 1 + (rng.next_u64() % 40) as u32;
        let r0 = rng.uniform(0.1, 5.0);
        let geom = SonarGeometry::new(
            beams,
            rng.uniform(0.1, 1.5),
            r0,
            r0 + rng.uniform(0.5, 30.0),
            bins,
            rng.uniform(1.0, 30.0),
        )
        .unwrap();
        let frames: Vec<SonarFrame> = (0..rng.next_u64() % 6)
            .map(|_| {
                SonarFrame::from_data(
                    beams,
                    bins,
                    (0..beams * bins).map(|_| random_f32(&mut rng)).collect(),
                )
                .unwrap()
            })
            .collect();
        let bytes = encode_sraw(&geom, &frames).unwrap();
        let (g2, f2) = decode_sraw(&bytes).unwrap();
        let bitwise = frames.len() == f2.len()
            && frames.iter().zip(&f2).all(|(a, b)| {
                a.data()
                    .iter()
                    .map(|v| v.to_bits())
                    .eq(b.data().iter().map(|v| v.to_bits()))
            });
        if !bitwise || g2 != stored_geometry(&geom) || encode_sraw(&g2, &f2).unwrap() != bytes {
            sraw_bad += 1;
        }

        let classes = [
            "salmonid",
            "sockeye, male",
            "quote \"q\"",
            "",
            "çhum",
            "line\nbreak",
        ];
        let mut records: Vec<MotRecord> = (0..rng.next_u64() % 40)
            .map(|_| {
                let id = if rng.next_u64().is_multiple_of(3) {
                    -1
                } else {
                    (rng.next_u64() % 1_000_000) as i64
                };
                MotRecord {
                    frame: (rng.next_u64() % 100_000) as u32,
                    id,
                    x: random_f64(&mut rng),
                    y: random_f64(&mut rng),
                    w: random_f64(&mut rng),
                    h: random_f64(&mut rng),
                    conf: random_f64(&mut rng),
                    class: classes[(rng.next_u64() % classes.len() as u64) as usize].to_string(),
                    visibility: random_f64(&mut rng),
                }
            })
            .collect();
        let mut buf = Vec::new();
        write_mot(&mut buf, &records).unwrap();
        let back = parse_mot_csv(buf.as_slice());
        sort_records(&mut records);
        let exact = back.as_ref().is_ok_and(|b| {
            b.len() == records.len()
                && b.iter().zip(&records).all(|(a, r)| {
                    a.frame == r.frame
                        && a.id == r.id
                        && a.class == r.class
                        && [a.x, a.y, a.w, a.h, a.conf, a.visibility].map(f64::to_bits)
                            == [r.x, r.y, r.w, r.h, r.conf, r.visibility].map(f64::to_bits)
                })
        });
        if !exact {
            mot_bad += 1;
        }
    }
    check(
        sraw_bad == 0 && mot_bad == 0,
        format!("100 random .sraw files: {sraw_bad} not bitwise equal; 100 random MOT sets: {mot_bad} not value-exact"),
    )
}

// 9. Review loop over HTTP

fn out(track: u64, frame: u32, conf: f64) -> UploadOutput {
    UploadOutput {
        track_id: track,
        frame_index: frame,
        bbox: GridBox::new(track as f64 * 5.0, frame as f64, 4.0, 10.0),
        confidence: conf,
        species_label: "salmonid".into(),
    }
}

/// Ten flagged items at threshold 0.5: tracks 1–6 one low output each,
/// track 7 (mean 0.45, upstream crossing) and track 8 (mean 0.49,
/// downstream crossing) one low output plus one ambiguous crossing each.
/// Track 9 is confident and raises nothing.
fn session_upload() -> EdgeUpload {
    let mut outputs: Vec<UploadOutput> = (1..=6)
        .map(|t| out(t, 10 * t as u32, 0.1 + 0.05 * t as f64))
        .collect();
    outputs.extend([
        out(7, 70, 0.55),
        out(7, 71, 0.35),
        out(8, 80, 0.60),
        out(8, 81, 0.38),
    ]);
    outputs.extend([out(9, 90, 0.9), out(9, 91, 0.8)]);
    EdgeUpload {
        upload_id: "session".into(),
        site_id: "weir".into(),
        frame_file: "frames.sraw".into(),
        counts: CountSummary {
            upstream: 12,
            downstream: 3,
            net: 9,
        },
        outputs,
        events: vec![
            CountEvent {
                track_id: 7,
                frame_index: 71,
                direction: Direction::Upstream,
            },
            CountEvent {
                track_id: 8,
                frame_index: 81,
                direction: Direction::Downstream,
            },
            CountEvent {
                track_id: 9,
                frame_index: 91,
                direction: Direction::Upstream,
            },
        ],
    }
}

async fn review_session() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::open(dir.path(), 0.5).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { sonarflow_review::serve(listener, state).await });
    let client = reqwest::Client::new();
    let post = |path: String, body: Value| {
        let client = client.clone();
        let url = format!("{base}{path}");
        async move { client.post(url).json(&body).send().await.unwrap() }
    };
    let get = |path: &str| {
        let client = client.clone();
        let url = format!("{base}{path}");
        async move { client.get(url).send().await.unwrap() }
    };

    let r = post(
        "/api/uploads".into(),
        serde_json::to_value(session_upload()).unwrap(),
    )
    .await;
    if r.status() != 201 {
        return Err(format!("upload returned {}", r.status()));
    }
    let queue: QueueResponse = get("/api/queue?site=weir&status=pending")
        .await
        .json()
        .await
        .unwrap();
    if queue.items.len() != 10 {
        return Err(format!(
            "expected 10 flagged items, got {}",
            queue.items.len()
        ));
    }
    let find = |track: u64, reason: Reason| -> &ReviewItem {
        queue
            .items
            .iter()
            .find(|i| i.track_id == track && i.reason == reason)
            .unwrap()
    };
    let text = |t: &str| json!({"kind": "Text", "payload": t, "author": "reviewer"});
    let delta = |d: i64| json!({"kind": "Dot", "payload": {"x": 3.0, "y": 4.0}, "corrected_count_delta": d, "author": "reviewer"});
    let reject =
        json!({"kind": "Text", "payload": "not a fish", "reject": true, "author": "reviewer"});
    // hand tally, starting from pipeline counts 12 up / 3 down:
    //  T1 accepted, T2 box fixed, T3 species fixed, T5 rejected (no crossing),
    //  T7 and T8 low outputs accepted: no count change
    //  T4 +1 and T6 +2 (no crossing, so upstream): up 15
    //  T7 crossing rejected: up 14
    //  T8 crossing +1 (second fish alongside): down 4
    let script: Vec<(&ReviewItem, Value)> = vec![
        (find(1, Reason::LowConfidence), text("confirmed sockeye")),
        (
            find(2, Reason::LowConfidence),
            json!({"kind": "Box", "payload": {"x": 9.0, "y": 19.0, "w": 5.0, "h": 12.0}, "author": "reviewer"}),
        ),
        (
            find(3, Reason::LowConfidence),
            json!({"kind": "Text", "payload": "coho", "corrected_species": "coho", "author": "reviewer"}),
        ),
        (find(4, Reason::LowConfidence), delta(1)),
        (find(5, Reason::LowConfidence), reject.clone()),
        (find(6, Reason::LowConfidence), delta(2)),
        (find(7, Reason::LowConfidence), text("ok")),
        (find(7, Reason::CountAmbiguity), reject),
        (find(8, Reason::LowConfidence), text("ok")),
        (find(8, Reason::CountAmbiguity), delta(1)),
    ];
    let expected = (14i64, 4i64, 10i64);
    let expected_status = [
        ReviewStatus::Accepted,
        ReviewStatus::Corrected,
        ReviewStatus::Corrected,
        ReviewStatus::Corrected,
        ReviewStatus::Rejected,
        ReviewStatus::Corrected,
        ReviewStatus::Accepted,
        ReviewStatus::Rejected,
        ReviewStatus::Accepted,
        ReviewStatus::Corrected,
    ];
    let mut conserved = true;
    for (k, (item, body)) in script.iter().enumerate() {
        let r = post(
            format!("/api/items/{}/annotations", item.item_id),
            body.clone(),
        )
        .await;
        let updated: ReviewItem = r.json().await.unwrap();
        if updated.status != expected_status[k] {
            return Err(format!(
                "step {k}: status {:?}, expected {:?}",
                updated.status, expected_status[k]
            ));
        }
        let c: CountsResponse = get("/api/counts?site=weir").await.json().await.unwrap();
        conserved &= c.queue.pending + c.queue.accepted + c.queue.corrected + c.queue.rejected
            == 10
            && c.queue.pending == 9 - k;
    }
    let again = post(
        format!("/api/items/{}/annotations", script[0].0.item_id),
        text("again"),
    )
    .await
    .status();
    let c: CountsResponse = get("/api/counts?site=weir").await.json().await.unwrap();
    let got = (
        c.corrected.upstream,
        c.corrected.downstream,
        c.corrected.net,
    );
    let export: Value = post("/api/export".into(), json!({"site": "weir"}))
        .await
        .json()
        .await
        .unwrap();
    check(
        got == expected && conserved && again == 409 && export["rows"] == 8,
        format!(
            "10 items resolved over HTTP; corrected counts {got:?}, hand tally {expected:?}; queue conserved {conserved}; re-annotation {again}; export rows {}",
            export["rows"]
        ),
    )
}

fn criterion_9() -> Outcome {
    tokio::runtime::Runtime::new()
        .unwrap()
        .block_on(review_session())
}

fn main() {
    let river = run_builtin("river-20", false);
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "assignment oracle", Box::new(criterion_1)),
        (2, "metric sanity", Box::new(criterion_2)),
        (3, "metric hand cases", Box::new(criterion_3)),
        (4, "end-to-end counting", Box::new(|| criterion_4(&river))),
        (5, "length recovery", Box::new(criterion_5)),
        (6, "echogram gating", Box::new(criterion_6)),
        (7, "determinism", Box::new(criterion_7)),
        (8, "format round trips", Box::new(criterion_8)),
        (9, "review loop conservation", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (n, name, f) in &criteria {
        let result =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                Err(format!("panicked: {}", msg.unwrap_or_default()))
            });
        match result {
            Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
