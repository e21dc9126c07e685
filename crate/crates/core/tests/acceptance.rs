//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use kinetrain_core::ems::{
    decode_frame, encode_frame, encode_raw, select_mode, synthesize, CalibrationProfile, Channel, ChannelCalibration,
    EmsCommand, EmsMode, FrameError, FrameSummary, GateOutcome, SafetyGate, SafetyLimits, Trigger, WaveformConfig,
};
use kinetrain_core::eval::{closed_loop_benefit, score_workflow};
use kinetrain_core::flight_sim::{
    integrate, step, trim_level, AircraftParams, AircraftState, Environment, FlightCondition, Scenario, TraineeSkill,
    G, KT_TO_MS,
};
use kinetrain_core::guidance::{
    validate_record, ChainRecord, GuidanceError, OracleBackend, PhaseEntry, Pipeline, PipelineConfig, PipelineInput,
    Stage, Status,
};
use kinetrain_core::knowledge_base::{Chunk, SearchFilter, Tier, VectorIndex};
use kinetrain_core::session::{read_log_file, replay, run_session, BackendChoice, SessionConfig, SessionLog};
use kinetrain_core::task_standards::{evaluate, state_on_targets};
use kinetrain_core::{Axis, Direction, FlightState, MagnitudeClass, StickOp, TaskId, TaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, Box<dyn FnOnce(&Capability) -> Check>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const TASKS: [TaskId; 4] = [TaskId::StraightLevel, TaskId::TakeoffClimb, TaskId::SteepTurn, TaskId::DeadstickLanding];

/// Logs flown once and shared by the capability, determinism and latency
/// checks.
struct Capability {
    logs: Vec<SessionLog>,
    latencies_ms: Vec<f64>,
    elapsed_s: f64,
}

fn fly_capability() -> Result<Capability, String> {
    let start = Instant::now();
    let mut logs = Vec::new();
    let mut latencies_ms = Vec::new();
    for task in TASKS {
        for condition in [FlightCondition::Normal, FlightCondition::Abnormal] {
            let cfg = SessionConfig { task, condition, seed: 1, ..SessionConfig::default() };
            let out = run_session(&cfg).map_err(|e| format!("{task} {condition}: {e}"))?;
            latencies_ms.extend(out.wall_latencies_ms);
            logs.push(out.log);
        }
    }
    Ok(Capability { logs, latencies_ms, elapsed_s: start.elapsed().as_secs_f64() })
}

fn oracle_capability(cap: &Capability) -> Check {
    let start = Instant::now();
    for log in &cap.logs {
        ensure!(log.records.len() >= 60, "{} has {} ticks", log.header.task_spec.task_id, log.records.len());
    }
    let report = score_workflow(&cap.logs).map_err(|e| e.to_string())?;
    let elapsed = cap.elapsed_s + start.elapsed().as_secs_f64();
    ensure!(
        report.total_accuracy == 1.0,
        "total accuracy {:.4}, failures {:?}",
        report.total_accuracy,
        report.failures
    );
    ensure!(report.tasks.len() == 4 && report.normal.records > 0 && report.abnormal.records > 0, "missing coverage");
    ensure!(elapsed < 60.0, "took {elapsed:.1} s");
    Ok(format!(
        "{} logs, {} ticks, accuracy 100.0% (reference 93.2%, not targeted), {elapsed:.2} s",
        cap.logs.len(),
        report.total.records
    ))
}

// ---- validator fixtures

fn fixture_input(task: TaskId, phase: usize, f: impl FnOnce(&mut FlightState)) -> PipelineInput {
    let spec = TaskSpec::builtin(task);
    let mut state = state_on_targets(&spec.phases[phase], FlightState { heading_deg: 90.0, ..FlightState::default() });
    f(&mut state);
    PipelineInput { tick: 10, task, state, report: evaluate(10, &state, &spec, phase, &[]), phase_entry: None }
}

fn set_raw<T: serde::Serialize>(chain: &mut ChainRecord, stage: Stage, value: &T) {
    let s = chain.stages.iter_mut().find(|s| s.stage == stage).expect("stage");
    s.raw = Some(serde_json::to_string(value).expect("json"));
}

struct Fixture {
    name: &'static str,
    input: PipelineInput,
    chain: ChainRecord,
    expect: (bool, bool, bool),
}

fn validator_fixtures() -> Vec<Fixture> {
    let pipeline = Pipeline::new(Arc::new(OracleBackend::new()), None, PipelineConfig::default());
    let nominal = fixture_input(TaskId::SteepTurn, 1, |_| {});
    let bank = fixture_input(TaskId::SteepTurn, 1, |s| s.bank_deg = 55.0);
    let mut entry = fixture_input(TaskId::SteepTurn, 0, |s| s.bank_deg = 0.0);
    entry.phase_entry = Some(PhaseEntry {
        index: 0,
        name: "roll_in".into(),
        tendency: TaskSpec::builtin(TaskId::SteepTurn).phases[0].stick_tendency,
    });
    let slow = fixture_input(TaskId::StraightLevel, 0, |s| s.ias_kt -= 15.0);
    let run = |i: &PipelineInput| pipeline.run(i);

    let mut out = vec![
        Fixture { name: "nominal", chain: run(&nominal), input: nominal.clone(), expect: (true, true, true) },
        Fixture { name: "bank correction", chain: run(&bank), input: bank.clone(), expect: (true, true, true) },
        Fixture { name: "pre-start", chain: run(&entry), input: entry.clone(), expect: (true, true, true) },
        Fixture { name: "voice-only airspeed", chain: run(&slow), input: slow.clone(), expect: (true, true, true) },
    ];

    let mut c = run(&bank);
    c.stages.truncate(2);
    c.packet = None;
    out.push(Fixture { name: "format stage missing", input: bank.clone(), chain: c, expect: (false, true, true) });

    let mut c = run(&bank);
    c.stages.truncate(2);
    c.stages[1].completed = false;
    c.stages[1].raw = None;
    c.stages[1].error = Some(GuidanceError::BackendTimeout { stage: Stage::Guidance, deadline_ms: 800 });
    c.guidance = None;
    c.packet = None;
    out.push(Fixture { name: "guidance timed out", input: bank.clone(), chain: c, expect: (false, true, true) });

    let mut c = run(&bank);
    c.stages[0].raw = Some("{ \"tick\": 10, ".into());
    out.push(Fixture { name: "status reply not JSON", input: bank.clone(), chain: c, expect: (true, false, true) });

    let mut c = run(&bank);
    let mut v: serde_json::Value = serde_json::from_str(c.stages[2].raw.as_ref().unwrap()).unwrap();
    v["ems_mode"] = 7.into();
    c.stages[2].raw = Some(v.to_string());
    out.push(Fixture { name: "packet reply off schema", input: bank.clone(), chain: c, expect: (true, false, true) });

    let mut c = run(&bank);
    c.packet.as_mut().unwrap().rationale.push_str(" (edited)");
    out.push(Fixture { name: "output differs from reply", input: bank.clone(), chain: c, expect: (true, false, true) });

    let mut c = run(&bank);
    let p = c.packet.as_mut().unwrap();
    p.ems_mode = Some(EmsMode::Swell);
    let p = p.clone();
    set_raw(&mut c, Stage::Format, &p);
    out.push(Fixture { name: "correction in mode 3", input: bank.clone(), chain: c, expect: (true, false, true) });

    let mut c = run(&bank);
    let p = c.packet.as_mut().unwrap();
    let op = p.stick_op.as_mut().unwrap();
    op.direction = match op.direction {
        Direction::Positive => Direction::Negative,
        Direction::Negative => Direction::Positive,
    };
    let p = p.clone();
    set_raw(&mut c, Stage::Format, &p);
    out.push(Fixture {
        name: "stick pushed with the deviation",
        input: bank.clone(),
        chain: c,
        expect: (true, true, false),
    });

    let mut c = run(&bank);
    let s = c.status_check.as_mut().unwrap();
    s.status = Status::Nominal;
    let s = s.clone();
    set_raw(&mut c, Stage::StatusCheck, &s);
    out.push(Fixture { name: "status says nominal", input: bank.clone(), chain: c, expect: (true, true, false) });

    let mut c = run(&entry);
    let p = c.packet.as_mut().unwrap();
    p.trigger = None;
    p.ems_mode = None;
    p.stick_op = None;
    let p = p.clone();
    set_raw(&mut c, Stage::Format, &p);
    out.push(Fixture { name: "phase entry without pre-start", input: entry, chain: c, expect: (true, true, false) });

    let mut c = run(&nominal);
    let p = c.packet.as_mut().unwrap();
    p.trigger = Some(Trigger::Correction);
    p.ems_mode = Some(EmsMode::Rising);
    p.stick_op = Some(StickOp::new(Axis::X, Direction::Negative, MagnitudeClass::Light));
    p.instruments = vec![kinetrain_core::guidance::Instrument::AttitudeIndicator];
    let p = p.clone();
    set_raw(&mut c, Stage::Format, &p);
    out.push(Fixture { name: "cue while in band", input: nominal, chain: c, expect: (true, true, false) });

    out
}

fn validator_suite() -> Check {
    let fixtures = validator_fixtures();
    let passing = fixtures.iter().filter(|f| f.expect == (true, true, true)).count();
    let failing = fixtures.len() - passing;
    ensure!(passing >= 4 && failing >= 8, "{passing} passing and {failing} failing fixtures");
    let mut wrong = Vec::new();
    for f in &fixtures {
        let v = validate_record(&f.input, &f.chain);
        let (c1, c2, c3) = f.expect;
        if (v.c1, v.c2, v.c3) != f.expect || v.overall != (c1 && c2 && c3) {
            wrong.push(format!("{}: got {}/{}/{} {:?}", f.name, v.c1, v.c2, v.c3, v.failures));
        }
    }
    ensure!(wrong.is_empty(), "misclassified: {}", wrong.join("; "));
    Ok(format!("{} fixtures ({passing} pass, {failing} fail), 0 misclassified", fixtures.len()))
}

// ---- waveforms

fn waveform_grid() -> Check {
    let profile = CalibrationProfile::demo();
    let cfg = WaveformConfig::default();
    let mut n = 0;
    for dur in [200, 800, 3000] {
        for mag in [MagnitudeClass::Light, MagnitudeClass::Firm] {
            for mode in EmsMode::ALL {
                let e = synthesize(mode, mag, dur, &profile, Channel::Right, &cfg).map_err(|e| e.to_string())?;
                let s = &e.samples;
                let tag = format!("{mode:?} {mag:?} {dur} ms");
                ensure!(s.len() >= 2, "{tag}: {} samples", s.len());
                ensure!(s.iter().all(|a| (0.0..=1.0).contains(a)), "{tag}: sample out of [0,1]");
                let up = s.windows(2).all(|w| w[1] >= w[0]);
                let down = s.windows(2).all(|w| w[1] <= w[0]);
                let ok = match mode {
                    EmsMode::Constant => s.iter().all(|a| *a == s[0]),
                    EmsMode::Rising => up && s[s.len() - 1] > s[0],
                    EmsMode::Falling => down && s[s.len() - 1] < s[0],
                    EmsMode::Swell => {
                        let k = s.iter().enumerate().fold(0, |b, (i, a)| if *a > s[b] { i } else { b });
                        0 < k
                            && k < s.len() - 1
                            && s[..=k].windows(2).all(|w| w[1] >= w[0])
                            && s[k..].windows(2).all(|w| w[1] <= w[0])
                    }
                };
                ensure!(ok, "{tag}: shape invariant broken");
                n += 1;
            }
        }
    }
    ensure!(
        select_mode(Trigger::PreStart).number() == 3,
        "pre_start maps to mode {}",
        select_mode(Trigger::PreStart).number()
    );
    ensure!(
        select_mode(Trigger::Correction).number() == 2,
        "correction maps to mode {}",
        select_mode(Trigger::Correction).number()
    );
    let op = StickOp::new(Axis::Y, Direction::Positive, MagnitudeClass::Firm);
    for (trigger, mode) in [(Trigger::PreStart, 3), (Trigger::Correction, 2)] {
        let c = EmsCommand::for_stick_op(&op, trigger, 1, 800, &profile, &cfg).map_err(|e| e.to_string())?;
        ensure!(c.mode().number() == mode, "{trigger:?} command in mode {}", c.mode().number());
    }
    Ok(format!("{n} envelopes hold their shape in [0,1]; pre_start -> 3, correction -> 2"))
}

// ---- safety gate fuzz

fn random_profile(rng: &mut ChaCha8Rng) -> CalibrationProfile {
    let ceiling: f64 = rng.gen_range(10.0..30.0);
    let channels = Channel::ALL
        .iter()
        .map(|c| {
            let perception: f64 = rng.gen_range(0.5..3.0);
            let motion = perception + rng.gen_range(0.5..4.0);
            let comfort = (motion + rng.gen_range(0.5..8.0)).min(ceiling);
            (
                *c,
                ChannelCalibration {
                    perception_threshold_ma: perception,
                    motion_threshold_ma: motion,
                    max_comfort_ma: comfort,
                },
            )
        })
        .collect();
    CalibrationProfile { subject_id: "fuzz".into(), ceiling_ma: ceiling, channels }
}

fn random_op(rng: &mut ChaCha8Rng) -> StickOp {
    let axis = if rng.gen() { Axis::X } else { Axis::Y };
    let dir = if rng.gen() { Direction::Positive } else { Direction::Negative };
    let mag = if rng.gen() { MagnitudeClass::Light } else { MagnitudeClass::Firm };
    StickOp::new(axis, dir, mag)
}

/// Largest on-time of any window of length `w` over sorted disjoint
/// intervals. The on-time is piecewise linear in the window start, so it
/// peaks where an edge of the window meets an interval endpoint.
fn max_window_on(intervals: &[(u64, u64)], w: u64) -> u64 {
    let mut starts = BTreeSet::new();
    for &(s, e) in intervals {
        for x in [s as i64, e as i64, s as i64 - w as i64, e as i64 - w as i64] {
            starts.insert(x);
        }
    }
    starts
        .into_iter()
        .map(|w0| {
            let w1 = w0 + w as i64;
            intervals.iter().map(|&(a, b)| ((b as i64).min(w1) - (a as i64).max(w0)).max(0) as u64).sum()
        })
        .max()
        .unwrap_or(0)
}

fn safety_fuzz() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    let limits = SafetyLimits::default();
    let cfg = WaveformConfig::default();
    let (mut total, mut passed, mut clamped, mut rejected) = (0, 0, 0, 0);
    for _block in 0..10 {
        let profile = random_profile(&mut rng);
        let mut gate = SafetyGate::new(limits);
        let mut admitted: Vec<EmsCommand> = Vec::new();
        let mut t = 0u64;
        for _ in 0..1000 {
            t += rng.gen_range(0..1500);
            let op = random_op(&mut rng);
            let trigger = if rng.gen_bool(0.2) { Trigger::PreStart } else { Trigger::Correction };
            let dur = rng.gen_range(200..=3000);
            let mut c =
                EmsCommand::for_stick_op(&op, trigger, t / 1000, dur, &profile, &cfg).map_err(|e| e.to_string())?;
            c.start_ms = t;
            let cal = profile.channels[&c.channel];
            c.peak_ma = match rng.gen_range(0..10) {
                0 => profile.ceiling_ma * rng.gen_range(1.0..3.0),
                1 => f64::NAN,
                _ => cal.current_for_fraction(rng.gen_range(-0.2..2.0)),
            };
            total += 1;
            match gate.admit(&c, &profile) {
                GateOutcome::Rejected { .. } => rejected += 1,
                outcome => {
                    if matches!(outcome, GateOutcome::Clamped { .. }) {
                        clamped += 1;
                    } else {
                        passed += 1;
                    }
                    let cmd = outcome.into_command().unwrap();
                    let frame = encode_frame(&cmd, &profile).map_err(|e| e.to_string())?;
                    let f = decode_frame(&frame).map_err(|e| e.to_string())?;
                    let ma = cal.motion_threshold_ma + f64::from(f.peak) / 255.0 * cal.drive_range_ma();
                    ensure!(
                        ma <= cal.max_comfort_ma + 1e-9,
                        "frame peak {ma:.3} mA above comfort {:.3}",
                        cal.max_comfort_ma
                    );
                    ensure!(cmd.peak_ma <= cal.max_comfort_ma, "gated command at {} mA", cmd.peak_ma);
                    admitted.push(cmd);
                }
            }
        }
        for ch in Channel::ALL {
            let iv: Vec<(u64, u64)> =
                admitted.iter().filter(|c| c.channel == ch).map(|c| (c.start_ms, c.end_ms())).collect();
            for w in iv.windows(2) {
                ensure!(w[1].0 >= w[0].1 + limits.min_gap_ms, "{ch}: gap {} ms", w[1].0 as i64 - w[0].1 as i64);
            }
            let on = max_window_on(&iv, limits.window_ms);
            ensure!(on as f64 <= limits.max_duty * limits.window_ms as f64, "{ch}: {on} ms on in one window");
        }
        for c in &admitted {
            let active: BTreeSet<Channel> = admitted
                .iter()
                .filter(|o| o.start_ms <= c.start_ms && c.start_ms < o.end_ms())
                .map(|o| o.channel)
                .collect();
            ensure!(active.len() <= limits.max_concurrent_channels, "{} channels at {} ms", active.len(), c.start_ms);
        }
    }
    Ok(format!("{total} commands: {passed} pass, {clamped} clamped, {rejected} rejected; no frame above comfort, duty and gap hold"))
}

// ---- frame codec

/// CRC-8, polynomial 0x07, bit by bit.
fn crc8_bitwise(bytes: &[u8]) -> u8 {
    let mut crc = 0u8;
    for b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ 0x07 } else { crc << 1 };
        }
    }
    crc
}

fn expected_summary(op: &StickOp, trigger: Trigger, cmd: &EmsCommand, profile: &CalibrationProfile) -> FrameSummary {
    let channel = match (op.axis, op.direction) {
        (Axis::X, Direction::Positive) => Channel::Right,
        (Axis::X, Direction::Negative) => Channel::Left,
        (Axis::Y, Direction::Positive) => Channel::Back,
        (Axis::Y, Direction::Negative) => Channel::Fwd,
    };
    let cal = profile.channels[&channel];
    let fraction =
        ((cmd.peak_ma - cal.motion_threshold_ma) / (cal.max_comfort_ma - cal.motion_threshold_ma)).clamp(0.0, 1.0);
    FrameSummary {
        channel,
        mode: if trigger == Trigger::PreStart { EmsMode::Swell } else { EmsMode::Rising },
        peak: (255.0 * fraction).round() as u8,
        duration_ms: cmd.duration_ms() as u16,
        pre_start: trigger == Trigger::PreStart,
    }
}

fn frame_codec() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0dec);
    let cfg = WaveformConfig::default();
    let mut corruptions = 0;
    for i in 0..1000 {
        let profile = random_profile(&mut rng);
        let op = random_op(&mut rng);
        let trigger = if rng.gen() { Trigger::PreStart } else { Trigger::Correction };
        let mut cmd = EmsCommand::for_stick_op(&op, trigger, i, rng.gen_range(200..=3000), &profile, &cfg)
            .map_err(|e| e.to_string())?;
        let cal = profile.channels[&cmd.channel];
        cmd.peak_ma = rng.gen_range(cal.motion_threshold_ma..=cal.max_comfort_ma);
        let frame = encode_frame(&cmd, &profile).map_err(|e| e.to_string())?;
        ensure!(frame[7] == crc8_bitwise(&frame[..7]), "command {i}: checksum byte {:#04x}", frame[7]);
        let want = expected_summary(&op, trigger, &cmd, &profile);
        let got = decode_frame(&frame).map_err(|e| format!("command {i}: {e}"))?;
        ensure!(got == want, "command {i}: decoded {got:?}, expected {want:?}");
        ensure!(encode_raw(&got) == frame, "command {i}: re-encode differs");

        let len = rng.gen_range(0..8);
        ensure!(decode_frame(&frame[..len]) == Err(FrameError::TruncatedFrame(len)), "truncated to {len}");

        let mut f = frame;
        f[0] = loop {
            let b: u8 = rng.gen();
            if b != frame[0] {
                break b;
            }
        };
        ensure!(matches!(decode_frame(&f), Err(FrameError::BadSync(_))), "bad sync accepted");

        let mut f = frame;
        let pos = rng.gen_range(1..8);
        f[pos] ^= rng.gen_range(1..=255u8);
        ensure!(
            matches!(decode_frame(&f), Err(FrameError::BadChecksum { .. })),
            "byte {pos} corruption: {:?}",
            decode_frame(&f)
        );

        let mut f = frame;
        match rng.gen_range(0..3) {
            0 => f[1] = rng.gen_range(4..=255),
            1 => f[2] = if rng.gen() { 0 } else { rng.gen_range(5..=255) },
            _ => f[6] = rng.gen_range(2..=255),
        }
        f[7] = crc8_bitwise(&f[..7]);
        ensure!(matches!(decode_frame(&f), Err(FrameError::InvalidField(_))), "invalid field accepted: {f:02x?}");
        corruptions += 4;
    }
    Ok(format!("1000 round trips exact; {corruptions} corrupted frames rejected with the right class"))
}

// ---- index exactness

fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

fn index_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1d5);
    let dim = 12;
    let n = 1000;
    let mut index = VectorIndex::new(dim, "fixture");
    let mut rows: Vec<(Chunk, Vec<f64>)> = Vec::new();
    let mut ids: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.gen_range(0..=i));
    }
    for (k, id) in ids.into_iter().enumerate() {
        // small integer components give many exact and scaled duplicates
        let v: Vec<f64> = if k > 0 && rng.gen_bool(0.15) {
            let (_, prev) = &rows[rng.gen_range(0..rows.len())];
            let s = f64::from(rng.gen_range(1..4));
            prev.iter().map(|x| x * s).collect()
        } else {
            (0..dim).map(|_| f64::from(rng.gen_range(-2..=2))).collect()
        };
        let chunk = Chunk {
            chunk_id: format!("c{id:04}"),
            doc_id: format!("d{}", id / 4),
            tier: Tier::ALL[id % 3],
            title: String::new(),
            tags: Vec::new(),
            position: id % 4,
            text: String::new(),
        };
        index.add(chunk.clone(), v.clone()).map_err(|e| e.to_string())?;
        rows.push((chunk, v));
    }
    let mut ties = 0;
    for q in 0..100 {
        let query: Vec<f64> = (0..dim).map(|_| f64::from(rng.gen_range(-2..=2))).collect();
        let k = rng.gen_range(1..=10);
        let filter = if q % 2 == 0 {
            SearchFilter::default()
        } else {
            SearchFilter { tiers: [Tier::ALL[q % 3]].into_iter().collect(), ..SearchFilter::default() }
        };
        let mut want: Vec<(f64, &str)> = rows
            .iter()
            .filter(|(c, _)| filter.tiers.is_empty() || filter.tiers.contains(&c.tier))
            .map(|(c, v)| (cosine_oracle(&query, v), c.chunk_id.as_str()))
            .collect();
        want.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        want.truncate(k);
        ties += want.windows(2).filter(|w| w[0].0 == w[1].0).count();
        let got = index.search(&query, k, &filter).map_err(|e| e.to_string())?;
        let got_ids: Vec<&str> = got.iter().map(|h| h.chunk.chunk_id.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|w| w.1).collect();
        ensure!(got_ids == want_ids, "query {q}: {got_ids:?} vs {want_ids:?}");
        for (h, w) in got.iter().zip(&want) {
            ensure!(h.score == w.0, "query {q}: score {} vs {}", h.score, w.0);
        }
        ensure!(got.iter().enumerate().all(|(i, h)| h.rank == i + 1), "query {q}: ranks");
    }
    Ok(format!("100 queries over {n} chunks match the linear scan ({ties} tied neighbours)"))
}

// ---- physics

fn physics() -> Check {
    let p = AircraftParams::default();
    let env = Environment::calm();
    let mut worst: f64 = 0.0;
    for ias in [90.0, 120.0] {
        for bank in [30.0f64, 45.0, 60.0] {
            let (s, input) = trim_level(ias, 4500.0, &p).map_err(|e| e.to_string())?;
            let mut fs = s.observe(&input, &p, &env, 0.0);
            fs.bank_deg = bank;
            let next = step(&fs, &input, &p, &env, 1.0).map_err(|e| e.to_string())?.0;
            let turned = (next.heading_deg - fs.heading_deg + 540.0).rem_euclid(360.0) - 180.0;
            let v = (fs.ias_kt + next.ias_kt) / 2.0 * KT_TO_MS;
            let expected = (G * bank.to_radians().tan() / v).to_degrees();
            let err = (turned - expected).abs() / expected;
            ensure!(err <= 0.02, "{bank} deg at {ias} kt: {turned:.3} vs {expected:.3} deg/s");
            worst = worst.max(err);
        }
    }

    let mut drift: f64 = 0.0;
    for (ias, alt) in [(110.0, 4500.0), (90.0, 3000.0)] {
        let (s, input) = trim_level(ias, alt, &p).map_err(|e| e.to_string())?;
        let mut fs = s.observe(&input, &p, &env, 0.0);
        for _ in 0..60 {
            fs = step(&fs, &input, &p, &env, 1.0).map_err(|e| e.to_string())?.0;
        }
        let d = (fs.altitude_ft - alt).abs();
        ensure!(d <= 5.0, "trim at {ias} kt drifted {d:.2} ft");
        drift = drift.max(d);
    }

    let energy = |s: &AircraftState| s.h_m * G + s.v_ms * s.v_ms / 2.0;
    for (ias, bank, gamma) in [(70.0, 0.0f64, 0.0), (100.0, 30.0, 0.05), (130.0, -45.0, -0.08), (90.0, 60.0, 0.1)] {
        let (mut s, mut input) = trim_level(ias, 4000.0, &p).map_err(|e| e.to_string())?;
        input.throttle = 0.0;
        s.phi = bank.to_radians();
        s.gamma = gamma;
        let mut e = energy(&s);
        for i in 0..400 {
            s = integrate(&s, &input, &p, &env, 0.05).map_err(|e| e.to_string())?.state;
            let e2 = energy(&s);
            ensure!(e2 <= e + 1e-9, "energy rose at substep {i} from {ias} kt");
            e = e2;
        }
    }
    Ok(format!(
        "turn rate within {:.3}% of g tan(bank)/V, trim drift {drift:.3} ft over 60 s, zero-thrust energy non-increasing",
        100.0 * worst
    ))
}

// ---- closed loop

fn closed_loop() -> Check {
    let skill = TraineeSkill { gain_error: 0.6, noise_sigma: 0.08, reaction_delay_s: 1.0, compliance: 0.5 };
    let seeds: Vec<u64> = (0..20).collect();
    let b = closed_loop_benefit(TaskId::SteepTurn, skill, &seeds).map_err(|e| e.to_string())?;
    let detail = format!(
        "bank in band {:.3} -> {:.3} ({:+.3}), altitude in band {:.3} -> {:.3} ({:+.3}) over 20 seeds",
        b.bank_off,
        b.bank_on,
        b.bank_delta(),
        b.altitude_off,
        b.altitude_on,
        b.altitude_delta()
    );
    ensure!(b.bank_delta() > 0.0 && b.altitude_delta() > 0.0, "{detail}");
    Ok(detail)
}

// ---- determinism and replay

fn determinism(cap: &Capability) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (task, seed) in [(TaskId::SteepTurn, 7), (TaskId::DeadstickLanding, 8)] {
        let cfg =
            SessionConfig { task, backend: BackendChoice::Oracle { delay_ms: 0 }, seed, ..SessionConfig::default() };
        let a = run_session(&cfg).map_err(|e| e.to_string())?.log.to_jsonl();
        let b = run_session(&cfg).map_err(|e| e.to_string())?.log.to_jsonl();
        ensure!(a == b, "{task} seed {seed}: logs differ");
        let path = dir.path().join(format!("{task}.jsonl"));
        std::fs::write(&path, &a).map_err(|e| e.to_string())?;
        let back = read_log_file(&path).map_err(|e| e.to_string())?;
        let rep = replay(&back);
        ensure!(rep.is_clean(), "{task}: {:?}", rep.mismatches.first());
    }
    let mut ticks = 0;
    for log in &cap.logs {
        let rep = replay(log);
        ensure!(rep.is_clean(), "{}: {:?}", log.header.task_spec.task_id, rep.mismatches.first());
        ticks += rep.ticks;
    }
    Ok(format!("2 seeds byte-identical; {} logs ({ticks} ticks) replay with 0 mismatches", cap.logs.len() + 2))
}

// ---- latency

fn latency(cap: &Capability) -> Check {
    let mut l = cap.latencies_ms.clone();
    ensure!(!l.is_empty(), "no latencies");
    l.sort_by(f64::total_cmp);
    let p99 = l[((l.len() as f64 * 0.99).ceil() as usize).min(l.len()) - 1];
    ensure!(p99 < 50.0, "p99 {p99:.2} ms");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("short.json");
    let mut sc = Scenario::for_task(TaskId::SteepTurn, FlightCondition::Abnormal);
    sc.duration_s = 5;
    std::fs::write(&path, serde_json::to_string(&sc).unwrap()).map_err(|e| e.to_string())?;
    let base =
        SessionConfig { task: TaskId::SteepTurn, scenario_path: Some(path), seed: 2, ..SessionConfig::default() };
    let on_time = run_session(&base).map_err(|e| e.to_string())?.log;
    let cues: usize = on_time.records.iter().map(|r| r.commands.len()).sum();
    ensure!(cues > 0, "control run emitted no commands");
    let slow = SessionConfig { backend: BackendChoice::Oracle { delay_ms: 900 }, ..base };
    let out = run_session(&slow).map_err(|e| e.to_string())?;
    let late: Vec<_> = out.log.records.iter().filter(|r| r.late || !r.verdict.c1).collect();
    ensure!(late.len() == out.log.records.len(), "{} of {} ticks overran", late.len(), out.log.records.len());
    let emitted: usize = late.iter().map(|r| r.commands.len()).sum();
    ensure!(emitted == 0, "{emitted} commands from overrun ticks");
    Ok(format!(
        "p99 {p99:.2} ms over {} ticks; {} overrun ticks emitted 0 commands (on-time control run: {cues})",
        l.len(),
        late.len()
    ))
}

fn main() -> ExitCode {
    let checks: Vec<Criterion> = vec![
        ("oracle capability", Box::new(oracle_capability)),
        ("validator fixtures", Box::new(|_| validator_suite())),
        ("waveform properties", Box::new(|_| waveform_grid())),
        ("safety composition", Box::new(|_| safety_fuzz())),
        ("frame codec", Box::new(|_| frame_codec())),
        ("vector index exactness", Box::new(|_| index_exactness())),
        ("flight-model physics", Box::new(|_| physics())),
        ("closed-loop benefit", Box::new(|_| closed_loop())),
        ("determinism and replay", Box::new(determinism)),
        ("latency budget", Box::new(latency)),
    ];
    let cap = match fly_capability() {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL  capability runs: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&cap))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.2} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
