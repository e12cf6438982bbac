//! Synthetic 9-DOF gait signals and a behavioural model of a person labelling
//! their own activity with one of the mechanisms.
//!
//! Label events in a simulated bundle are never written directly: the
//! simulated person produces raw mechanism inputs (presses, force ramps,
//! slider sweeps, taps) and those are replayed through [`Machine`]. Ground
//! truth is returned separately and never reaches the CSV.

use std::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::{InputEvent, InputKind, Machine, MechanismConfig, MechanismId, TouchConfig, BUTTON_A, BUTTON_B};
use crate::stream::{ActivityLabel, SensorFrame, StreamBundle, StreamMeta, DEFAULT_SAMPLE_RATE_HZ};

const GRAVITY: f64 = 9.81;

// RNG stream ids; each concern draws from its own stream so that changing
// one knob leaves the other draws untouched.
const STREAM_NOISE: u64 = 1;
const STREAM_REACTION: u64 = 2;
const STREAM_MISLABEL: u64 = 3;
const STREAM_WRONG_LABEL: u64 = 4;
const STREAM_CORRECTION: u64 = 5;
const STREAM_JITTER: u64 = 6;
const STREAM_USERS: u64 = 7;
const STREAM_SESSIONS: u64 = 8;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid route: {0}")]
    Route(String),
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub activity: ActivityLabel,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteScript {
    pub segments: Vec<Segment>,
}

impl RouteScript {
    /// Repeats walk, upstairs, walk, downstairs with half the time spent
    /// walking, in cycles of roughly one minute.
    pub fn default_route(total_s: f64) -> Self {
        let cycles = (total_s / 60.0).round().max(1.0) as usize;
        let cycle = total_s / cycles as f64;
        let plan = [
            (ActivityLabel::Walking, 0.25),
            (ActivityLabel::Upstairs, 0.25),
            (ActivityLabel::Walking, 0.25),
            (ActivityLabel::Downstairs, 0.25),
        ];
        let segments = (0..cycles)
            .flat_map(|_| plan)
            .map(|(activity, share)| Segment {
                activity,
                duration_s: cycle * share,
            })
            .collect();
        Self { segments }
    }

    pub fn total_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.segments.is_empty() {
            return Err(SimError::Route("no segments".into()));
        }
        if let Some(s) = self.segments.iter().find(|s| !(s.duration_s > 0.0)) {
            return Err(SimError::Route(format!("segment duration {} is not positive", s.duration_s)));
        }
        Ok(())
    }

    /// Training runs need every activity on the route.
    pub fn covers_all_activities(&self) -> bool {
        ActivityLabel::ALL
            .iter()
            .all(|a| self.segments.iter().any(|s| s.activity == *a))
    }

    /// Segment start times in ms.
    fn starts_ms(&self) -> Vec<u64> {
        let mut acc = 0.0_f64;
        self.segments
            .iter()
            .map(|s| {
                let t = (acc * 1000.0).round() as u64;
                acc += s.duration_s;
                t
            })
            .collect()
    }

    fn activity_at(&self, starts: &[u64], t_ms: u64) -> ActivityLabel {
        let idx = starts.partition_point(|&s| s <= t_ms).saturating_sub(1);
        self.segments[idx].activity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityGait {
    pub freq_hz: f64,
    /// Vertical acceleration amplitude, m/s².
    pub accel_amp: f64,
    /// Pitch-rate amplitude, deg/s.
    pub pitch_rate_amp: f64,
    /// Mean pitch rate on gyro-y, deg/s.
    pub pitch_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    pub walking: ActivityGait,
    pub upstairs: ActivityGait,
    pub downstairs: ActivityGait,
    /// Noise σ per channel in CSV column order.
    pub noise_sigma: [f64; 9],
    /// Fixed magnetic field vector, µT.
    pub heading: [f64; 3],
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            walking: ActivityGait {
                freq_hz: 1.8,
                accel_amp: 2.0,
                pitch_rate_amp: 20.0,
                pitch_offset: 0.0,
            },
            upstairs: ActivityGait {
                freq_hz: 1.4,
                accel_amp: 3.0,
                pitch_rate_amp: 25.0,
                pitch_offset: 15.0,
            },
            downstairs: ActivityGait {
                freq_hz: 1.4,
                accel_amp: 2.5,
                pitch_rate_amp: 25.0,
                pitch_offset: -15.0,
            },
            noise_sigma: [0.4; 9],
            heading: [20.0, 0.0, 40.0],
        }
    }
}

impl GaitParams {
    pub fn noise_free() -> Self {
        Self {
            noise_sigma: [0.0; 9],
            ..Self::default()
        }
    }

    pub fn gait(&self, activity: ActivityLabel) -> &ActivityGait {
        match activity {
            ActivityLabel::Walking => &self.walking,
            ActivityLabel::Upstairs => &self.upstairs,
            ActivityLabel::Downstairs => &self.downstairs,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for a in ActivityLabel::ALL {
            let g = self.gait(a);
            if !(g.freq_hz > 0.0) {
                return Err(SimError::Params(format!("{a} frequency must be positive")));
            }
        }
        if self.noise_sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(SimError::Params("noise σ must be non-negative".into()));
        }
        Ok(())
    }
}

/// Noise-free channel values of an activity at time `t_s`.
pub fn clean_signal(activity: ActivityLabel, t_s: f64, params: &GaitParams) -> [f64; 9] {
    let g = params.gait(activity);
    let phase = TAU * g.freq_hz * t_s;
    let (a, p) = (g.accel_amp, g.pitch_rate_amp);
    let [mx, my, mz] = params.heading;
    [
        0.5 * a * (2.0 * phase).sin(),
        0.5 * a * phase.cos(),
        GRAVITY + a * phase.sin(),
        0.5 * p * (2.0 * phase).sin(),
        g.pitch_offset + p * phase.sin(),
        0.5 * p * phase.cos(),
        mx,
        my,
        mz,
    ]
}

fn synth_frame(activity: ActivityLabel, t_ms: u64, params: &GaitParams, rng: &mut ChaCha8Rng) -> SensorFrame {
    let mut v = clean_signal(activity, t_ms as f64 / 1000.0, params);
    for (x, sigma) in v.iter_mut().zip(params.noise_sigma) {
        let z: f64 = StandardNormal.sample(rng);
        *x += sigma * z;
    }
    SensorFrame::from_values(t_ms, v)
}

fn frame_time(k: u64, rate_hz: f64) -> u64 {
    (k as f64 * 1000.0 / rate_hz).round() as u64
}

/// `duration_s · rate_hz` frames of one activity, starting at t = 0.
pub fn gen_activity_signal(
    activity: ActivityLabel,
    duration_s: f64,
    params: &GaitParams,
    rate_hz: f64,
    seed: u64,
) -> Vec<SensorFrame> {
    let mut rng = rng_for(seed, STREAM_NOISE);
    let n = (duration_s * rate_hz).round() as u64;
    (0..n)
        .map(|k| synth_frame(activity, frame_time(k, rate_hz), params, &mut rng))
        .collect()
}

/// Log-normal delay parametrised by its median; a zero median means no delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub median_ms: f64,
    pub sigma: f64,
}

impl DelayModel {
    pub const ZERO: DelayModel = DelayModel {
        median_ms: 0.0,
        sigma: 0.0,
    };

    /// `z` is a standard normal draw, kept outside so draws stay coupled
    /// across parameter changes.
    fn delay_ms(&self, z: f64, scale: f64) -> u64 {
        if self.median_ms <= 0.0 {
            return 0;
        }
        (self.median_ms * (self.sigma * z).exp() * scale).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dexterity {
    pub two_adjacent: f64,
    pub two_opposite: f64,
    pub three_button: f64,
    pub touch: f64,
    pub slider: f64,
    pub app: f64,
}

impl Default for Dexterity {
    fn default() -> Self {
        Self {
            two_adjacent: 1.1,
            two_opposite: 1.4,
            three_button: 1.2,
            touch: 1.0,
            slider: 1.0,
            app: 1.3,
        }
    }
}

impl Dexterity {
    pub fn multiplier(&self, m: MechanismId) -> f64 {
        match m {
            MechanismId::TwoAdjacent => self.two_adjacent,
            MechanismId::TwoOpposite => self.two_opposite,
            MechanismId::ThreeButton => self.three_button,
            MechanismId::Touch => self.touch,
            MechanismId::Slider => self.slider,
            MechanismId::App => self.app,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabellerModel {
    pub reaction: DelayModel,
    /// Probability that a transition is first labelled wrongly.
    pub mislabel_prob: f64,
    pub correction: DelayModel,
    /// σ of the gap between the two presses of a simultaneous two-button
    /// press, ms; doubled for opposite placement.
    pub press_jitter_ms: f64,
    pub dexterity: Dexterity,
}

impl Default for LabellerModel {
    fn default() -> Self {
        Self {
            reaction: DelayModel {
                median_ms: 600.0,
                sigma: 0.35,
            },
            mislabel_prob: 0.08,
            correction: DelayModel {
                median_ms: 1500.0,
                sigma: 0.4,
            },
            press_jitter_ms: 40.0,
            dexterity: Dexterity::default(),
        }
    }
}

impl LabellerModel {
    /// Labels every transition instantly and correctly.
    pub fn perfect() -> Self {
        Self {
            reaction: DelayModel::ZERO,
            mislabel_prob: 0.0,
            correction: DelayModel::ZERO,
            press_jitter_ms: 0.0,
            dexterity: Dexterity::default(),
        }
    }

    /// Draws the `index`-th simulated participant from a population of
    /// labellers around the defaults.
    pub fn draw_user(population_seed: u64, index: u64) -> Self {
        let mut rng = rng_for(population_seed.wrapping_add(index), STREAM_USERS);
        let base = Self::default();
        Self {
            reaction: DelayModel {
                median_ms: rng.gen_range(400.0..900.0),
                ..base.reaction
            },
            mislabel_prob: rng.gen_range(0.02..0.12),
            correction: DelayModel {
                median_ms: rng.gen_range(1000.0..2500.0),
                ..base.correction
            },
            press_jitter_ms: rng.gen_range(25.0..60.0),
            ..base
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.mislabel_prob) {
            return Err(SimError::Params("mislabel probability must lie in [0, 1]".into()));
        }
        for d in [self.reaction, self.correction] {
            if !(d.median_ms >= 0.0) || !(d.sigma >= 0.0) {
                return Err(SimError::Params("delay parameters must be non-negative".into()));
            }
        }
        if !(self.press_jitter_ms >= 0.0) {
            return Err(SimError::Params("press jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Readings of force and slider sensors while being manipulated.
const SENSOR_PERIOD_MS: u64 = 50;
/// Dwell on an intermediate touch level; longer than the default hold so
/// lower labels are recorded on the way up.
const TOUCH_PASS_MS: u64 = 250;
const TOUCH_SETTLE_MS: u64 = 400;
const SLIDER_SWEEP_STEPS: u64 = 6;
const BUTTON_HOLD_MS: u64 = 180;
const GAP_MS: u64 = 50;

/// Produces the raw inputs a person would make to record labels.
struct InputScript {
    mechanism: MechanismId,
    config: MechanismConfig,
    inputs: Vec<InputEvent>,
    /// Time after which the next interaction may begin.
    free_at: u64,
    slider_pos: Option<u16>,
}

impl InputScript {
    fn new(mechanism: MechanismId, config: MechanismConfig) -> Self {
        Self {
            mechanism,
            config,
            inputs: Vec::new(),
            free_at: 0,
            slider_pos: None,
        }
    }

    fn push(&mut self, t_ms: u64, kind: InputKind) {
        self.inputs.push(InputEvent::new(t_ms, kind));
    }

    /// Performs the interaction for `label`, starting no earlier than `at`.
    /// `jitter_ms` is the gap between the presses of a two-button walk.
    fn record(&mut self, at: u64, label: ActivityLabel, jitter_ms: u64) {
        let t = at.max(self.free_at);
        let end = match self.mechanism {
            MechanismId::ThreeButton => {
                self.push(t, InputKind::ButtonDown(label.code()));
                self.push(t + 100, InputKind::ButtonUp(label.code()));
                t + 100
            }
            MechanismId::App => {
                self.push(t, InputKind::Tap(label));
                t
            }
            MechanismId::TwoAdjacent | MechanismId::TwoOpposite => {
                let release = t + jitter_ms + BUTTON_HOLD_MS;
                match label {
                    ActivityLabel::Walking => {
                        self.push(t, InputKind::ButtonDown(BUTTON_A));
                        self.push(t + jitter_ms, InputKind::ButtonDown(BUTTON_B));
                        self.push(release, InputKind::ButtonUp(BUTTON_A));
                        self.push(release, InputKind::ButtonUp(BUTTON_B));
                    }
                    other => {
                        let id = if other == ActivityLabel::Upstairs { BUTTON_A } else { BUTTON_B };
                        self.push(t, InputKind::ButtonDown(id));
                        self.push(release, InputKind::ButtonUp(id));
                    }
                }
                // The next press must clear the lockout or it is lost.
                release.max(t + self.config.two_button.simultaneity_window_ms + self.config.two_button.lockout_ms)
            }
            MechanismId::Touch => {
                let touch = self.config.touch;
                let band_raw = |level: u8| match level {
                    0 => touch.t1 / 2,
                    1 => (touch.t1 + touch.t2) / 2,
                    _ => (touch.t2 + crate::mechanisms::RAW_MAX) / 2,
                };
                let target = TouchConfig::level_of_label(label);
                let mut now = t;
                for level in 0..=target {
                    let dwell = if level == target { TOUCH_SETTLE_MS } else { TOUCH_PASS_MS };
                    let until = now + dwell;
                    while now < until {
                        self.push(now, InputKind::Force(band_raw(level)));
                        now += SENSOR_PERIOD_MS;
                    }
                }
                self.push(now, InputKind::Force(0));
                now
            }
            MechanismId::Slider => {
                let slider = self.config.slider;
                let goal = slider.centre(label);
                match self.slider_pos {
                    None => self.push(t, InputKind::Slider(goal)),
                    Some(from) => {
                        for step in 1..=SLIDER_SWEEP_STEPS {
                            let pos = from as f64 + (goal as f64 - from as f64) * step as f64 / SLIDER_SWEEP_STEPS as f64;
                            self.push(t + (step - 1) * SENSOR_PERIOD_MS, InputKind::Slider(pos.round() as u16));
                        }
                    }
                }
                self.slider_pos = Some(goal);
                t + (SLIDER_SWEEP_STEPS - 1) * SENSOR_PERIOD_MS
            }
        };
        self.free_at = end + GAP_MS;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSession {
    pub bundle: StreamBundle,
    /// Ground-truth activity of every frame.
    pub truth: Vec<ActivityLabel>,
    /// Raw mechanism inputs the simulated person made.
    pub inputs: Vec<InputEvent>,
}

impl SimulatedSession {
    /// Fraction of frames whose fused label equals ground truth; frames
    /// without a label count as disagreement.
    pub fn label_agreement(&self) -> f64 {
        label_agreement(&self.bundle, &self.truth)
    }

    /// Ground-truth sidecar CSV, `t_ms,true_label`.
    pub fn truth_csv(&self) -> String {
        let mut out = String::from("t_ms,true_label\n");
        for (f, l) in self.bundle.frames.iter().zip(&self.truth) {
            out.push_str(&format!("{},{}\n", f.t_ms, l.code()));
        }
        out
    }
}

pub fn label_agreement(bundle: &StreamBundle, truth: &[ActivityLabel]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let fused = bundle.fused();
    let agree = fused.iter().zip(truth).filter(|(s, t)| s.label == Some(**t)).count();
    agree as f64 / truth.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub user_id: String,
    pub mechanism: MechanismId,
    pub route: RouteScript,
    pub gait: GaitParams,
    pub labeller: LabellerModel,
    pub mechanism_config: MechanismConfig,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl SessionSpec {
    pub fn new(user_id: impl Into<String>, mechanism: MechanismId, route: RouteScript, seed: u64) -> Self {
        Self {
            user_id: user_id.into(),
            mechanism,
            route,
            gait: GaitParams::default(),
            labeller: LabellerModel::default(),
            mechanism_config: MechanismConfig::default(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            seed,
        }
    }
}

/// Default number of simulated participants.
pub const DEFAULT_USERS: usize = 10;

/// One session per drawn participant, `u01`, `u02`, ... Sensor noise and
/// labeller draws depend on `seed` and the user index but not on the
/// mechanism, so populations for different mechanisms share their signals.
pub fn population(mechanism: MechanismId, users: usize, duration_s: f64, seed: u64) -> Vec<SessionSpec> {
    (0..users as u64)
        .map(|i| {
            let session_seed = rng_for(seed.wrapping_add(i), STREAM_SESSIONS).next_u64();
            let mut spec = SessionSpec::new(
                format!("u{:02}", i + 1),
                mechanism,
                RouteScript::default_route(duration_s),
                session_seed,
            );
            spec.labeller = LabellerModel::draw_user(seed, i);
            spec
        })
        .collect()
}

/// Simulates one recording session: sensor frames follow the route, and the
/// labeller reacts to each activity change through the mechanism.
pub fn simulate_session(spec: &SessionSpec) -> Result<SimulatedSession, SimError> {
    spec.route.validate()?;
    spec.gait.validate()?;
    spec.labeller.validate()?;
    spec.mechanism_config
        .validate()
        .map_err(|e| SimError::Params(e.to_string()))?;
    if !(spec.sample_rate_hz > 0.0) {
        return Err(SimError::Params("sample rate must be positive".into()));
    }

    let starts = spec.route.starts_ms();
    let total_ms = (spec.route.total_s() * 1000.0).round() as u64;

    let mut noise = rng_for(spec.seed, STREAM_NOISE);
    let mut frames = Vec::new();
    let mut truth = Vec::new();
    for k in 0u64.. {
        let t = frame_time(k, spec.sample_rate_hz);
        if t >= total_ms {
            break;
        }
        let activity = spec.route.activity_at(&starts, t);
        frames.push(synth_frame(activity, t, &spec.gait, &mut noise).quantized());
        truth.push(activity);
    }

    let inputs = labeller_inputs(spec, &starts, total_ms);
    let mut machine = Machine::with_config(spec.mechanism, spec.mechanism_config)
        .map_err(|e| SimError::Params(e.to_string()))?;
    let mut events = Vec::new();
    for ev in &inputs {
        let emitted = machine
            .step(ev)
            .expect("simulated inputs are valid and time-ordered");
        events.extend(emitted);
    }
    events.extend(machine.flush());

    let meta = StreamMeta {
        user_id: spec.user_id.clone(),
        mechanism: spec.mechanism,
        sample_rate_hz: spec.sample_rate_hz,
    };
    Ok(SimulatedSession {
        bundle: StreamBundle { meta, frames, events },
        truth,
        inputs,
    })
}

fn labeller_inputs(spec: &SessionSpec, starts: &[u64], total_ms: u64) -> Vec<InputEvent> {
    let model = &spec.labeller;
    let scale = model.dexterity.multiplier(spec.mechanism);
    let jitter_sigma = match spec.mechanism {
        MechanismId::TwoOpposite => 2.0 * model.press_jitter_ms,
        _ => model.press_jitter_ms,
    };
    let mut reaction = rng_for(spec.seed, STREAM_REACTION);
    let mut mislabel = rng_for(spec.seed, STREAM_MISLABEL);
    let mut wrong = rng_for(spec.seed, STREAM_WRONG_LABEL);
    let mut correction = rng_for(spec.seed, STREAM_CORRECTION);
    let mut jitter = rng_for(spec.seed, STREAM_JITTER);

    // (time, label) intentions, one or two per transition, never crossing
    // into the next transition's reaction.
    let mut intents: Vec<(u64, ActivityLabel)> = Vec::new();
    let mut previous = None;
    let mut plan = Vec::new();
    for (seg, &start) in spec.route.segments.iter().zip(starts) {
        let z_react: f64 = StandardNormal.sample(&mut reaction);
        let u: f64 = mislabel.gen();
        let other: bool = wrong.gen();
        let z_fix: f64 = StandardNormal.sample(&mut correction);
        if previous == Some(seg.activity) {
            continue;
        }
        previous = Some(seg.activity);
        let at = start + model.reaction.delay_ms(z_react, scale);
        let wrong_label = (u < model.mislabel_prob).then(|| {
            let others: Vec<_> = ActivityLabel::ALL.into_iter().filter(|l| *l != seg.activity).collect();
            others[other as usize]
        });
        let fix_at = at + model.correction.delay_ms(z_fix, scale).max(1);
        plan.push((at, seg.activity, wrong_label, fix_at));
    }
    for (i, &(at, label, wrong_label, fix_at)) in plan.iter().enumerate() {
        let next_at = plan.get(i + 1).map_or(total_ms, |p| p.0);
        if at >= next_at {
            continue;
        }
        match wrong_label {
            Some(w) => {
                intents.push((at, w));
                if fix_at < next_at {
                    intents.push((fix_at, label));
                }
            }
            None => intents.push((at, label)),
        }
    }

    let mut script = InputScript::new(spec.mechanism, spec.mechanism_config);
    if spec.mechanism == MechanismId::App {
        script.push(0, InputKind::Start);
    }
    let jitter_dist = Normal::new(0.0, jitter_sigma.max(0.0)).expect("σ is non-negative");
    for (at, label) in intents {
        let gap: f64 = jitter_dist.sample(&mut jitter);
        script.record(at, label, gap.abs().round() as u64);
    }
    if spec.mechanism == MechanismId::App {
        let end = script.inputs.last().map_or(0, |e| e.t_ms).max(total_ms);
        script.push(end, InputKind::Stop);
    }
    script.inputs
}

/// Inputs of a person recording labels as fast as they can: one attempt every
/// `cadence_ms`, cycling walk, upstairs, walk, downstairs. Interactions that
/// take longer than the cadence delay the following attempts.
pub fn stress_inputs(mechanism: MechanismId, config: MechanismConfig, duration_s: f64, cadence_ms: u64) -> Vec<InputEvent> {
    let cycle = [
        ActivityLabel::Walking,
        ActivityLabel::Upstairs,
        ActivityLabel::Walking,
        ActivityLabel::Downstairs,
    ];
    let end = (duration_s * 1000.0).round() as u64;
    let mut script = InputScript::new(mechanism, config);
    if mechanism == MechanismId::App {
        script.push(0, InputKind::Start);
    }
    let mut i = 0;
    let mut at = 0;
    while at.max(script.free_at) < end {
        script.record(at, cycle[i % cycle.len()], 0);
        i += 1;
        at += cadence_ms;
    }
    script.inputs.retain(|e| e.t_ms < end);
    script.inputs
}
