//! Sparse-reward point environments that can be reset to any feasible state.
//!
//! A point moves inside an axis-aligned domain by adding its (clipped) action
//! to its position. Movement that would leave the domain or enter an obstacle
//! stops at the first contact. Reward is 1 on the step that lands within
//! `goal_radius` of a goal state and 0 otherwise.

mod geometry;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::RandomStream;

pub use geometry::{AaBox, Geometry};

pub type State = Vec<f64>;

const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub t_max: usize,
    pub gamma: f64,
    pub goal_states: Vec<State>,
    pub goal_radius: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.goal_states.is_empty() {
            return Err(Error::Config("at least one goal state is required".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.goal_radius > 0.0) {
            return Err(Error::Config("goal_radius must be positive".into()));
        }
        check_dim("action_low", self.action_dim, self.action_low.len())?;
        check_dim("action_high", self.action_dim, self.action_high.len())?;
        if self.action_low.iter().zip(&self.action_high).any(|(l, h)| !(l < h)) {
            return Err(Error::Config("action_low must be below action_high".into()));
        }
        for g in &self.goal_states {
            check_dim("goal state", self.state_dim, g.len())?;
        }
        Ok(())
    }

    /// Half-width of the action box per dimension.
    pub fn action_half_range(&self) -> Vec<f64> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| 0.5 * (h - l))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoneReason {
    GoalReached,
    HorizonExceeded,
    /// Terminal attempt that did not succeed. Not produced by the point
    /// environments, whose only attempt is reaching the goal region.
    AttemptTriggered,
    NotDone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Near,
    Mid,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoseMode {
    Fixed,
    Variable,
}

/// One cell of the Near/Mid/Far × Fixed/Variable evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvalBand {
    pub band: Band,
    pub pose_mode: PoseMode,
}

impl EvalBand {
    pub const ALL: [EvalBand; 6] = [
        EvalBand::new(Band::Near, PoseMode::Fixed),
        EvalBand::new(Band::Mid, PoseMode::Fixed),
        EvalBand::new(Band::Far, PoseMode::Fixed),
        EvalBand::new(Band::Near, PoseMode::Variable),
        EvalBand::new(Band::Mid, PoseMode::Variable),
        EvalBand::new(Band::Far, PoseMode::Variable),
    ];

    pub const fn new(band: Band, pose_mode: PoseMode) -> Self {
        Self { band, pose_mode }
    }
}

/// Distance-to-goal intervals for the three bands.
///
/// Near is `[near.0, near.1]`; Mid and Far are half-open `(lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRadii {
    pub near: (f64, f64),
    pub mid: (f64, f64),
    pub far: (f64, f64),
}

impl Default for BandRadii {
    fn default() -> Self {
        Self {
            near: (0.0, 0.15),
            mid: (0.15, 0.35),
            far: (0.35, 0.7),
        }
    }
}

impl BandRadii {
    pub fn interval(&self, band: Band) -> (f64, f64) {
        match band {
            Band::Near => self.near,
            Band::Mid => self.mid,
            Band::Far => self.far,
        }
    }

    pub fn contains(&self, band: Band, distance: f64) -> bool {
        let (lo, hi) = self.interval(band);
        let above = if band == Band::Near { distance >= lo } else { distance > lo };
        above && distance <= hi
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.near.0 >= 0.0
            && self.near.0 <= self.near.1
            && self.near.1 <= self.mid.0
            && self.mid.0 < self.mid.1
            && self.mid.1 <= self.far.0
            && self.far.0 < self.far.1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("band intervals must be ordered and disjoint".into()))
        }
    }
}

/// Built-in environment layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    PointMaze,
    PointMazeOpen,
    NarrowPassage,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointMaze => "point-maze",
            EnvKind::PointMazeOpen => "point-maze-open",
            EnvKind::NarrowPassage => "narrow-passage",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point-maze" | "pointmaze" | "PointMaze" => Ok(EnvKind::PointMaze),
            "point-maze-open" | "pointmaze-open" | "PointMaze-open" => Ok(EnvKind::PointMazeOpen),
            "narrow-passage" | "narrowpassage" | "NarrowPassage" => Ok(EnvKind::NarrowPassage),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

/// Overrides applied on top of a built-in layout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvOverrides {
    pub goal: Option<Vec<f64>>,
    pub goal_radius: Option<f64>,
    pub t_max: Option<usize>,
    pub gamma: Option<f64>,
    pub action_bound: Option<f64>,
    pub bands: Option<BandRadii>,
}

#[derive(Debug, Clone)]
pub struct PointEnv {
    kind: EnvKind,
    spec: EnvSpec,
    geometry: Geometry,
    bands: BandRadii,
    /// Canonical Fixed-mode start per band, indexed Near, Mid, Far.
    fixed_starts: [State; 3],
    current: State,
    steps: usize,
    done: bool,
}

impl PointEnv {
    pub fn new(
        kind: EnvKind,
        spec: EnvSpec,
        geometry: Geometry,
        bands: BandRadii,
        fixed_starts: [State; 3],
    ) -> Result<Self> {
        spec.validate()?;
        bands.validate()?;
        check_dim("domain bounds", spec.state_dim, geometry.lower.len())?;
        if spec.state_dim != spec.action_dim {
            return Err(Error::Config("point environments need action_dim == state_dim".into()));
        }
        let current = spec.goal_states[0].clone();
        let env = Self {
            kind,
            spec,
            geometry,
            bands,
            fixed_starts,
            current,
            steps: 0,
            done: false,
        };
        for g in &env.spec.goal_states {
            if !env.is_feasible(g) {
                return Err(Error::Config(format!("goal {g:?} is not feasible")));
            }
        }
        for (band, s) in [Band::Near, Band::Mid, Band::Far].into_iter().zip(&env.fixed_starts) {
            if !env.is_feasible(s) || !env.bands.contains(band, env.distance_to_goal(s)) {
                return Err(Error::Config(format!("fixed {band:?} start {s:?} is infeasible or outside its band")));
            }
        }
        Ok(env)
    }

    pub fn builtin(kind: EnvKind) -> Self {
        Self::with_overrides(kind, &EnvOverrides::default()).expect("built-in layouts are valid")
    }

    /// Unit square, goal at (0.85, 0.85), vertical wall at x ∈ [0.60, 0.64]
    /// with a gap at y ∈ (0.55, 0.70). Fixed starts: (0.78, 0.78),
    /// (0.70, 0.62), (0.45, 0.62).
    pub fn point_maze() -> Self {
        Self::builtin(EnvKind::PointMaze)
    }

    /// Same goal and bands as [`PointEnv::point_maze`] without the wall.
    pub fn point_maze_open() -> Self {
        Self::builtin(EnvKind::PointMazeOpen)
    }

    /// Unit square split at y ∈ [0.45, 0.50] by a wall with a 0.06-wide
    /// corridor at x ∈ (0.47, 0.53); the goal (0.5, 0.65) sits past the corridor.
    pub fn narrow_passage() -> Self {
        Self::builtin(EnvKind::NarrowPassage)
    }

    pub fn with_overrides(kind: EnvKind, o: &EnvOverrides) -> Result<Self> {
        let bound = o.action_bound.unwrap_or(0.05);
        // Fixed starts are given as offsets from the goal.
        let (goal, obstacles, offsets) = match kind {
            EnvKind::PointMaze | EnvKind::PointMazeOpen => {
                let walls = if kind == EnvKind::PointMaze {
                    vec![
                        AaBox::new(vec![0.60, 0.0], vec![0.64, 0.55]),
                        AaBox::new(vec![0.60, 0.70], vec![0.64, 1.0]),
                    ]
                } else {
                    Vec::new()
                };
                (
                    vec![0.85, 0.85],
                    walls,
                    [[-0.07, -0.07], [-0.15, -0.23], [-0.40, -0.23]],
                )
            }
            EnvKind::NarrowPassage => (
                vec![0.5, 0.65],
                vec![
                    AaBox::new(vec![0.0, 0.45], vec![0.47, 0.50]),
                    AaBox::new(vec![0.53, 0.45], vec![1.0, 0.50]),
                ],
                [[0.0, -0.10], [0.0, -0.27], [0.0, -0.45]],
            ),
        };
        let goal = o.goal.clone().unwrap_or(goal);
        check_dim("goal override", 2, goal.len())?;
        let fixed = offsets.map(|off| vec![goal[0] + off[0], goal[1] + off[1]]);
        let spec = EnvSpec {
            state_dim: 2,
            action_dim: 2,
            action_low: vec![-bound; 2],
            action_high: vec![bound; 2],
            t_max: o.t_max.unwrap_or(10),
            gamma: o.gamma.unwrap_or(0.99),
            goal_states: vec![goal],
            goal_radius: o.goal_radius.unwrap_or(0.05),
        };
        let geometry = Geometry::new(vec![0.0, 0.0], vec![1.0, 1.0], obstacles)?;
        let bands = o.bands.clone().unwrap_or_default();
        Self::new(kind, spec, geometry, bands, fixed)
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn bands(&self) -> &BandRadii {
        &self.bands
    }

    pub fn fixed_start(&self, band: Band) -> &State {
        &self.fixed_starts[band as usize]
    }

    pub fn is_feasible(&self, state: &[f64]) -> bool {
        state.len() == self.spec.state_dim && self.geometry.is_feasible(state)
    }

    pub fn distance_to_goal(&self, state: &[f64]) -> f64 {
        self.spec
            .goal_states
            .iter()
            .map(|g| g.iter().zip(state).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn in_goal(&self, state: &[f64]) -> bool {
        self.distance_to_goal(state) <= self.spec.goal_radius
    }

    pub fn reset_to(&mut self, state: &[f64]) -> Result<()> {
        if !self.is_feasible(state) {
            return Err(Error::Reset(format!("state {state:?} is not feasible")));
        }
        self.current.clear();
        self.current.extend_from_slice(state);
        self.steps = 0;
        self.done = false;
        Ok(())
    }

    pub fn observe(&self) -> &[f64] {
        &self.current
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.spec.action_low.iter().zip(&self.spec.action_high))
            .map(|(a, (lo, hi))| if a.is_nan() { 0.0 } else { a.clamp(*lo, *hi) })
            .collect()
    }

    /// Kinematic successor of `state` under `action`, without episode
    /// bookkeeping. Always feasible when `state` is.
    pub fn transition(&self, state: &[f64], action: &[f64]) -> State {
        let clipped = self.clip_action(action);
        self.geometry.blocked_move(state, &clipped)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; reset first".into()));
        }
        check_dim("action", self.spec.action_dim, action.len())?;
        let next = self.transition(&self.current, action);
        self.steps += 1;
        let reached = self.in_goal(&next);
        let (done, reason) = if reached {
            (true, DoneReason::GoalReached)
        } else if self.steps >= self.spec.t_max {
            (true, DoneReason::HorizonExceeded)
        } else {
            (false, DoneReason::NotDone)
        };
        self.done = done;
        self.current.clone_from(&next);
        Ok(StepResult {
            next_state: next,
            reward: if reached { 1.0 } else { 0.0 },
            done,
            done_reason: reason,
        })
    }

    /// Starts for one evaluation cell: `n` copies of the canonical state in
    /// Fixed mode, `n` uniform feasible draws from the band's annulus in
    /// Variable mode.
    pub fn sample_eval_starts(&self, cell: EvalBand, n: usize, rng: &mut RandomStream) -> Result<Vec<State>> {
        match cell.pose_mode {
            PoseMode::Fixed => Ok(vec![self.fixed_start(cell.band).clone(); n]),
            PoseMode::Variable => {
                let (_, hi) = self.bands.interval(cell.band);
                let (lo_box, hi_box) = self.sampling_box(hi);
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let mut found = None;
                    for _ in 0..MAX_REJECTIONS {
                        let s: State = lo_box
                            .iter()
                            .zip(&hi_box)
                            .map(|(l, h)| if l < h { rng.random_range(*l..*h) } else { *l })
                            .collect();
                        if self.is_feasible(&s) && self.bands.contains(cell.band, self.distance_to_goal(&s)) {
                            found = Some(s);
                            break;
                        }
                    }
                    match found {
                        Some(s) => out.push(s),
                        None => {
                            return Err(Error::Config(format!(
                                "no feasible state in the {:?} band after {MAX_REJECTIONS} draws",
                                cell.band
                            )))
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    fn sampling_box(&self, radius: f64) -> (Vec<f64>, Vec<f64>) {
        let dim = self.spec.state_dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for g in &self.spec.goal_states {
            for i in 0..dim {
                lo[i] = lo[i].min(g[i] - radius);
                hi[i] = hi[i].max(g[i] + radius);
            }
        }
        for i in 0..dim {
            lo[i] = lo[i].max(self.geometry.lower[i]);
            hi[i] = hi[i].min(self.geometry.upper[i]);
        }
        (lo, hi)
    }
}
