//! Deterministic cloth-folding environment: mass-spring physics, gripper
//! control, top-down rendering, keypoints and the fold reward.

pub mod cloth;
pub mod render;
pub mod reward;

pub use cloth::{ClothModel, ClothState, Spring, Vec3};
pub use render::{Camera, Palette, IMAGE_SIZE, RGB_BYTES};
pub use reward::{compute_reward, extract_keypoints, keypoint_indices, NUM_KEYPOINTS};

use rand::Rng;

pub const NUM_GRIPPERS: usize = 2;
/// Keypoints plus gripper positions, flattened.
pub const STATE_DIM: usize = NUM_KEYPOINTS * 3 + NUM_GRIPPERS * 3;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("action contains a non-finite component")]
    NonFiniteAction,
    #[error("particle grid {cols}x{rows} is smaller than the 4x6 keypoint grid")]
    GridTooSmall { cols: usize, rows: usize },
    #[error("particle grid width {0} must be even")]
    OddWidth(usize),
    #[error("action has {got} components, expected {expected}")]
    ActionDim { expected: usize, got: usize },
}

/// How the policy drives the grippers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GripperMode {
    /// One actuated gripper (3-dim action) holding the nearest corner from the
    /// first step; the second gripper stays parked.
    Scripted,
    /// Two actuated grippers, each with a displacement and a pick signal.
    Dual,
}

impl GripperMode {
    pub fn action_dim(self) -> usize {
        match self {
            GripperMode::Scripted => 3,
            GripperMode::Dual => NUM_GRIPPERS * 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub cols: usize,
    pub rows: usize,
    /// Cloth extent along x, metres.
    pub cloth_width: f64,
    pub cloth_mass: f64,
    /// Structural spring stiffness expressed as `sqrt(k / m)`, rad/s.
    pub stiffness_omega: f64,
    pub shear_ratio: f64,
    pub bend_ratio: f64,
    pub air_drag: f64,
    pub friction: f64,
    pub gravity: f64,
    pub table_height: f64,
    pub dt: f64,
    pub substeps: usize,
    pub max_step: f64,
    pub horizon: usize,
    pub center_weight: f64,
    pub gripper_mode: GripperMode,
    pub grasp_radius_factor: f64,
    pub gripper_radius: f64,
    pub workspace_half: f64,
    pub workspace_height: f64,
    pub camera: Camera,
    pub palette: Palette,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl EnvConfig {
    /// 16×24 cloth, one actuated gripper, 75-step episodes.
    pub fn paper() -> Self {
        Self {
            cols: 16,
            rows: 24,
            cloth_width: 0.30,
            cloth_mass: 0.2,
            stiffness_omega: 80.0,
            shear_ratio: 0.5,
            bend_ratio: 0.05,
            air_drag: 0.3,
            friction: 0.5,
            gravity: 9.81,
            table_height: 0.0,
            dt: 1.0 / 240.0,
            substeps: 8,
            max_step: 0.02,
            horizon: 75,
            center_weight: 1.0,
            gripper_mode: GripperMode::Scripted,
            grasp_radius_factor: 1.5,
            gripper_radius: 0.025,
            workspace_half: 0.4,
            workspace_height: 0.3,
            camera: Camera::default(),
            palette: Palette::DEFAULT,
        }
    }

    /// Coarser 12×16 cloth and 40-step episodes.
    pub fn desk() -> Self {
        Self {
            cols: 12,
            rows: 16,
            horizon: 40,
            ..Self::paper()
        }
    }

    pub fn with_mode(mut self, mode: GripperMode) -> Self {
        self.gripper_mode = mode;
        self
    }

    pub fn spacing(&self) -> f64 {
        self.cloth_width / (self.cols - 1) as f64
    }

    pub fn action_dim(&self) -> usize {
        self.gripper_mode.action_dim()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        keypoint_indices(self.cols, self.rows)?;
        if !self.cols.is_multiple_of(2) {
            return Err(EnvError::OddWidth(self.cols));
        }
        Ok(())
    }

    /// Uniform sample from the action box.
    pub fn random_action(&self, rng: &mut impl Rng) -> Vec<f64> {
        let per = if self.gripper_mode == GripperMode::Scripted { 3 } else { 4 };
        (0..self.action_dim())
            .map(|i| {
                if i % per == 3 {
                    rng.random_range(-1.0..=1.0)
                } else {
                    rng.random_range(-self.max_step..=self.max_step)
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GripperState {
    pub position: Vec3,
    pub picking: bool,
    pub held_particle: Option<usize>,
}

/// Per-gripper displacement (metres per step) and pick signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub displacement: [Vec3; NUM_GRIPPERS],
    pub pick: [f64; NUM_GRIPPERS],
}

impl Action {
    pub fn zero() -> Self {
        Self {
            displacement: [[0.0; 3]; NUM_GRIPPERS],
            pick: [0.0; NUM_GRIPPERS],
        }
    }

    /// Interprets a policy output: `[dx, dy, dz]` in scripted mode, or
    /// `[dx, dy, dz, pick]` per gripper in dual mode.
    pub fn from_flat(mode: GripperMode, flat: &[f64]) -> Result<Self, EnvError> {
        if flat.len() != mode.action_dim() {
            return Err(EnvError::ActionDim {
                expected: mode.action_dim(),
                got: flat.len(),
            });
        }
        let mut a = Self::zero();
        match mode {
            GripperMode::Scripted => a.displacement[0] = [flat[0], flat[1], flat[2]],
            GripperMode::Dual => {
                for g in 0..NUM_GRIPPERS {
                    let s = &flat[g * 4..g * 4 + 4];
                    a.displacement[g] = [s[0], s[1], s[2]];
                    a.pick[g] = s[3];
                }
            }
        }
        Ok(a)
    }

    fn is_finite(&self) -> bool {
        self.displacement.iter().flatten().chain(&self.pick).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Channel-major 3×64×64.
    pub rgb: Vec<u8>,
    pub keypoints: Vec<Vec3>,
    pub grippers: Vec<Vec3>,
    pub picking: Vec<bool>,
}

/// Coordinates are divided by this before reaching a learned model.
pub const STATE_SCALE: f64 = 0.4;

impl Observation {
    /// Keypoints then gripper positions, metres.
    pub fn flat_state(&self) -> Vec<f64> {
        self.keypoints.iter().chain(&self.grippers).flat_map(|p| p.iter().copied()).collect()
    }

    pub fn normalized_state(&self) -> Vec<f64> {
        self.flat_state().into_iter().map(|v| v / STATE_SCALE).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// Single cloth-folding environment instance.
#[derive(Clone, Debug)]
pub struct ClothEnv {
    cfg: EnvConfig,
    model: ClothModel,
    keypoint_idx: Vec<usize>,
    state: ClothState,
    grippers: Vec<GripperState>,
    steps: usize,
    ready: bool,
    rendering: bool,
    forces: Vec<Vec3>,
}

impl ClothEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let keypoint_idx = keypoint_indices(cfg.cols, cfg.rows)?;
        let model = ClothModel::new(&cfg);
        let state = ClothState::flat(&cfg);
        let grippers = Self::home_grippers(&cfg, &state);
        Ok(Self {
            cfg,
            model,
            keypoint_idx,
            state,
            grippers,
            steps: 0,
            ready: false,
            rendering: true,
            forces: Vec::new(),
        })
    }

    fn home_grippers(cfg: &EnvConfig, st: &ClothState) -> Vec<GripperState> {
        let bottom_left = st.positions[st.index(0, 0)];
        let top_left = st.positions[st.index(0, st.rows - 1)];
        let (g0, g1) = match cfg.gripper_mode {
            GripperMode::Scripted => (bottom_left, [0.3, 0.3, cfg.table_height + 0.1]),
            GripperMode::Dual => {
                let lift = cfg.table_height + 0.01;
                ([bottom_left[0], bottom_left[1], lift], [top_left[0], top_left[1], lift])
            }
        };
        [g0, g1]
            .into_iter()
            .map(|position| GripperState {
                position,
                picking: false,
                held_particle: None,
            })
            .collect()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ClothModel {
        &self.model
    }

    pub fn state(&self) -> &ClothState {
        &self.state
    }

    /// Direct state access for tests and analysis tools.
    pub fn state_mut(&mut self) -> &mut ClothState {
        &mut self.state
    }

    pub fn grippers(&self) -> &[GripperState] {
        &self.grippers
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn keypoint_indices(&self) -> &[usize] {
        &self.keypoint_idx
    }

    pub fn energy(&self) -> f64 {
        self.model.energy(&self.state)
    }

    pub fn action_dim(&self) -> usize {
        self.cfg.action_dim()
    }

    /// Flat cloth at rest with grippers at home. The start state does not
    /// depend on `seed`; the argument exists so callers can treat every
    /// environment uniformly.
    pub fn reset(&mut self, _seed: u64) -> Observation {
        self.state = ClothState::flat(&self.cfg);
        self.grippers = Self::home_grippers(&self.cfg, &self.state);
        self.steps = 0;
        self.ready = true;
        if self.cfg.gripper_mode == GripperMode::Scripted {
            self.grippers[0].picking = true;
            self.try_grasp(0);
        }
        self.observe()
    }

    fn try_grasp(&mut self, g: usize) {
        let radius = self.cfg.grasp_radius_factor * self.cfg.spacing();
        let pos = self.grippers[g].position;
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.state.positions.iter().enumerate() {
            if self.state.pinned[i] {
                continue;
            }
            let d = cloth::norm(cloth::sub(*p, pos));
            if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            self.state.pinned[i] = true;
            self.grippers[g].held_particle = Some(i);
        }
    }

    fn release(&mut self, g: usize) {
        if let Some(i) = self.grippers[g].held_particle.take() {
            self.state.pinned[i] = false;
        }
        self.grippers[g].picking = false;
    }

    pub fn step_flat(&mut self, flat: &[f64]) -> Result<StepResult, EnvError> {
        if !self.ready {
            return Err(EnvError::NotReset);
        }
        let a = Action::from_flat(self.cfg.gripper_mode, flat)?;
        self.step(&a)
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if !self.ready {
            return Err(EnvError::NotReset);
        }
        if !action.is_finite() {
            return Err(EnvError::NonFiniteAction);
        }
        let actuated = match self.cfg.gripper_mode {
            GripperMode::Scripted => 1,
            GripperMode::Dual => NUM_GRIPPERS,
        };
        if self.cfg.gripper_mode == GripperMode::Dual {
            for g in 0..NUM_GRIPPERS {
                if action.pick[g] > 0.0 {
                    self.grippers[g].picking = true;
                    if self.grippers[g].held_particle.is_none() {
                        self.try_grasp(g);
                    }
                } else {
                    self.release(g);
                }
            }
        }

        let ms = self.cfg.max_step;
        let half = self.cfg.workspace_half;
        let z_lo = self.cfg.table_height;
        let z_hi = self.cfg.table_height + self.cfg.workspace_height;
        for (g, grip) in self.grippers.iter_mut().enumerate() {
            if g < actuated {
                let d = action.displacement[g];
                let p = &mut grip.position;
                for k in 0..3 {
                    p[k] += d[k].clamp(-ms, ms);
                }
                p[0] = p[0].clamp(-half, half);
                p[1] = p[1].clamp(-half, half);
                p[2] = p[2].clamp(z_lo, z_hi);
            }
        }

        let n = self.cfg.substeps;
        let span = n as f64 * self.cfg.dt;
        // held particles travel from where they are to the gripper's new position
        let pin_starts: Vec<Option<Vec3>> = self
            .grippers
            .iter()
            .map(|g| g.held_particle.map(|i| self.state.positions[i]))
            .collect();
        let mut pins: Vec<(usize, Vec3, Vec3)> = Vec::with_capacity(NUM_GRIPPERS);
        let mut forces = std::mem::take(&mut self.forces);
        for s in 0..n {
            pins.clear();
            let t = (s + 1) as f64 / n as f64;
            for (g, grip) in self.grippers.iter().enumerate() {
                if let (Some(i), Some(a)) = (grip.held_particle, pin_starts[g]) {
                    let b = grip.position;
                    let target = if s + 1 == n {
                        b
                    } else {
                        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
                    };
                    let vel = [(b[0] - a[0]) / span, (b[1] - a[1]) / span, (b[2] - a[2]) / span];
                    pins.push((i, target, vel));
                }
            }
            self.model.substep(&mut self.state, &mut forces, &pins);
        }
        self.forces = forces;
        self.steps += 1;
        let observation = self.observe();
        let reward = compute_reward(&observation.keypoints, self.cfg.camera.center, self.cfg.center_weight);
        Ok(StepResult {
            observation,
            reward,
            done: self.steps >= self.cfg.horizon,
        })
    }

    pub fn keypoints(&self) -> Vec<Vec3> {
        self.keypoint_idx.iter().map(|&i| self.state.positions[i]).collect()
    }

    pub fn reward(&self) -> f64 {
        compute_reward(&self.keypoints(), self.cfg.camera.center, self.cfg.center_weight)
    }

    pub fn render(&self) -> Vec<u8> {
        let gp: Vec<Vec3> = self.grippers.iter().map(|g| g.position).collect();
        render::render(Some(&self.state), &gp, &self.cfg.camera, &self.cfg.palette, self.cfg.gripper_radius)
    }

    /// Observations carry an empty `rgb` while rendering is off.
    pub fn set_rendering(&mut self, on: bool) {
        self.rendering = on;
    }

    pub fn observe(&self) -> Observation {
        Observation {
            rgb: if self.rendering { self.render() } else { Vec::new() },
            keypoints: self.keypoints(),
            grippers: self.grippers.iter().map(|g| g.position).collect(),
            picking: self.grippers.iter().map(|g| g.picking).collect(),
        }
    }
}
