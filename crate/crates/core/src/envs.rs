//! Simulated navigation tasks: Mountain Car, a planar surface vehicle with a
//! lagged turn-rate command, and a differential-drive underwater vehicle.
//!
//! Every environment owns a seeded RNG used only for reward noise, so a
//! rollout is reproducible from (start state, actions, seed).

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

pub trait Environment: Send {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn start_state(&self) -> Vec<f64>;
    fn step(&mut self, state: &[f64], action: &[f64]) -> StepResult;
    /// Successor state without touching the environment's RNG; noise only
    /// enters rewards.
    fn dynamics(&self, state: &[f64], action: &[f64]) -> Vec<f64>;
    /// Maps an (acceleration, turn rate) command to this task's action.
    fn nav_action(&self, _accel: f64, omega: f64) -> Vec<f64> {
        vec![omega]
    }
    /// Episode truncation length.
    fn max_steps(&self) -> usize;
    /// Discrete actions searched by epsilon-greedy policies.
    fn action_grid(&self) -> Vec<Vec<f64>>;
    /// Box used for value landscapes and random states.
    fn state_bounds(&self) -> Vec<(f64, f64)>;
    /// Goal location for navigation tasks.
    fn goal(&self) -> Option<[f64; 2]> {
        None
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn noise(rng: &mut ChaCha8Rng, variance: f64) -> f64 {
    if variance > 0.0 {
        Normal::new(0.0, variance.sqrt()).expect("finite variance").sample(rng)
    } else {
        0.0
    }
}

fn scratch() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

// Mountain Car

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MountainCarConfig {
    /// Variance of the additive reward noise.
    pub noise_variance: f64,
    pub max_steps: usize,
    pub start: [f64; 2],
    pub goal_position: f64,
    pub goal_reward: f64,
    pub actions: Vec<f64>,
}

impl Default for MountainCarConfig {
    fn default() -> Self {
        MountainCarConfig {
            noise_variance: 0.001,
            max_steps: 50,
            start: [-0.5, 0.0],
            goal_position: 0.6,
            goal_reward: 1.0,
            actions: vec![-1.0, 0.0, 1.0],
        }
    }
}

pub const MC_POSITION: (f64, f64) = (-1.2, 0.6);
pub const MC_VELOCITY: (f64, f64) = (-0.07, 0.07);

/// One step of the classic dynamics. The reward is `eps - s'` before the goal
/// and `goal_reward` on reaching it.
pub fn mountain_car_step(cfg: &MountainCarConfig, state: &[f64], action: f64, rng: &mut ChaCha8Rng) -> StepResult {
    let a = action.clamp(-1.0, 1.0);
    let (s, v) = (state[0], state[1]);
    let v_next = (v + 0.001 * a - 0.0025 * (3.0 * s).cos()).clamp(MC_VELOCITY.0, MC_VELOCITY.1);
    let mut s_next = (s + v_next).clamp(MC_POSITION.0, MC_POSITION.1);
    // Inelastic left wall.
    let v_next = if s_next <= MC_POSITION.0 && v_next < 0.0 { 0.0 } else { v_next };
    let terminal = s_next >= cfg.goal_position;
    if terminal {
        s_next = s_next.min(MC_POSITION.1);
    }
    let reward = if terminal { cfg.goal_reward } else { noise(rng, cfg.noise_variance) - s_next };
    StepResult { next_state: vec![s_next, v_next], reward, terminal }
}

#[derive(Debug, Clone)]
pub struct MountainCar {
    pub cfg: MountainCarConfig,
    rng: ChaCha8Rng,
}

impl MountainCar {
    pub fn new(cfg: MountainCarConfig, seed: u64) -> Self {
        MountainCar { cfg, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Environment for MountainCar {
    fn state_dim(&self) -> usize {
        2
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn start_state(&self) -> Vec<f64> {
        self.cfg.start.to_vec()
    }
    fn step(&mut self, state: &[f64], action: &[f64]) -> StepResult {
        mountain_car_step(&self.cfg, state, action[0], &mut self.rng)
    }
    fn dynamics(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        mountain_car_step(&self.cfg, state, action[0], &mut scratch()).next_state
    }
    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }
    fn action_grid(&self) -> Vec<Vec<f64>> {
        self.cfg.actions.iter().map(|&a| vec![a]).collect()
    }
    fn state_bounds(&self) -> Vec<(f64, f64)> {
        vec![MC_POSITION, MC_VELOCITY]
    }
}

// Goal-seeking reward shared by the vehicles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoalRewardConfig {
    pub goal: [f64; 2],
    pub r_min: f64,
    pub r_goal: f64,
    /// Decay distance of the reward bump.
    pub decay: f64,
    pub noise_variance: f64,
    /// Use the formula with the subtracted bump, which makes the goal the
    /// reward minimum.
    pub subtract_bump: bool,
}

impl Default for GoalRewardConfig {
    fn default() -> Self {
        GoalRewardConfig {
            goal: [50.0, 50.0],
            r_min: -1.0,
            r_goal: 10.0,
            decay: 10.0,
            noise_variance: 0.001,
            subtract_bump: false,
        }
    }
}

/// `r_min + (r_goal - r_min) exp(-d / decay) + eps`, with `d` the distance to
/// the goal.
pub fn goal_reward(position: [f64; 2], cfg: &GoalRewardConfig, rng: &mut ChaCha8Rng) -> f64 {
    let d = (position[0] - cfg.goal[0]).hypot(position[1] - cfg.goal[1]);
    let bump = (cfg.r_goal - cfg.r_min) * (-d / cfg.decay).exp();
    let base = if cfg.subtract_bump { cfg.r_min - bump } else { cfg.r_min + bump };
    base + noise(rng, cfg.noise_variance)
}

// Surface vehicle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsvConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Command lag in steps.
    pub lag: f64,
    /// Constant forward speed, m/s.
    pub speed: f64,
    /// Turn-rate command limit, rad/s.
    pub max_turn_rate: f64,
    pub success_radius: f64,
    pub max_steps: usize,
    pub start: [f64; 4],
    pub reward: GoalRewardConfig,
    /// Turn-rate commands searched by epsilon-greedy policies.
    pub actions: Vec<f64>,
}

impl Default for UsvConfig {
    fn default() -> Self {
        let m = 15f64.to_radians();
        UsvConfig {
            dt: 1.0,
            lag: 3.0,
            speed: 3.0,
            max_turn_rate: m,
            success_radius: 10.0,
            max_steps: 100,
            start: [0.0; 4],
            reward: GoalRewardConfig::default(),
            actions: vec![-m, -m / 2.0, 0.0, m / 2.0, m],
        }
    }
}

fn planar_step(
    state: &[f64],
    speed: f64,
    omega: f64,
    dt: f64,
    lag: f64,
) -> (f64, f64, f64, f64) {
    let (x, y, th, thd) = (state[0], state[1], state[2], state[3]);
    (
        x + dt * speed * th.cos(),
        y + dt * speed * th.sin(),
        wrap_angle(th + dt * thd),
        thd + (dt / lag) * (omega - thd),
    )
}

fn arrived(x: f64, y: f64, goal: [f64; 2], radius: f64) -> bool {
    (x - goal[0]).hypot(y - goal[1]) <= radius
}

pub fn usv_step(cfg: &UsvConfig, state: &[f64], omega: f64, rng: &mut ChaCha8Rng) -> StepResult {
    let omega = omega.clamp(-cfg.max_turn_rate, cfg.max_turn_rate);
    let (x, y, th, thd) = planar_step(state, cfg.speed, omega, cfg.dt, cfg.lag);
    let reward = goal_reward([x, y], &cfg.reward, rng);
    StepResult { next_state: vec![x, y, th, thd], reward, terminal: arrived(x, y, cfg.reward.goal, cfg.success_radius) }
}

#[derive(Debug, Clone)]
pub struct Usv {
    pub cfg: UsvConfig,
    rng: ChaCha8Rng,
}

impl Usv {
    pub fn new(cfg: UsvConfig, seed: u64) -> Self {
        Usv { cfg, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Environment for Usv {
    fn state_dim(&self) -> usize {
        4
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn start_state(&self) -> Vec<f64> {
        self.cfg.start.to_vec()
    }
    fn step(&mut self, state: &[f64], action: &[f64]) -> StepResult {
        usv_step(&self.cfg, state, action[0], &mut self.rng)
    }
    fn dynamics(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        usv_step(&self.cfg, state, action[0], &mut scratch()).next_state
    }
    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }
    fn action_grid(&self) -> Vec<Vec<f64>> {
        self.cfg.actions.iter().map(|&a| vec![a]).collect()
    }
    fn state_bounds(&self) -> Vec<(f64, f64)> {
        let m = self.cfg.max_turn_rate;
        vec![(-20.0, 80.0), (-20.0, 80.0), (-PI, PI), (-m, m)]
    }
    fn goal(&self) -> Option<[f64; 2]> {
        Some(self.cfg.reward.goal)
    }
}

// Underwater vehicle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UuvConfig {
    pub dt: f64,
    pub lag: f64,
    /// Thruster sum to forward acceleration.
    pub k_v: f64,
    /// Thruster difference to turn-rate command.
    pub k_w: f64,
    /// Per-thruster command limit.
    pub max_thrust: f64,
    pub max_turn_rate: f64,
    /// Forward speed limit, m/s.
    pub max_speed: f64,
    pub success_radius: f64,
    pub max_steps: usize,
    pub start: [f64; 5],
    pub reward: GoalRewardConfig,
    pub thrust_levels: Vec<f64>,
}

impl Default for UuvConfig {
    fn default() -> Self {
        UuvConfig {
            dt: 1.0,
            lag: 3.0,
            k_v: 1.0,
            k_w: 1.0,
            max_thrust: 1.0,
            max_turn_rate: 15f64.to_radians(),
            max_speed: 5.0,
            success_radius: 10.0,
            max_steps: 200,
            start: [0.0; 5],
            reward: GoalRewardConfig::default(),
            thrust_levels: vec![-1.0, 0.0, 1.0],
        }
    }
}

/// Thruster commands to `(forward acceleration, turn-rate command)`.
pub fn uuv_mix(cfg: &UuvConfig, a_port: f64, a_star: f64) -> (f64, f64) {
    (cfg.k_v * (a_port + a_star), cfg.k_w * (a_port - a_star))
}

/// Inverse of [`uuv_mix`].
pub fn uuv_unmix(cfg: &UuvConfig, accel: f64, omega: f64) -> (f64, f64) {
    let s = accel / cfg.k_v;
    let d = omega / cfg.k_w;
    (0.5 * (s + d), 0.5 * (s - d))
}

/// State `(x, y, theta, theta_dot, V)`.
pub fn uuv_step(cfg: &UuvConfig, state: &[f64], a_port: f64, a_star: f64, rng: &mut ChaCha8Rng) -> StepResult {
    let a_port = a_port.clamp(-cfg.max_thrust, cfg.max_thrust);
    let a_star = a_star.clamp(-cfg.max_thrust, cfg.max_thrust);
    let (accel, omega) = uuv_mix(cfg, a_port, a_star);
    let omega = omega.clamp(-cfg.max_turn_rate, cfg.max_turn_rate);
    let speed = (state[4] + cfg.dt * accel).clamp(-cfg.max_speed, cfg.max_speed);
    let (x, y, th, thd) = planar_step(state, speed, omega, cfg.dt, cfg.lag);
    let reward = goal_reward([x, y], &cfg.reward, rng);
    StepResult {
        next_state: vec![x, y, th, thd, speed],
        reward,
        terminal: arrived(x, y, cfg.reward.goal, cfg.success_radius),
    }
}

#[derive(Debug, Clone)]
pub struct Uuv {
    pub cfg: UuvConfig,
    rng: ChaCha8Rng,
}

impl Uuv {
    pub fn new(cfg: UuvConfig, seed: u64) -> Self {
        Uuv { cfg, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Environment for Uuv {
    fn state_dim(&self) -> usize {
        5
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn start_state(&self) -> Vec<f64> {
        self.cfg.start.to_vec()
    }
    fn step(&mut self, state: &[f64], action: &[f64]) -> StepResult {
        uuv_step(&self.cfg, state, action[0], action[1], &mut self.rng)
    }
    fn dynamics(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        uuv_step(&self.cfg, state, action[0], action[1], &mut scratch()).next_state
    }
    fn nav_action(&self, accel: f64, omega: f64) -> Vec<f64> {
        let (p, s) = uuv_unmix(&self.cfg, accel, omega);
        vec![p, s]
    }
    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }
    fn action_grid(&self) -> Vec<Vec<f64>> {
        let l = &self.cfg.thrust_levels;
        l.iter().flat_map(|&p| l.iter().map(move |&s| vec![p, s])).collect()
    }
    fn state_bounds(&self) -> Vec<(f64, f64)> {
        let m = self.cfg.max_turn_rate;
        let v = self.cfg.max_speed;
        vec![(-20.0, 80.0), (-20.0, 80.0), (-PI, PI), (-m, m), (-v, v)]
    }
    fn goal(&self) -> Option<[f64; 2]> {
        Some(self.cfg.reward.goal)
    }
}

/// Heading error towards `goal`, wrapped.
pub fn heading_error(state: &[f64], goal: [f64; 2]) -> f64 {
    wrap_angle((goal[1] - state[1]).atan2(goal[0] - state[0]) - state[2])
}

pub fn goal_distance(state: &[f64], goal: [f64; 2]) -> f64 {
    (goal[0] - state[0]).hypot(goal[1] - state[1])
}
