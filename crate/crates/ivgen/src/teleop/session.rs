use std::collections::VecDeque;

use ivgen_core::datagen::{episode_seed, Actor, Dataset, Episode, EpisodeHeader, Provenance, Step};
use ivgen_core::geom::DeltaAction;
use ivgen_core::policy::PolicyModel;
use ivgen_core::world::{goal_satisfied, observe, render_frame, reset, step, CorruptionModel, Role, TaskSpec, WorldState};

use super::protocol::{ActionFields, ClientMessage, Control, EpisodeCommand, ServerMessage, PROTOCOL_VERSION};

struct ActiveEpisode {
    number: u64,
    seed: u64,
    start: WorldState,
    state: WorldState,
    steps: Vec<Step>,
    termination: Option<u32>,
}

/// One client's session: a world stepped once per tick by the policy or by
/// the most recent human action, plus the episodes recorded so far.
pub struct SessionState {
    pub id: u64,
    task: TaskSpec,
    corruption: CorruptionModel,
    seed: u64,
    policy: PolicyModel,
    control: Control,
    /// Control changes not yet applied; one takes effect per tick.
    pending: VecDeque<Control>,
    human: Option<DeltaAction>,
    tick: u64,
    episodes_started: u64,
    active: Option<ActiveEpisode>,
    recorded: Dataset,
}

impl SessionState {
    pub fn new(id: u64, task: TaskSpec, corruption: CorruptionModel, policy: PolicyModel, seed: u64) -> SessionState {
        SessionState {
            id,
            recorded: Dataset::new(task.clone()),
            task,
            corruption,
            seed,
            policy,
            control: Control::Policy,
            pending: VecDeque::new(),
            human: None,
            tick: 0,
            episodes_started: 0,
            active: None,
        }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn control(&self) -> Control {
        self.control
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn episode_active(&self) -> bool {
        self.active.is_some()
    }

    /// Goal-reaching episodes finished in this session.
    pub fn recorded(&self) -> &Dataset {
        &self.recorded
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello { version: PROTOCOL_VERSION, session: self.id, task: self.task.task_id }
    }

    fn ack(&self) -> Option<ServerMessage> {
        Some(ServerMessage::Ack { tick: self.tick, applied: None })
    }

    pub fn handle_message(&mut self, msg: ClientMessage) -> Option<ServerMessage> {
        match msg {
            ClientMessage::Hello { .. } => Some(self.hello()),
            ClientMessage::Takeover => {
                self.pending.push_back(Control::Human);
                self.ack()
            }
            ClientMessage::Release => {
                self.pending.push_back(Control::Policy);
                self.ack()
            }
            ClientMessage::Action { dx, dy, dz, grip } => {
                let raw = ActionFields { dx, dy, dz, grip }.to_action();
                if !(dx.is_finite() && dy.is_finite() && dz.is_finite()) {
                    return Some(ServerMessage::error("malformed", "action components must be finite"));
                }
                let applied = raw.clamped(&self.task.limits).0;
                self.human = Some(applied);
                Some(ServerMessage::Ack { tick: self.tick, applied: Some(ActionFields::from_action(&applied)) })
            }
            ClientMessage::Episode { cmd: EpisodeCommand::Start } => {
                self.abort("restarted");
                let number = self.episodes_started;
                let seed = episode_seed(self.seed, number);
                match reset(&self.task, &self.corruption, seed) {
                    Ok(state) => {
                        self.episodes_started += 1;
                        self.control = Control::Policy;
                        self.pending.clear();
                        self.human = None;
                        self.active = Some(ActiveEpisode {
                            number,
                            seed,
                            start: state.clone(),
                            state,
                            steps: Vec::new(),
                            termination: None,
                        });
                        self.ack()
                    }
                    Err(e) => Some(ServerMessage::error("reset-failed", e.to_string())),
                }
            }
            ClientMessage::Episode { cmd: EpisodeCommand::Abort } => {
                self.abort("aborted by client");
                self.ack()
            }
        }
    }

    /// Drops the episode in progress, if any.
    pub fn abort(&mut self, why: &str) {
        if let Some(a) = self.active.take() {
            log::info!("session {}: episode {} discarded ({why}) after {} steps", self.id, a.number, a.steps.len());
        }
    }

    /// Advances the active episode by one step. Returns the frame and, when
    /// the episode ends, its summary.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        self.tick += 1;
        if let Some(c) = self.pending.pop_front() {
            self.control = c;
        }
        let Some(a) = self.active.as_mut() else {
            return Vec::new();
        };
        let obs = observe(&a.state, &self.task, Role::Robot);
        let (action, actor) = match self.control {
            Control::Policy => (self.policy.act(&obs), Actor::Policy),
            Control::Human => (self.human.take().unwrap_or(DeltaAction::ZERO), Actor::Expert),
        };
        if actor == Actor::Expert && a.termination.is_none() {
            a.termination = Some(a.steps.len() as u32);
        }
        a.steps.push(Step { t: a.state.step_count, obs, action, actor, contact: a.state.last_contact });
        a.state = step(&self.task, &a.state, &action).expect("horizon checked after every step").0;
        let mut out = vec![ServerMessage::Frame {
            tick: self.tick,
            scene: render_frame(&self.task, &a.state),
            control: self.control,
            episode: a.number,
            subtask: a.state.subtask_index,
        }];
        let goal = goal_satisfied(&a.state, &self.task);
        if goal || a.state.step_count >= self.task.horizon {
            let a = self.active.take().expect("episode active");
            let number = a.number;
            if goal {
                self.recorded.episodes.push(Episode {
                    header: EpisodeHeader {
                        task: self.task.task_id,
                        seed: a.seed,
                        corruption: self.corruption,
                        draw: a.start.corruption.clone(),
                        geometry_variant: a.start.geometry_variant,
                        provenance: Provenance::SourceHuman,
                        termination: a.termination,
                    },
                    start: a.start,
                    steps: a.steps,
                    goal,
                });
            } else {
                log::info!("session {}: episode {number} hit the horizon, not recorded", self.id);
            }
            out.push(ServerMessage::EpisodeEnd { episode: number, goal, recorded: goal });
        }
        out
    }
}
