//! Deterministic synthetic multi-turn text environment.
//!
//! Each task hides one or two target objects in seed-chosen containers,
//! along with worthless junk items; the agent must open the right
//! containers, take each target, and set it on the goal receptacle within
//! the horizon. Junk can be taken and put just like a target — telling
//! them apart from the action text is part of the task — but only targets
//! count. The terminal reward is binary: 1.0 on completing the full goal,
//! 0 otherwise. Difficulty is controlled structurally (containers,
//! targets, junk, horizon), never by reward noise. Container kinds carry a
//! placement prior, so the opening order is learnable.
//!
//! Observations are rendered from fixed templates and then passed through
//! synonym substitution: each template word that belongs to a synonym set
//! is replaced, with probability `synonym_noise`, by another member of its
//! set, drawn from a per-episode noise stream. This produces lexically
//! distinct but semantically equivalent observations across the rollouts
//! of a group — the exact-match stressor — while `synonym_noise = 0`
//! leaves observations byte-identical. The noise stream draws two values
//! per eligible token regardless of the outcome, so runs with the same
//! noise seed are coupled across noise levels: raising the noise can only
//! substitute a superset of tokens.
//!
//! Dynamics, layout, and admissible-action order are fully deterministic
//! given (config, task seed, noise seed, action sequence).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONTAINER_KINDS: [&str; 12] = [
    "cabinet", "drawer", "crate", "chest", "locker", "basket", "trunk", "bin", "hamper",
    "cupboard", "barrel", "rack",
];

/// Placement prior per container kind: objects are usually stashed in
/// chests and trunks, sometimes in lockers and cabinets, rarely elsewhere.
/// This gives the opening order learnable structure.
const KIND_WEIGHTS: [f64; 12] = [2.0, 1.0, 1.0, 5.0, 3.0, 1.0, 5.0, 1.0, 1.0, 2.0, 1.0, 1.0];

const OBJECT_NAMES: [&str; 8] = [
    "brass key",
    "silver coin",
    "glass orb",
    "wax seal",
    "tin whistle",
    "jade ring",
    "iron nail",
    "bone charm",
];

/// Worthless distractors. They hide in containers like targets do and can
/// be taken and put, wasting steps; the goal only counts targets.
const JUNK_NAMES: [&str; 8] = [
    "dusty rag",
    "bent spoon",
    "old cork",
    "torn page",
    "gray pebble",
    "frayed rope",
    "cracked tile",
    "dull pin",
];

const GOAL_NAMES: [&str; 4] = ["oak table", "stone bench", "copper tray", "velvet mat"];

/// Disjoint synonym sets; the first member is the canonical template word.
const SYNONYM_SETS: [[&str; 6]; 17] = [
    ["stand", "perch", "hover", "tarry", "remain", "pause"],
    ["quiet", "silent", "hushed", "murky", "drafty", "chilly"],
    ["storeroom", "pantry", "cellar", "backroom", "stockroom", "annex"],
    ["deliver", "bring", "convey", "haul", "ferry", "shift"],
    ["containers", "receptacles", "compartments", "enclosures", "holders", "vessels"],
    ["closed", "shut", "sealed", "latched", "fastened", "locked"],
    ["pull", "tug", "yank", "drag", "ease", "swing"],
    ["bare", "vacant", "hollow", "barren", "cleared", "unused"],
    ["spot", "glimpse", "notice", "sight", "discern", "spy"],
    ["waits", "lingers", "abides", "endures", "beckons", "gleams"],
    ["corner", "alcove", "nook", "recess", "shadows", "gloom"],
    ["lift", "raise", "grab", "hoist", "scoop", "pluck"],
    ["firmly", "tightly", "gently", "snugly", "loosely", "softly"],
    ["resting", "lying", "nestled", "lodged", "stashed", "tucked"],
    ["hidden", "concealed", "unfound", "buried", "secreted", "misplaced"],
    ["empty", "free", "unladen", "light", "unburdened", "idle"],
    ["complete", "finished", "fulfilled", "settled", "wrapped", "over"],
];

fn synonym_set_of(token: &str) -> Option<&'static [&'static str; 6]> {
    SYNONYM_SETS.iter().find(|set| set.contains(&token))
}

/// Structural parameters of a single task family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub n_containers: usize,
    pub n_targets: usize,
    /// Distractor objects hidden alongside the targets.
    pub n_junk: usize,
    pub horizon: usize,
    pub synonym_noise: f64,
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_containers < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_containers must be at least 2, got {}",
                self.n_containers
            )));
        }
        if !(self.n_targets == 1 || self.n_targets == 2) {
            return Err(Error::InvalidConfig(format!(
                "n_targets must be 1 or 2, got {}",
                self.n_targets
            )));
        }
        if self.n_targets + self.n_junk > self.n_containers {
            return Err(Error::InvalidConfig(format!(
                "{} targets + {} junk items exceed {} containers",
                self.n_targets, self.n_junk, self.n_containers
            )));
        }
        if self.n_junk > JUNK_NAMES.len() {
            return Err(Error::InvalidConfig(format!(
                "n_junk must be at most {}, got {}",
                JUNK_NAMES.len(),
                self.n_junk
            )));
        }
        if self.horizon < 2 * self.n_targets + 2 {
            return Err(Error::InvalidConfig(format!(
                "horizon {} too short for {} targets; tasks must be solvable",
                self.horizon, self.n_targets
            )));
        }
        if !(0.0..=1.0).contains(&self.synonym_noise) {
            return Err(Error::InvalidConfig(format!(
                "synonym_noise must be in [0, 1], got {}",
                self.synonym_noise
            )));
        }
        Ok(())
    }
}

/// One entry of the difficulty mix: partial overrides of the base
/// parameters plus a sampling weight.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DifficultyEntry {
    pub name: Option<String>,
    pub weight: Option<f64>,
    pub n_containers: Option<usize>,
    pub n_targets: Option<usize>,
    pub n_junk: Option<usize>,
    pub horizon: Option<usize>,
    pub synonym_noise: Option<f64>,
}

/// Environment configuration: base parameters plus an optional weighted
/// mix of overrides for heterogeneous task pools.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub n_containers: usize,
    pub n_targets: usize,
    pub n_junk: usize,
    pub horizon: usize,
    pub synonym_noise: f64,
    pub difficulty_mix: Vec<DifficultyEntry>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_containers: 6,
            n_targets: 1,
            n_junk: 1,
            horizon: 6,
            synonym_noise: 0.0,
            difficulty_mix: Vec::new(),
        }
    }
}

impl EnvConfig {
    pub fn base_params(&self) -> EnvParams {
        EnvParams {
            n_containers: self.n_containers,
            n_targets: self.n_targets,
            n_junk: self.n_junk,
            horizon: self.horizon,
            synonym_noise: self.synonym_noise,
        }
    }

    /// Resolved (name, params, weight) buckets; a config without an
    /// explicit mix is a single bucket named "base".
    pub fn buckets(&self) -> Vec<(String, EnvParams, f64)> {
        if self.difficulty_mix.is_empty() {
            return vec![("base".to_string(), self.base_params(), 1.0)];
        }
        self.difficulty_mix
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let name = entry.name.clone().unwrap_or_else(|| format!("mix{i}"));
                let base = self.base_params();
                let params = EnvParams {
                    n_containers: entry.n_containers.unwrap_or(base.n_containers),
                    n_targets: entry.n_targets.unwrap_or(base.n_targets),
                    n_junk: entry.n_junk.unwrap_or(base.n_junk),
                    horizon: entry.horizon.unwrap_or(base.horizon),
                    synonym_noise: entry.synonym_noise.unwrap_or(base.synonym_noise),
                };
                (name, params, entry.weight.unwrap_or(1.0))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, params, weight) in self.buckets() {
            params
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("bucket '{name}': {e}")))?;
            if !(weight > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "bucket '{name}' has non-positive weight {weight}"
                )));
            }
        }
        Ok(())
    }
}

/// Something that can sit in a container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Target(usize),
    Junk(usize),
}

/// A concrete task: which containers hold which items, fully determined
/// by (params, task seed).
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub task_id: String,
    pub difficulty: String,
    pub params: EnvParams,
    /// Container index of each target.
    target_containers: Vec<usize>,
    /// Index into [`OBJECT_NAMES`] of each target.
    target_objects: Vec<usize>,
    junk_containers: Vec<usize>,
    junk_objects: Vec<usize>,
    goal: usize,
}

pub fn container_name(index: usize) -> String {
    format!(
        "{} {}",
        CONTAINER_KINDS[index % CONTAINER_KINDS.len()],
        index + 1
    )
}

/// Weighted draw without replacement under the kind placement prior.
fn draw_container(containers: &mut Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = containers
        .iter()
        .map(|&c| KIND_WEIGHTS[c % KIND_WEIGHTS.len()])
        .sum();
    let mut draw = rng.gen::<f64>() * total;
    let mut chosen = containers.len() - 1;
    for (slot, &c) in containers.iter().enumerate() {
        let w = KIND_WEIGHTS[c % KIND_WEIGHTS.len()];
        if draw < w {
            chosen = slot;
            break;
        }
        draw -= w;
    }
    containers.swap_remove(chosen)
}

impl TaskInstance {
    /// Deterministic layout from (params, task_seed). Targets and junk are
    /// placed without replacement under the same kind prior.
    pub fn generate(params: EnvParams, task_seed: u64, difficulty: &str) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
        let goal = rng.gen_range(0..GOAL_NAMES.len());
        let mut containers: Vec<usize> = (0..params.n_containers).collect();
        let mut objects: Vec<usize> = (0..OBJECT_NAMES.len()).collect();
        let mut junk_names: Vec<usize> = (0..JUNK_NAMES.len()).collect();
        let mut target_containers = Vec::with_capacity(params.n_targets);
        let mut target_objects = Vec::with_capacity(params.n_targets);
        for _ in 0..params.n_targets {
            target_containers.push(draw_container(&mut containers, &mut rng));
            target_objects.push(objects.swap_remove(rng.gen_range(0..objects.len())));
        }
        let mut junk_containers = Vec::with_capacity(params.n_junk);
        let mut junk_objects = Vec::with_capacity(params.n_junk);
        for _ in 0..params.n_junk {
            junk_containers.push(draw_container(&mut containers, &mut rng));
            junk_objects.push(junk_names.swap_remove(rng.gen_range(0..junk_names.len())));
        }
        Ok(Self {
            task_id: format!("{difficulty}-{task_seed:016x}"),
            difficulty: difficulty.to_string(),
            params,
            target_containers,
            target_objects,
            junk_containers,
            junk_objects,
            goal,
        })
    }

    pub fn goal_name(&self) -> &'static str {
        GOAL_NAMES[self.goal]
    }

    pub fn object_name(&self, target: usize) -> &'static str {
        OBJECT_NAMES[self.target_objects[target]]
    }

    fn item_name(&self, item: Item) -> &'static str {
        match item {
            Item::Target(k) => OBJECT_NAMES[self.target_objects[k]],
            Item::Junk(k) => JUNK_NAMES[self.junk_objects[k]],
        }
    }

    fn item_container(&self, item: Item) -> usize {
        match item {
            Item::Target(k) => self.target_containers[k],
            Item::Junk(k) => self.junk_containers[k],
        }
    }

    /// The item hidden in a container, if any.
    fn item_in(&self, container: usize) -> Option<Item> {
        if let Some(k) = self.target_containers.iter().position(|&c| c == container) {
            return Some(Item::Target(k));
        }
        self.junk_containers
            .iter()
            .position(|&c| c == container)
            .map(Item::Junk)
    }

    /// Begin an episode; the noise seed drives only synonym substitution.
    pub fn start(&self, noise_seed: u64) -> (Episode, Observation) {
        let mut episode = Episode {
            task: self.clone(),
            opened: vec![false; self.params.n_containers],
            delivered: vec![false; self.params.n_targets],
            junk_gone: vec![false; self.params.n_junk],
            holding: None,
            t: 0,
            done: false,
            noise_rng: ChaCha8Rng::seed_from_u64(noise_seed),
        };
        let text = episode.render(&Event::Start);
        let actions = episode.admissible_action_texts();
        (episode, Observation { text, actions })
    }
}

/// Rendered observation plus the admissible actions at that state.
#[derive(Debug, Clone)]
pub struct Observation {
    pub text: String,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Open(usize),
    Take(Item),
    Put(Item),
}

enum Event {
    Start,
    OpenedEmpty(usize),
    OpenedFound(usize, Item),
    Took(Item),
    PutJunk(Item),
    Delivered(Item, bool),
}

/// Outcome of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// Mutable episode state over a task instance.
#[derive(Debug, Clone)]
pub struct Episode {
    task: TaskInstance,
    opened: Vec<bool>,
    delivered: Vec<bool>,
    junk_gone: Vec<bool>,
    holding: Option<Item>,
    t: usize,
    done: bool,
    noise_rng: ChaCha8Rng,
}

impl Episode {
    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    pub fn task(&self) -> &TaskInstance {
        &self.task
    }

    /// An item is takeable while its container is open, it has not been
    /// disposed of, and it is not already in hand.
    fn takeable(&self, item: Item) -> bool {
        if self.holding == Some(item) {
            return false;
        }
        let gone = match item {
            Item::Target(k) => self.delivered[k],
            Item::Junk(k) => self.junk_gone[k],
        };
        !gone && self.opened[self.task.item_container(item)]
    }

    fn admissible_actions(&self) -> Vec<Action> {
        let mut actions = Vec::new();
        for (i, &open) in self.opened.iter().enumerate() {
            if !open {
                actions.push(Action::Open(i));
            }
        }
        if self.holding.is_none() {
            // Take actions in container order, targets and junk alike.
            for container in 0..self.task.params.n_containers {
                if let Some(item) = self.task.item_in(container) {
                    if self.takeable(item) {
                        actions.push(Action::Take(item));
                    }
                }
            }
        }
        if let Some(item) = self.holding {
            actions.push(Action::Put(item));
        }
        actions
    }

    fn action_text(&self, action: Action) -> String {
        match action {
            Action::Open(i) => format!("open the {}", container_name(i)),
            Action::Take(item) => format!(
                "take the {} from the {}",
                self.task.item_name(item),
                container_name(self.task.item_container(item))
            ),
            Action::Put(item) => format!(
                "put the {} onto the {}",
                self.task.item_name(item),
                self.task.goal_name()
            ),
        }
    }

    pub fn admissible_action_texts(&self) -> Vec<String> {
        self.admissible_actions()
            .iter()
            .map(|&a| self.action_text(a))
            .collect()
    }

    /// Apply one action by its index into the current admissible list.
    pub fn step(&mut self, action_id: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let actions = self.admissible_actions();
        if action_id >= actions.len() {
            return Err(Error::InvalidAction {
                action_id,
                n_actions: actions.len(),
            });
        }
        self.t += 1;
        let event = match actions[action_id] {
            Action::Open(i) => {
                self.opened[i] = true;
                match self.task.item_in(i).filter(|&item| self.takeable(item)) {
                    Some(item) => Event::OpenedFound(i, item),
                    None => Event::OpenedEmpty(i),
                }
            }
            Action::Take(item) => {
                self.holding = Some(item);
                Event::Took(item)
            }
            Action::Put(item) => {
                self.holding = None;
                match item {
                    Item::Target(k) => {
                        self.delivered[k] = true;
                        Event::Delivered(item, self.delivered.iter().all(|&d| d))
                    }
                    Item::Junk(k) => {
                        self.junk_gone[k] = true;
                        Event::PutJunk(item)
                    }
                }
            }
        };
        let success = matches!(event, Event::Delivered(_, true));
        let reward = if success { 1.0 } else { 0.0 };
        self.done = success || self.t >= self.task.params.horizon;
        let text = self.render(&event);
        let actions = if self.done {
            Vec::new()
        } else {
            self.admissible_action_texts()
        };
        Ok(StepOutcome {
            observation: Observation { text, actions },
            reward,
            done: self.done,
        })
    }

    fn hands_clause(&self) -> String {
        match self.holding {
            Some(item) => format!("you carry the {} .", self.task.item_name(item)),
            None => "your hands are empty .".to_string(),
        }
    }

    fn render(&mut self, event: &Event) -> String {
        let goal = self.task.goal_name();
        let body = match event {
            Event::Start => {
                let objects = (0..self.task.params.n_targets)
                    .map(|k| format!("the {}", self.task.object_name(k)))
                    .collect::<Vec<_>>()
                    .join(" and ");
                format!(
                    "you stand in the quiet storeroom . your task : deliver {objects} to the {goal} . \
                     {} containers sit closed around you . {} the {goal} waits in the corner .",
                    self.task.params.n_containers,
                    self.hands_clause(),
                )
            }
            Event::OpenedEmpty(i) => format!(
                "you pull open the {} and find it bare . nothing useful hidden there . \
                 the {goal} waits in the corner . {} the other containers sit closed .",
                container_name(*i),
                self.hands_clause(),
            ),
            Event::OpenedFound(i, item) => format!(
                "you pull open the {} and spot the {} resting inside . \
                 the {goal} waits in the corner . {} the other containers sit closed .",
                container_name(*i),
                self.task.item_name(*item),
                self.hands_clause(),
            ),
            Event::Took(item) => format!(
                "you lift the {} and grip it firmly . now deliver it to the {goal} . \
                 the {goal} waits in the corner . the containers sit closed around you .",
                self.task.item_name(*item),
            ),
            Event::PutJunk(item) => format!(
                "you set the {} onto the {goal} . it just sits there . nothing happens . \
                 your hands are empty . the containers sit closed around you .",
                self.task.item_name(*item),
            ),
            Event::Delivered(item, finished) => {
                if *finished {
                    format!(
                        "you set the {} onto the {goal} . the task is complete . \
                         every item is stowed . you stand empty handed in the quiet storeroom .",
                        self.task.item_name(*item),
                    )
                } else {
                    format!(
                        "you set the {} onto the {goal} . more items remain hidden in the \
                         quiet storeroom . {} the containers sit closed around you .",
                        self.task.item_name(*item),
                        self.hands_clause(),
                    )
                }
            }
        };
        self.apply_noise(&body)
    }

    /// Replace each synonym-set token with probability `synonym_noise` by
    /// another member of its set. Two draws per eligible token are always
    /// consumed so noise levels are coupled under a shared seed.
    fn apply_noise(&mut self, text: &str) -> String {
        let noise = self.task.params.synonym_noise;
        text.split(' ')
            .map(|word| match synonym_set_of(word) {
                Some(set) => {
                    let u: f64 = self.noise_rng.gen();
                    let pick = self.noise_rng.gen_range(0..set.len() - 1);
                    if u < noise {
                        let position = set.iter().position(|w| *w == word).unwrap();
                        let alternatives: Vec<&str> = set
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != position)
                            .map(|(_, w)| *w)
                            .collect();
                        alternatives[pick]
                    } else {
                        word
                    }
                }
                None => word,
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Weighted draw over the difficulty mix, then a fresh task seed per task.
pub fn sample_task_pool(config: &EnvConfig, n_tasks: usize, seed: u64) -> Result<Vec<TaskInstance>> {
    config.validate()?;
    let buckets = config.buckets();
    let total_weight: f64 = buckets.iter().map(|(_, _, w)| w).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let mut draw = rng.gen::<f64>() * total_weight;
        let mut chosen = buckets.len() - 1;
        for (i, (_, _, w)) in buckets.iter().enumerate() {
            if draw < *w {
                chosen = i;
                break;
            }
            draw -= w;
        }
        let (name, params, _) = &buckets[chosen];
        let task_seed = rng.next_u64();
        pool.push(TaskInstance::generate(*params, task_seed, name)?);
    }
    Ok(pool)
}

/// Optimal scripted action for the current episode state: put the target
/// you hold, take a revealed target, otherwise open the container of the
/// first outstanding target. Junk is never touched, so any task is solved
/// in 3 steps per target.
pub fn oracle_action(episode: &Episode) -> Option<usize> {
    let actions = episode.admissible_actions();
    if let Some(item) = episode.holding {
        return actions.iter().position(|&a| a == Action::Put(item));
    }
    for target in 0..episode.task.params.n_targets {
        let item = Item::Target(target);
        if episode.takeable(item) {
            return actions.iter().position(|&a| a == Action::Take(item));
        }
    }
    for target in 0..episode.task.params.n_targets {
        if !episode.delivered[target] && !episode.opened[episode.task.target_containers[target]] {
            let container = episode.task.target_containers[target];
            return actions.iter().position(|&a| a == Action::Open(container));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_containers: usize, n_targets: usize, horizon: usize, noise: f64) -> EnvParams {
        EnvParams {
            n_containers,
            n_targets,
            n_junk: 1,
            horizon,
            synonym_noise: noise,
        }
    }

    #[test]
    fn layout_and_observations_are_deterministic() {
        let p = params(6, 1, 6, 0.7);
        let task_a = TaskInstance::generate(p, 42, "base").unwrap();
        let task_b = TaskInstance::generate(p, 42, "base").unwrap();
        let (_, obs_a) = task_a.start(7);
        let (_, obs_b) = task_b.start(7);
        assert_eq!(obs_a.text, obs_b.text);
        assert_eq!(obs_a.actions, obs_b.actions);
    }

    #[test]
    fn zero_noise_gives_identical_group_observations() {
        let task = TaskInstance::generate(params(5, 1, 6, 0.0), 3, "base").unwrap();
        let texts: Vec<String> = (0..8).map(|k| task.start(k).1.text).collect();
        for t in &texts[1..] {
            assert_eq!(t, &texts[0]);
        }
    }

    #[test]
    fn full_noise_gives_pairwise_distinct_observations() {
        let task = TaskInstance::generate(params(5, 1, 6, 1.0), 3, "base").unwrap();
        let texts: Vec<String> = (0..8).map(|k| task.start(k).1.text).collect();
        for i in 0..texts.len() {
            for j in (i + 1)..texts.len() {
                assert_ne!(texts[i], texts[j], "rollouts {i} and {j} collided");
            }
        }
    }

    #[test]
    fn oracle_solves_within_minimal_steps() {
        for task_seed in 0..50 {
            for p in [params(4, 1, 6, 0.0), params(9, 2, 8, 0.3), params(12, 2, 6, 1.0)] {
                let task = TaskInstance::generate(p, task_seed, "base").unwrap();
                let (mut episode, _) = task.start(task_seed ^ 0xabcd);
                let mut reward = 0.0;
                while !episode.is_done() {
                    let a = oracle_action(&episode).expect("oracle has a move");
                    reward = episode.step(a).unwrap().reward;
                }
                assert_eq!(reward, 1.0, "seed {task_seed}");
                assert_eq!(episode.steps_taken(), 3 * p.n_targets);
            }
        }
    }

    #[test]
    fn junk_can_be_taken_and_wastes_steps() {
        // Find a task, open the junk container, take and put the junk.
        let p = params(6, 1, 10, 0.0);
        let task = TaskInstance::generate(p, 8, "base").unwrap();
        let junk_container = task.junk_containers[0];
        let (mut episode, _) = task.start(0);
        let open_text = format!("open the {}", container_name(junk_container));
        let obs = {
            let id = episode
                .admissible_action_texts()
                .iter()
                .position(|a| a == &open_text)
                .unwrap();
            episode.step(id).unwrap().observation
        };
        let take_id = obs
            .actions
            .iter()
            .position(|a| a.starts_with("take the") && a.contains(JUNK_NAMES[task.junk_objects[0]]))
            .expect("junk is takeable after its container opens");
        let obs = episode.step(take_id).unwrap().observation;
        let put_id = obs
            .actions
            .iter()
            .position(|a| a.starts_with("put the"))
            .unwrap();
        let out = episode.step(put_id).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
        // Junk is gone for good: no take action mentions it anymore.
        assert!(out
            .observation
            .actions
            .iter()
            .all(|a| !a.contains(JUNK_NAMES[task.junk_objects[0]])));
    }

    #[test]
    fn horizon_exhaustion_ends_episode_without_reward() {
        let p = EnvParams {
            n_containers: 8,
            n_targets: 1,
            n_junk: 0,
            horizon: 4,
            synonym_noise: 0.0,
        };
        let task = TaskInstance::generate(p, 1, "base").unwrap();
        let (mut episode, mut obs) = task.start(0);
        let mut last = StepOutcome {
            observation: obs.clone(),
            reward: 1.0,
            done: false,
        };
        while !episode.is_done() {
            let wrong = obs
                .actions
                .iter()
                .position(|a| {
                    a.starts_with("open")
                        && *a != format!("open the {}", container_name(task.target_containers[0]))
                })
                .unwrap();
            last = episode.step(wrong).unwrap();
            obs = last.observation.clone();
        }
        assert_eq!(episode.steps_taken(), 4);
        assert_eq!(last.reward, 0.0);
        assert!(last.done);
        assert!(matches!(episode.step(0), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn invalid_action_id_rejected() {
        let task = TaskInstance::generate(params(4, 1, 6, 0.0), 5, "base").unwrap();
        let (mut episode, obs) = task.start(0);
        assert!(matches!(
            episode.step(obs.actions.len()),
            Err(Error::InvalidAction { .. })
        ));
    }

    #[test]
    fn config_validation_catches_bad_values() {
        assert!(params(1, 1, 6, 0.0).validate().is_err());
        assert!(params(6, 3, 12, 0.0).validate().is_err());
        assert!(params(6, 2, 5, 0.0).validate().is_err());
        assert!(params(6, 1, 6, 1.5).validate().is_err());
        assert!(params(6, 1, 6, 0.5).validate().is_ok());
        // targets + junk must fit into the containers
        let crowded = EnvParams {
            n_containers: 2,
            n_targets: 2,
            n_junk: 1,
            horizon: 6,
            synonym_noise: 0.0,
        };
        assert!(crowded.validate().is_err());
    }

    #[test]
    fn task_pool_is_deterministic_and_weighted() {
        let config = EnvConfig {
            n_containers: 6,
            n_targets: 1,
            n_junk: 1,
            horizon: 6,
            synonym_noise: 0.0,
            difficulty_mix: vec![
                DifficultyEntry {
                    name: Some("easy".into()),
                    weight: Some(1.0),
                    n_containers: Some(4),
                    ..DifficultyEntry::default()
                },
                DifficultyEntry {
                    name: Some("hard".into()),
                    weight: Some(1.0),
                    n_containers: Some(10),
                    n_targets: Some(2),
                    horizon: Some(8),
                    ..DifficultyEntry::default()
                },
            ],
        };
        let pool_a = sample_task_pool(&config, 400, 9).unwrap();
        let pool_b = sample_task_pool(&config, 400, 9).unwrap();
        for (a, b) in pool_a.iter().zip(&pool_b) {
            assert_eq!(a.task_id, b.task_id);
        }
        // 50/50 mix: counts within binomial 3 sigma of 200.
        let easy = pool_a.iter().filter(|t| t.difficulty == "easy").count() as f64;
        let sigma = (400.0f64 * 0.25).sqrt();
        assert!((easy - 200.0).abs() < 3.0 * sigma, "easy count {easy}");

        let single = EnvConfig {
            difficulty_mix: Vec::new(),
            ..config
        };
        let pool = sample_task_pool(&single, 10, 1).unwrap();
        assert!(pool.iter().all(|t| t.difficulty == "base"));
    }

    #[test]
    fn random_policy_rarely_solves_hard_tasks() {
        let p = EnvParams {
            n_containers: 10,
            n_targets: 2,
            n_junk: 2,
            horizon: 8,
            synonym_noise: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut successes = 0;
        for task_seed in 0..1000u64 {
            let task = TaskInstance::generate(p, task_seed, "hard").unwrap();
            let (mut episode, mut obs) = task.start(task_seed);
            while !episode.is_done() {
                let a = rng.gen_range(0..obs.actions.len());
                let out = episode.step(a).unwrap();
                if out.reward > 0.0 {
                    successes += 1;
                }
                obs = out.observation;
            }
        }
        assert!(
            (successes as f64) / 1000.0 < 0.3,
            "random success rate {successes}/1000"
        );
    }

    #[test]
    fn kind_prior_biases_target_placement() {
        // chest (index 3) carries weight 5 of a total 2+1+1+5 over four
        // containers; with many seeds the empirical share concentrates.
        let p = EnvParams {
            n_containers: 4,
            n_targets: 1,
            n_junk: 0,
            horizon: 6,
            synonym_noise: 0.0,
        };
        let mut chest = 0usize;
        let n = 2000;
        for task_seed in 0..n {
            let task = TaskInstance::generate(p, task_seed as u64, "base").unwrap();
            if task.target_containers[0] == 3 {
                chest += 1;
            }
        }
        let expected = 5.0 / 9.0;
        let sigma = (n as f64 * expected * (1.0 - expected)).sqrt();
        assert!(
            (chest as f64 - n as f64 * expected).abs() < 4.0 * sigma,
            "chest count {chest}"
        );
    }

    #[test]
    fn noise_coupling_is_monotone_in_divergence() {
        // Same noise seed at increasing noise levels substitutes a
        // superset of tokens, so the text differs from canonical in
        // (weakly) more positions.
        let diff_count = |noise: f64| -> usize {
            let task = TaskInstance::generate(params(5, 1, 6, noise), 11, "base").unwrap();
            let (_, obs) = task.start(99);
            let canonical = TaskInstance::generate(params(5, 1, 6, 0.0), 11, "base")
                .unwrap()
                .start(99)
                .1
                .text;
            obs.text
                .split(' ')
                .zip(canonical.split(' '))
                .filter(|(a, b)| a != b)
                .count()
        };
        let mut prev = 0;
        for noise in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let d = diff_count(noise);
            assert!(d >= prev, "noise {noise}: {d} < {prev}");
            prev = d;
        }
    }
}
