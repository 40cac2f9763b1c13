//! Synthetic activity streams labelled by a known theory.
//!
//! Entities wander a square arena. Each time point every entity performs
//! one of `walk`, `active` or `inactive` (a sticky Markov chain) and reports
//! `coords/3` and `direction/2` context. Walkers starting out often fall in
//! behind the nearest walker and keep its pace, which makes `moving`
//! episodes common. The
//! annotation is exact Event Calculus inference under the ground-truth
//! theory from an empty initial state; noise then drops each annotation
//! atom independently.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clause::ModeSet;
use crate::ec::{step_infer, Atom, CoverError, FluentState, Interpretation, Term};
use crate::node::Theory;

use super::config::{ConfigError, KeyValues};

pub const DEFAULT_MODES: &str = "\
modeh(initiatedAt(moving(+person,+person),+time)).
modeh(terminatedAt(moving(+person,+person),+time)).
modeb(happensAt(walk(+person),+time)).
modeb(happensAt(active(+person),+time)).
modeb(happensAt(inactive(+person),+time)).
modeb(distLessThan(+person,+person,#dist,+time)).
modeb(distMoreThan(+person,+person,#dist,+time)).
modeb(dirLessThan(+person,+person,#angle,+time)).
pool(dist, [25,30,40]).
pool(angle, [45,90]).
";

pub const DEFAULT_GROUND_TRUTH: &str = "\
initiatedAt(moving(X,Y),T) :- happensAt(walk(X),T), happensAt(walk(Y),T), distLessThan(X,Y,25,T), dirLessThan(X,Y,45,T).
terminatedAt(moving(X,Y),T) :- happensAt(inactive(X),T), distMoreThan(X,Y,30,T).
";

const SWITCH: f64 = 0.15;
const SPEED_LO: f64 = 2.5;
const SPEED_HI: f64 = 4.0;
const CATCH_UP: f64 = 5.0;
const ACTIVITIES: [&str; 3] = ["walk", "active", "inactive"];

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub ground_truth: Theory,
    pub entities: Vec<String>,
    /// Number of time points, numbered from 1.
    pub horizon: u64,
    pub noise_rate: f64,
    pub seed: u64,
    pub chunk_size: usize,
    pub arena: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneratorError {
    #[error("noise rate must lie in [0, 0.5), got {0}")]
    NoiseRate(f64),
    #[error("need at least two entities")]
    Entities,
    #[error("chunk size must be at least 1")]
    ChunkSize,
    #[error("arena side must be positive")]
    Arena,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("ground truth: {0}")]
    GroundTruth(String),
    #[error(transparent)]
    Cover(#[from] CoverError),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            ground_truth: Theory::parse(DEFAULT_GROUND_TRUTH).expect("built-in ground truth parses"),
            entities: vec!["id1".into(), "id2".into(), "id3".into()],
            horizon: 1000,
            noise_rate: 0.0,
            seed: 0,
            chunk_size: 1,
            arena: 80.0,
        }
    }
}

pub const GENERATOR_KEYS: [&str; 7] = ["entities", "horizon", "noise_rate", "seed", "chunk_size", "arena", "ground_truth"];

impl GeneratorConfig {
    /// Reads a key-value generator config. `entities` is a count or a list
    /// of constants; `ground_truth` is inline theory text (defaults to the
    /// built-in moving theory).
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, GeneratorError> {
        kv.check_keys(&GENERATOR_KEYS)?;
        let mut cfg = GeneratorConfig::default();
        if let Some(list) = kv.list("entities") {
            cfg.entities = match list.as_slice() {
                [n] if n.parse::<usize>().is_ok() => (1..=n.parse::<usize>().unwrap()).map(|i| format!("id{i}")).collect(),
                _ => list,
            };
        }
        if let Some(h) = kv.get("horizon")? {
            cfg.horizon = h;
        }
        if let Some(n) = kv.get("noise_rate")? {
            cfg.noise_rate = n;
        }
        if let Some(s) = kv.get("seed")? {
            cfg.seed = s;
        }
        if let Some(c) = kv.get("chunk_size")? {
            cfg.chunk_size = c;
        }
        if let Some(a) = kv.get("arena")? {
            cfg.arena = a;
        }
        if let Some(gt) = kv.raw("ground_truth") {
            cfg.ground_truth = Theory::parse(gt).map_err(|e| GeneratorError::GroundTruth(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(GeneratorError::NoiseRate(self.noise_rate));
        }
        if self.entities.len() < 2 {
            return Err(GeneratorError::Entities);
        }
        if self.chunk_size == 0 {
            return Err(GeneratorError::ChunkSize);
        }
        if self.arena.is_nan() || self.arena <= 0.0 {
            return Err(GeneratorError::Arena);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    /// Training stream with noisy annotation.
    pub stream: Vec<Interpretation>,
    /// The same stream with the exact annotation.
    pub clean: Vec<Interpretation>,
    /// Annotation atoms `(fluent, time)` whose truth value was flipped.
    pub flips: Vec<(Term, i64)>,
}

#[derive(Clone)]
struct Entity {
    activity: usize,
    x: f64,
    y: f64,
    dir: f64,
    speed: f64,
    leader: Option<usize>,
}

fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(360.0)
}

fn step_world(world: &mut [Entity], rng: &mut ChaCha8Rng, arena: f64) {
    let snapshot = world.to_vec();
    for (i, e) in world.iter_mut().enumerate() {
        let before = e.activity;
        if rng.gen_bool(SWITCH) {
            e.activity = rng.gen_range(0..ACTIVITIES.len());
        }
        if e.activity != 0 {
            e.leader = None;
        } else if before != 0 {
            // starting to walk: often fall in with the nearest walker
            let nearest = snapshot
                .iter()
                .enumerate()
                .filter(|(j, o)| *j != i && o.activity == 0 && o.leader != Some(i))
                .min_by(|a, b| {
                    let da = (a.1.x - e.x).hypot(a.1.y - e.y);
                    let db = (b.1.x - e.x).hypot(b.1.y - e.y);
                    da.total_cmp(&db)
                });
            e.leader = match nearest {
                Some((j, _)) if rng.gen_bool(0.6) => Some(j),
                _ => None,
            };
            e.dir = rng.gen_range(0.0..360.0);
            e.speed = rng.gen_range(SPEED_LO..SPEED_HI);
        }
        if let Some(l) = e.leader {
            if snapshot[l].activity != 0 {
                e.leader = None;
            }
        }
        match e.activity {
            0 => {
                match e.leader.map(|l| &snapshot[l]) {
                    Some(l) => {
                        let gap = (l.x - e.x).hypot(l.y - e.y);
                        if gap > 10.0 {
                            e.dir = wrap_angle((l.y - e.y).atan2(l.x - e.x).to_degrees() + rng.gen_range(-5.0..5.0));
                            e.speed = CATCH_UP;
                        } else {
                            e.dir = wrap_angle(l.dir + rng.gen_range(-5.0..5.0));
                            e.speed = l.speed;
                        }
                    }
                    None => {
                        if rng.gen_bool(0.05) {
                            e.dir = rng.gen_range(0.0..360.0);
                        }
                        e.dir = wrap_angle(e.dir + rng.gen_range(-8.0..8.0));
                    }
                }
                let rad = e.dir.to_radians();
                e.x += e.speed * rad.cos();
                e.y += e.speed * rad.sin();
                if e.x < 0.0 || e.x > arena {
                    e.x = e.x.clamp(0.0, arena);
                    e.dir = wrap_angle(180.0 - e.dir);
                }
                if e.y < 0.0 || e.y > arena {
                    e.y = e.y.clamp(0.0, arena);
                    e.dir = wrap_angle(-e.dir);
                }
            }
            1 => {
                e.x = (e.x + rng.gen_range(-1.0..1.0)).clamp(0.0, arena);
                e.y = (e.y + rng.gen_range(-1.0..1.0)).clamp(0.0, arena);
                e.dir = wrap_angle(e.dir + rng.gen_range(-30.0..30.0));
            }
            _ => {}
        }
    }
}

fn narrative_at(world: &[Entity], names: &[Term], t: i64) -> Vec<Atom> {
    let mut out = Vec::with_capacity(world.len() * 3);
    let time = Term::int(t);
    for (e, name) in world.iter().zip(names) {
        out.push(Atom::new(
            "happensAt",
            vec![Term::Fn(ACTIVITIES[e.activity].into(), vec![name.clone()]), time.clone()],
        ));
        out.push(Atom::new(
            "holdsAt",
            vec![
                Term::Fn("coords".into(), vec![name.clone(), Term::int(e.x.round() as i64), Term::int(e.y.round() as i64)]),
                time.clone(),
            ],
        ));
        out.push(Atom::new(
            "holdsAt",
            vec![
                Term::Fn("direction".into(), vec![name.clone(), Term::int(e.dir.round() as i64 % 360)]),
                time.clone(),
            ],
        ));
    }
    out
}

/// Candidate target fluents: the ground-truth head fluents over ordered
/// pairs of distinct entities.
fn pair_universe(truth: &Theory, names: &[Term]) -> Vec<Term> {
    let functors: BTreeSet<_> = truth.clauses().filter_map(|c| c.head.args[0].functor().cloned()).collect();
    let mut out = Vec::new();
    for f in functors {
        for a in names {
            for b in names {
                if a != b {
                    out.push(Term::Fn(f.clone(), vec![a.clone(), b.clone()]));
                }
            }
        }
    }
    out
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Generated, GeneratorError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<Term> = cfg.entities.iter().map(|e| Term::constant(e)).collect();
    let universe = pair_universe(&cfg.ground_truth, &names);
    let mut world: Vec<Entity> = names
        .iter()
        .map(|_| Entity {
            activity: rng.gen_range(0..ACTIVITIES.len()),
            x: rng.gen_range(0.0..cfg.arena),
            y: rng.gen_range(0.0..cfg.arena),
            dir: rng.gen_range(0.0..360.0),
            speed: rng.gen_range(1.5..3.0),
            leader: None,
        })
        .collect();

    let horizon = cfg.horizon as i64;
    let mut narrative: Vec<Vec<Atom>> = Vec::with_capacity(cfg.horizon as usize);
    for t in 1..=horizon {
        if t > 1 {
            step_world(&mut world, &mut rng, cfg.arena);
        }
        narrative.push(narrative_at(&world, &names, t));
    }

    // exact labels: state[t - 1] holds at time t, for t in 1..=horizon+1
    let mut states = vec![FluentState::default()];
    for t in 1..=horizon {
        let window = Interpretation::new(0, t, t, narrative[(t - 1) as usize].iter().cloned(), [])
            .expect("generated narrative is well formed");
        let prev = states.last().expect("non-empty");
        let mut init = BTreeSet::new();
        let mut term = BTreeSet::new();
        for f in &universe {
            if cfg.ground_truth.initiation.iter().try_fold(false, |acc, c| Ok::<_, CoverError>(acc || c.fires(&window, f, t)?))? {
                init.insert(f.clone());
            }
            if prev.holds(f)
                && cfg.ground_truth.termination.iter().try_fold(false, |acc, c| Ok::<_, CoverError>(acc || c.fires(&window, f, t)?))?
            {
                term.insert(f.clone());
            }
        }
        states.push(step_infer(prev, &init, &term));
    }

    let mut noisy: Vec<BTreeSet<Term>> = states.iter().map(|s| s.0.clone()).collect();
    let mut flips = Vec::new();
    if cfg.noise_rate > 0.0 {
        for (t, set) in (1..).zip(noisy.iter_mut()) {
            let before: Vec<Term> = set.iter().cloned().collect();
            for f in before {
                if rng.gen_bool(cfg.noise_rate) {
                    set.remove(&f);
                    flips.push((f, t));
                }
            }
        }
    }

    let build = |labels: &[BTreeSet<Term>]| -> Vec<Interpretation> {
        let size = cfg.chunk_size as i64;
        let mut out = Vec::new();
        let mut start = 1;
        while start <= horizon {
            let end = (start + size - 1).min(horizon);
            let narr = (start..=end).flat_map(|t| narrative[(t - 1) as usize].iter().cloned());
            let ann = (start..=end + 1).flat_map(|t| labels[(t - 1) as usize].iter().map(move |f| Atom::holds_at(f.clone(), t)));
            out.push(Interpretation::new(out.len() as u64, start, end, narr, ann).expect("generated windows are well formed"));
            start = end + 1;
        }
        out
    };
    let clean_labels: Vec<BTreeSet<Term>> = states.into_iter().map(|s| s.0).collect();
    Ok(Generated {
        stream: build(&noisy),
        clean: build(&clean_labels),
        flips,
    })
}

/// Mode declarations matching the generator's vocabulary.
pub fn default_modes() -> ModeSet {
    ModeSet::parse(DEFAULT_MODES).expect("built-in modes parse")
}
