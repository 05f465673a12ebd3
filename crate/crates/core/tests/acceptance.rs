//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one pass/fail line per criterion. Exits nonzero when any criterion fails.
//!
//! The MNIST experiment (criteria 1-4) and the centralized baseline
//! (criterion 5) need the IDX files under `FEDSCHED_MNIST_DIR` or
//! `<workspace>/data/mnist`; without them those criteria fail.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use fedsched::fl::{self, TrainConfig};
use fedsched::harness::report::episode_csv;
use fedsched::harness::{run_episode, DataBundle, EpisodeResult, ExperimentConfig, FederatedEnv};
use fedsched::scheduler::{
    cosine_similarity, update_aoi, FeatureSpace, PolicyInputs, PolicyKind, Scheduler,
};
use fedsched::topology::ScenarioKind;

use common::rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Acceptance experiment: scenario c, M = 50, 300 rounds on a 10k MNIST pool.
fn mnist_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        clients: 50,
        scheduled: 5,
        rounds: 300,
        episodes: 5,
        scenario: ScenarioKind::ClusteredSpatiallyCorrelated,
        ..Default::default()
    };
    cfg.dataset.dir = common::mnist_dir();
    cfg.dataset.train_pool = 10_000;
    cfg
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Run {
    episodes: Vec<EpisodeResult>,
    elapsed: Duration,
}

impl Run {
    /// Rounds to target per seed, censored at the round budget.
    fn rounds(&self, budget: usize) -> Vec<f64> {
        self.episodes
            .iter()
            .map(|e| e.rounds_to_target.unwrap_or(budget) as f64)
            .collect()
    }

    /// Energy per seed, censored at the energy of the whole episode.
    fn energy(&self) -> Vec<f64> {
        self.episodes
            .iter()
            .map(|e| e.energy_cost.unwrap_or_else(|| e.total_trained()) as f64)
            .collect()
    }

    fn finals(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.final_accuracy()).collect()
    }

    fn reached(&self) -> usize {
        self.episodes.iter().filter(|e| e.rounds_to_target.is_some()).count()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn run_policy(cfg: &ExperimentConfig, data: &DataBundle, policy: PolicyKind, k: usize) -> fedsched::Result<Run> {
    let config = ExperimentConfig {
        policy,
        scheduled: k,
        ..cfg.clone()
    };
    config.validate()?;
    let start = Instant::now();
    let episodes = SEEDS
        .iter()
        .map(|&s| run_episode(&config, data, s))
        .collect::<fedsched::Result<Vec<_>>>()?;
    Ok(Run {
        episodes,
        elapsed: start.elapsed(),
    })
}

struct Experiment {
    cfg: ExperimentConfig,
    dm: Run,
    rnd: Run,
    rr: Run,
    bc: Run,
    ocl: Run,
    l2n: Run,
    dm_k10: Run,
}

fn run_experiment(data: &DataBundle) -> fedsched::Result<Experiment> {
    let cfg = mnist_config();
    let go = |policy, k| {
        let run = run_policy(&cfg, data, policy, k)?;
        eprintln!(
            "  {:>4} K={:<2} reached {}/5, rounds {:?}, finals {:.4?} ({:.1?})",
            format!("{policy:?}"),
            k,
            run.reached(),
            run.episodes.iter().map(|e| e.rounds_to_target).collect::<Vec<_>>(),
            run.finals(),
            run.elapsed
        );
        Ok::<_, fedsched::Error>(run)
    };
    Ok(Experiment {
        dm: go(PolicyKind::Dm, 5)?,
        rnd: go(PolicyKind::Rnd, 5)?,
        rr: go(PolicyKind::Rr, 5)?,
        bc: go(PolicyKind::Bc, 5)?,
        ocl: go(PolicyKind::Ocl, 5)?,
        l2n: go(PolicyKind::L2n, 5)?,
        dm_k10: go(PolicyKind::Dm, 10)?,
        cfg,
    })
}

fn criterion_1(x: &Experiment) -> Outcome {
    let t = x.cfg.rounds;
    let dm = mean(&x.dm.rounds(t));
    let rnd = mean(&x.rnd.rounds(t));
    let rr = mean(&x.rr.rounds(t));
    let bc = mean(&x.bc.rounds(t));
    let ocl = mean(&x.ocl.rounds(t));
    let time = x.dm.elapsed + x.rnd.elapsed + x.rr.elapsed + x.bc.elapsed + x.ocl.elapsed;
    let pass = dm < rnd && dm < rr && dm < bc && ocl <= dm && time <= Duration::from_secs(15 * 60);
    Outcome::new(
        pass,
        format!(
            "mean rounds to {:.2}: DM {dm:.1}, RND {rnd:.1}, RR {rr:.1}, BC {bc:.1}, OCL {ocl:.1} (unreached = {t}); {:.0?}",
            x.cfg.accuracy_target, time
        ),
    )
}

fn criterion_2(x: &Experiment) -> Outcome {
    let dm = mean(&x.dm.energy());
    let l2n = mean(&x.l2n.energy());
    let gain = l2n / dm;
    Outcome::new(gain >= 5.0, format!("energy L2N {l2n:.1} / DM {dm:.1} = {gain:.2} (need >= 5)"))
}

fn criterion_3(x: &Experiment) -> Outcome {
    let dm = mean(&x.dm.finals());
    let l2n = mean(&x.l2n.finals());
    Outcome::new(
        dm >= l2n - 0.01,
        format!("final accuracy DM {dm:.4} vs L2N {l2n:.4} (need DM >= L2N - 0.01)"),
    )
}

fn criterion_4(x: &Experiment) -> Outcome {
    let t = x.cfg.rounds;
    let (r5, r10) = (x.dm.rounds(t), x.dm_k10.rounds(t));
    let (e5, e10) = (x.dm.energy(), x.dm_k10.energy());
    let fewer = r5.iter().zip(&r10).filter(|(a, b)| b < a).count();
    let costlier = e5.iter().zip(&e10).filter(|(a, b)| b > a).count();
    let pass = mean(&r10) < mean(&r5) && mean(&e10) > mean(&e5) && fewer >= 3 && costlier >= 3;
    Outcome::new(
        pass,
        format!(
            "DM K=10 vs K=5: rounds {:.1} vs {:.1} (fewer on {fewer}/5), energy {:.1} vs {:.1} (more on {costlier}/5)",
            mean(&r10),
            mean(&r5),
            mean(&e10),
            mean(&e5)
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut cfg = mnist_config();
    cfg.dataset.train_pool = 60_000;
    let data = match DataBundle::load(&cfg.dataset, 0) {
        Ok(d) => d,
        Err(e) => return Outcome::new(false, format!("loading full MNIST: {e}")),
    };
    let budget = Duration::from_secs(5 * 60);
    let start = Instant::now();
    let mut r = rng(0);
    let mut params = fl::init_model(data.train.dim(), cfg.train.hidden, data.test.n_classes, &mut r);
    let train = TrainConfig {
        local_epochs: 1,
        ..cfg.train
    };
    let mut acc = 0.0;
    let mut epochs = 0;
    while start.elapsed() < budget {
        params = fl::local_train(&params, &data.train, &train, &mut r).params;
        epochs += 1;
        acc = fl::evaluate(&params, &data.test).unwrap_or(0.0);
        if acc >= 0.90 {
            break;
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        acc >= 0.90 && elapsed <= budget,
        format!("centralized test accuracy {acc:.4} after {epochs} epoch(s) in {elapsed:.1?}"),
    )
}

fn criterion_6() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let grad = (0..3).map(|s| common::gradient_check_max_rel_error(s, 1e-3)).fold(0.0, f64::max);
    pass &= grad < 1e-4;
    notes.push(format!("gradient rel err {grad:.1e}"));

    let (power, shadow, ch) = common::fading_and_shadowing_stats(100_000, 21);
    let rp = (power - ch.nakagami_omega).abs() / ch.nakagami_omega;
    let rs = (shadow - ch.shadow_sigma_db).abs() / ch.shadow_sigma_db;
    pass &= rp < 0.02 && rs < 0.02;
    notes.push(format!("fading mean dev {:.2}%, shadow std dev {:.2}%", 100.0 * rp, 100.0 * rs));

    let mut fedavg_err: f64 = 0.0;
    let mut r = rng(6);
    for _ in 0..100 {
        let n = r.random_range(1..6);
        let models: Vec<_> = (0..n)
            .map(|_| fl::init_model::<f64, _>(3, 4, 2, &mut r))
            .collect();
        let sizes: Vec<usize> = (0..n).map(|_| r.random_range(1..1_000)).collect();
        let refs: Vec<_> = models.iter().collect();
        let agg = fl::fedavg(&refs, &sizes).unwrap();
        let total: usize = sizes.iter().sum();
        for layer in 0..4 {
            for (i, &v) in agg.layers()[layer].iter().enumerate() {
                let expected: f64 = models
                    .iter()
                    .zip(&sizes)
                    .map(|(m, &s)| s as f64 / total as f64 * m.layers()[layer][i])
                    .sum();
                fedavg_err = fedavg_err.max((v - expected).abs());
            }
        }
    }
    pass &= fedavg_err < 1e-9;
    notes.push(format!("fedavg err {fedavg_err:.1e}"));

    let cfg = common::synthetic_config();
    let data = common::synthetic_data(&cfg);
    let (acc_gap, param_gap) = common::full_participation_gap(&cfg, &data, 0);
    pass &= acc_gap < 1e-6 && param_gap < 1e-6;
    notes.push(format!("K=M oracle gap acc {acc_gap:.1e} params {param_gap:.1e}"));

    Outcome::new(pass, notes.join("; "))
}

fn criterion_7(data: Option<&DataBundle>) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let (cfg, data) = match data {
        Some(d) => (mnist_config(), d.clone()),
        None => {
            notes.push("MNIST missing, structural checks on synthetic data".into());
            let c = common::synthetic_config();
            let d = common::synthetic_data(&c);
            (c, d)
        }
    };
    let m = cfg.clients;
    let k = cfg.scheduled;

    let env = match FederatedEnv::new(&cfg, &data, 0) {
        Ok(e) => e,
        Err(e) => return Outcome::new(false, format!("setting up episode: {e}")),
    };
    let a = env.graph().adjacency_matrix();
    let symmetric = (0..m).all(|i| a[i][i] == 0 && (0..m).all(|j| a[i][j] == a[j][i]));
    pass &= symmetric;
    notes.push(format!("adjacency symmetric, zero diagonal: {symmetric}"));

    // DM on the real embeddings: every mask is K distinct ids, no pick is in
    // the window at pick time, and the age law holds.
    let z = env.embeddings();
    let mut features = FeatureSpace::new(m);
    let mut s = match Scheduler::new(PolicyKind::Dm, k, m, cfg.window_len(), cfg.dm_bootstrap) {
        Ok(s) => s,
        Err(e) => return Outcome::new(false, format!("building scheduler: {e}")),
    };
    let (mut masks_ok, mut window_ok, mut aoi_ok) = (true, true, true);
    let mut r = rng(0);
    for _ in 0..cfg.rounds {
        let mut window = s.window().clone();
        let inputs = PolicyInputs {
            features: &features,
            embeddings: Some(z),
            graph: Some(env.graph()),
            label_histograms: None,
        };
        let mask = s.schedule_round(&inputs, &mut r).unwrap();
        let ids = mask.scheduled();
        masks_ok &= ids.len() == k && ids.windows(2).all(|w| w[0] < w[1]) && ids.iter().all(|&i| i < m);
        for &pick in mask.selection_order() {
            window_ok &= !window.contains(pick);
            window.push(pick);
        }
        let before: Vec<u32> = features.clients.iter().map(|c| c.aoi).collect();
        update_aoi(&mut features, &mask);
        aoi_ok &= features.clients.iter().enumerate().all(|(i, c)| {
            if mask.is_scheduled(i) {
                c.aoi == 0
            } else {
                c.aoi == before[i] + 1
            }
        });
    }
    pass &= masks_ok && window_ok && aoi_ok;
    notes.push(format!("masks K-distinct {masks_ok}, DM avoids window {window_ok}, AoI law {aoi_ok}"));

    let mut cos_ok = true;
    let mut scale_ok = true;
    let scaled = z.scaled(37.5);
    for i in 0..m {
        for j in 0..m {
            let c = cosine_similarity(z.row(i), z.row(j));
            cos_ok &= (-1.0 - 1e-12..=1.0 + 1e-12).contains(&c);
            scale_ok &= (c - cosine_similarity(scaled.row(i), scaled.row(j))).abs() < 1e-9;
        }
    }
    pass &= cos_ok && scale_ok;
    notes.push(format!("cosine bounded {cos_ok}, scale invariant {scale_ok}"));

    let gaps: Vec<f64> = (0..5).map(common::clique_separation_gap).collect();
    let separated = gaps.iter().filter(|&&g| g > 0.3).count();
    pass &= separated >= 3;
    notes.push(format!("clique gap > 0.3 on {separated}/5"));

    let short = ExperimentConfig { rounds: 20, ..cfg };
    let identical = match (run_episode(&short, &data, 3), run_episode(&short, &data, 3)) {
        (Ok(x), Ok(y)) => episode_csv(&x) == episode_csv(&y),
        _ => false,
    };
    pass &= identical;
    notes.push(format!("repeated episode CSVs identical {identical}"));

    Outcome::new(pass, notes.join("; "))
}

fn main() -> ExitCode {
    let cfg = mnist_config();
    let data = DataBundle::load(&cfg.dataset, cfg.master_seed);
    let experiment = match &data {
        Ok(d) => {
            eprintln!("running the MNIST experiment (7 policy/K combinations x 5 seeds)");
            run_experiment(d).map_err(|e| format!("running episodes: {e}"))
        }
        Err(e) => Err(format!("loading MNIST from {}: {e}", cfg.dataset.dir.display())),
    };

    let mut outcomes = Vec::new();
    match &experiment {
        Ok(x) => {
            outcomes.push(criterion_1(x));
            outcomes.push(criterion_2(x));
            outcomes.push(criterion_3(x));
            outcomes.push(criterion_4(x));
        }
        Err(e) => {
            for _ in 0..4 {
                outcomes.push(Outcome::new(false, e.clone()));
            }
        }
    }
    outcomes.push(criterion_5());
    outcomes.push(criterion_6());
    outcomes.push(criterion_7(data.as_ref().ok()));

    let mut failed = 0;
    for (i, o) in outcomes.iter().enumerate() {
        println!("[{}] criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
