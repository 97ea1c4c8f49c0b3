use netalloc_core::allocator::{
    brute_force, degree_topk, genetic, greedy, single_discount, GaConfig, GreedyMode, DEFAULT_ENUMERATION_CAP,
};
use netalloc_core::dgp::{DgpInstance, DgpParams, OutcomeMode};
use netalloc_core::eval::{allocation_similarity, liftup, random_baseline};
use netalloc_core::graph::barabasi_albert;
use netalloc_core::netest::{Architecture, Batch, NetEst, TrainingConfig};
use netalloc_core::rng::stream;
use netalloc_core::{TotalEffect, TteObjective};

fn world(n: usize, beta: f64, seed: u64) -> DgpInstance {
    let g = barabasi_albert(n, 2, &mut stream(seed, 0)).unwrap();
    DgpInstance::sample(g, DgpParams::default().with_spillover(beta), &mut stream(seed, 1)).unwrap()
}

#[test]
fn genetic_gets_close_to_the_optimum_on_ten_nodes() {
    let inst = world(10, 0.3, 21);
    let obj = TotalEffect::new(&inst);
    let (_, opt) = brute_force(&obj, 2, DEFAULT_ENUMERATION_CAP).unwrap();
    assert!(opt > 0.0);
    let close = (0..10)
        .filter(|&run| {
            let out = genetic(&obj, 2, &GaConfig::default(), &[], &mut stream(run, 7)).unwrap();
            out.value >= 0.95 * opt
        })
        .count();
    assert!(close >= 8, "{close}/10 runs within 5% of {opt}");
}

#[test]
fn oracle_greedy_beats_random_targeting() {
    let inst = world(500, 0.3, 3);
    let obj = TotalEffect::new(&inst);
    let path = greedy(&obj, 25, GreedyMode::Incremental).unwrap();
    let base = random_baseline(&inst, 25, 100, &mut stream(3, 9)).unwrap();
    let lift = liftup(path.value(25), base.tte_mean).unwrap();
    assert!(lift > 1.0, "liftup {lift}");
}

#[test]
fn greedy_and_genetic_agree_on_a_trained_estimator() {
    let inst = world(500, 0.3, 5);
    let data = inst.sample_dataset(OutcomeMode::Bernoulli, &mut stream(5, 2)).unwrap();
    let batch = Batch::new(inst.graph(), inst.features(), &data);
    let mut model = NetEst::new(Architecture::new(inst.params().d), &mut stream(5, 3)).unwrap();
    let cfg = TrainingConfig { learning_rate: 5e-4, epochs: 500, ..TrainingConfig::default() };
    model.train(&batch, &cfg, &mut stream(5, 4)).unwrap();
    let fitted = model.fitted(inst.graph(), inst.features()).unwrap();
    let obj = TotalEffect::new(&fitted);

    let k = 25;
    let gr = greedy(&obj, k, GreedyMode::Incremental).unwrap().allocation(k);
    let seeds = [degree_topk(inst.graph(), k).unwrap(), single_discount(inst.graph(), k).unwrap()];
    let ga = genetic(&obj, k, &GaConfig::default(), &seeds, &mut stream(5, 6)).unwrap();
    assert!(ga.value >= obj.evaluate(seeds[0].treatments()));
    let sim = allocation_similarity(&gr, &ga.allocation).unwrap();
    assert!(sim > 0.9, "similarity {sim}");
}
