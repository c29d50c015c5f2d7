use fntree::gp::{evolve_structure, train_fnt};
use fntree::{Dataset, DeConfig, GpConfig, Sample};
use rand::Rng;

fn planted(n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Dataset {
    let mut rng = fntree::seed::rng(seed, &[]);
    let rows = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = f(&x);
            Sample::new(x, y)
        })
        .collect();
    Dataset::new((0..4).map(|k| format!("x{k}")).collect(), "y", rows, "planted").unwrap()
}

fn desk(seed: u64) -> (GpConfig, DeConfig) {
    let gp = GpConfig {
        max_generations: 10,
        stagnation_patience: 5,
        inner_de_budget: 200,
        seed,
        ..GpConfig::default()
    };
    let de = DeConfig {
        max_evaluations: 2000,
        seed,
        ..DeConfig::default()
    };
    (gp, de)
}

#[test]
fn identity_target_selects_its_feature() {
    let data = planted(100, 1, |x| x[3]);
    let (gp, de) = desk(2);
    let evo = evolve_structure(&data, &gp, &de).unwrap();
    assert!(evo.best.selected_features().contains(&3));
    let rmse: Vec<f64> = evo.history.iter().map(|g| g.best_rmse).collect();
    assert!(rmse.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn planted_subset_is_recalled() {
    let mut recalled = 0;
    for seed in 0..10 {
        let data = planted(100, 100 + seed, |x| (x[1] - x[3]).powi(2) + 0.5 * x[3]);
        let (gp, de) = desk(seed);
        let fit = train_fnt(&data, &gp, &de).unwrap();
        let s = fit.model.selected_features();
        if s.contains(&1) && s.contains(&3) {
            recalled += 1;
        }
    }
    assert!(recalled >= 9, "recall 1.0 in only {recalled}/10 runs");
}

#[test]
fn training_is_a_pure_function_of_seeds() {
    let data = planted(60, 7, |x| x[0] * x[2]);
    let (gp, de) = desk(5);
    let a = train_fnt(&data, &gp, &de).unwrap();
    let b = train_fnt(&data, &gp, &de).unwrap();
    assert_eq!(a.model.to_text(), b.model.to_text());
    assert_eq!(a.history, b.history);
}
