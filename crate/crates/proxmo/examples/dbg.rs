use proxmo::config::TrainConfig;
use proxmo::trainer::train;
use proxmo::types::Estimator;

fn main() {
    let text = std::fs::read_to_string("configs/reference.toml").unwrap();
    let base = TrainConfig::from_toml_str(&text).unwrap();
    for est in [Estimator::Grpo, Estimator::Proxmo] {
        let mut c = base.clone();
        c.learning_rate = 20.0;
        c.estimator = est;
        c.seed = 2;
        c.iterations = 150;
        c.eval_episodes = 240;
        let r = train(&c).unwrap();
        println!("{est}: final={:.4} breakdown={:?}", r.final_eval.success_rate,
            r.final_eval.per_difficulty.iter().map(|(d,s,n)| format!("{d}:{s:.3}({n})")).collect::<Vec<_>>());
        let tail: Vec<f64> = r.iterations[140..].iter().map(|m| (m.success_rate*100.0).round()/100.0).collect();
        println!("  train tail: {:?}", tail);
    }
}
