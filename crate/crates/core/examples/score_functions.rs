//! Scores a triple with each model and checks the analytic gradient
//! against central differences.

use kge_subsampling::models::{init_params, score, score_gradient, ModelConfig, ModelKind};
use kge_subsampling::Triple;

fn main() -> kge_subsampling::Result<()> {
    let t = Triple::new(0, 1, 2);
    for kind in ModelKind::ALL {
        let mut p = init_params(&ModelConfig::new(kind, 8, 6.0), 3, 2, 42)?;
        let g = score_gradient(&p, &t);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..p.config.dim {
            let i = 2 * p.config.dim + k;
            let x = p.entity[i];
            p.entity[i] = x + h;
            let up = score(&p, &t);
            p.entity[i] = x - h;
            let down = score(&p, &t);
            p.entity[i] = x;
            worst = worst.max(((up - down) / (2.0 * h) - g.tail[k]).abs());
        }
        println!("{:<9} score {:>9.4}   max |tail grad - fd| {worst:.1e}", kind.as_str(), score(&p, &t));
    }
    Ok(())
}
