//! Sequential and parallel runs must agree bit for bit. Kept in its own
//! binary because the mode switch is process-global.

use perflab::conditions::{check_objective, Condition};
use perflab::objective::Quadratic;
use perflab::output::{landscape, landscape_csv};
use perflab::par;
use perflab::presets::canonical;
use perflab::solvers::grid_oracle_po;
use perflab::{Evaluator, ParamBox, SeedSpec, Theta};

#[test]
fn sequential_and_parallel_agree() {
    let inst = canonical();
    let ev = Evaluator::monte_carlo(&inst, 5_000, SeedSpec::new(11)).unwrap();
    let q = Quadratic { curvature: 2.0, center: vec![0.1, 0.2] };
    let domain = ParamBox::cube(2, -1.0, 1.0);

    let run = || {
        let rows = landscape(&ev, 0.25, &Theta::scalar(1.0)).unwrap();
        let po = grid_oracle_po(&ev, 0.01).unwrap();
        let sc = check_objective(&q, &q.optimal_set(), &domain, Condition::Sc, None, &SeedSpec::new(2)).unwrap();
        (landscape_csv(&rows), po.theta_star, po.objective.to_bits(), sc.best_constant.to_bits())
    };

    par::set_sequential(true);
    let seq = run();
    par::set_sequential(false);
    let par_out = run();
    assert_eq!(seq, par_out);
}
