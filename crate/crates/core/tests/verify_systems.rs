mod common;

use common::{script, BoxProperty};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reinverify::drlp::{expand_iterables, parse};
use reinverify::formula::Formula;
use reinverify::network::{Activation, Layer, Network};
use reinverify::verify::{
    bmc, build_induction_query, build_query, k_induction, solve, solve_interval, verify, Guarantee,
    Method, SolverConfig, Status, VerifyError,
};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn identity() -> Network {
    Network::new(vec![common::linear(vec![vec![1.0]], vec![0.0])]).unwrap()
}

const UNIT_BOX: &str = "@Pre\nx_size = 1\ny_size = 1\n0 <= x[0][0] <= 1\n@Exp\n";

#[test]
fn identity_box_properties() {
    let proven = script(&format!("{UNIT_BOX}y[0][0] >= 0\n"));
    let q = build_query(&proven, &identity(), 1).unwrap();
    assert_eq!(solve(&q, &cfg()).unwrap().status, Status::Proven);

    let falsified = script(&format!("{UNIT_BOX}y[0][0] >= 0.5\n"));
    let q = build_query(&falsified, &identity(), 1).unwrap();
    let r = solve(&q, &cfg()).unwrap();
    assert_eq!(r.status, Status::Falsified);
    let w = r.witness.unwrap();
    assert!((0.0..0.5).contains(&w.x[0][0]));

    assert_eq!(solve_interval(&q, &cfg()).unwrap().status, Status::Unknown);
    let loose = script(&format!("{UNIT_BOX}y[0][0] >= -0.5\n"));
    let q = build_query(&loose, &identity(), 1).unwrap();
    assert_eq!(solve_interval(&q, &cfg()).unwrap().status, Status::Proven);
}

#[test]
fn tanh_layer_routes_to_interval() {
    let net = Network::new(vec![
        Layer::new(vec![vec![1.0]], vec![0.0], Activation::Tanh),
        common::linear(vec![vec![1.0]], vec![0.0]),
    ])
    .unwrap();
    let s = script(&format!("{UNIT_BOX}y[0][0] <= 1\n"));
    let r = verify(&s, &net, 1, Method::Bmc, &cfg()).unwrap();
    assert_eq!(r.status, Status::Proven);
    let q = build_query(&s, &net, 1).unwrap();
    assert!(matches!(
        solve(&q, &cfg()),
        Err(VerifyError::NonPiecewiseLinear)
    ));
}

#[test]
fn safety_script_query_shape_at_depth_two() {
    let src = std::fs::read_to_string(common::corpus_dir().join("safety.drlp")).unwrap();
    let s = expand_iterables(&parse(&src).unwrap())
        .unwrap()
        .remove(0)
        .into_script()
        .unwrap();
    let net = Network::new(vec![common::linear(vec![vec![0.0, 0.0]], vec![0.0])]).unwrap();
    let q = build_query(&s, &net, 2).unwrap();
    // Negated post: one disjunct per step, each a single atom on that step's y.
    let Formula::Or(cases) = &q.negated_post_formula else {
        panic!("{:?}", q.negated_post_formula)
    };
    assert_eq!(cases.len(), 2);
    for (step, case) in cases.iter().enumerate() {
        let vars = case.vars();
        assert_eq!(
            vars.into_iter().collect::<Vec<_>>(),
            vec![q.unrolled.y_id(step, 0)]
        );
    }
    // Two implication groups from the single transition step.
    assert_eq!(q.constraints.groups.len(), 2);
}

#[test]
fn exist_post_negates_to_conjunction() {
    let s = script("@Pre\nx_size = 1\ny_size = 1\nfor i in range(0, k):\n    0 <= x[i][0] <= 1\n@Exp\nfor i in orange(0, k):\n    y[i][0] >= 2\n");
    let q = build_query(&s, &identity(), 2).unwrap();
    assert!(q.negated_post.groups.is_empty());
    assert_eq!(q.negated_post.linear.len(), 2);
    assert!(matches!(
        k_induction(&s, &identity(), 3, &cfg()),
        Err(VerifyError::NotInductible(_))
    ));
}

#[test]
fn one_shot_query_covers_one_copy() {
    let s = script(&format!("{UNIT_BOX}y[0][0] >= 0\n"));
    let q = build_query(&s, &identity(), 1).unwrap();
    assert_eq!(q.unrolled.num_vars(), 2);
    let r = k_induction(&s, &identity(), 3, &cfg()).unwrap();
    assert_eq!((r.status, r.depth), (Status::Proven, 1));
}

#[test]
fn arity_mismatch_is_reported() {
    let s = script("@Pre\nx_size = 2\ny_size = 1\n[0]*2 <= x[0] <= [1]*2\n@Exp\ny[0][0] >= 0\n");
    assert!(matches!(
        build_query(&s, &identity(), 1),
        Err(VerifyError::Arity { .. })
    ));
}

#[test]
fn drift_fails_first_at_depth_three() {
    let s = script(common::DRIFT_SCRIPT);
    let net = common::drift_net();
    let r = bmc(&s, &net, 10, &cfg()).unwrap();
    assert_eq!((r.status, r.depth), (Status::Falsified, 3));
    let w = r.witness.unwrap();
    assert_eq!(w.x.len(), 3);
    for i in 0..3 {
        assert!((w.x[i][0] - i as f64).abs() < 1e-6);
        assert!((w.y[i][0] - 1.0).abs() < 1e-9);
    }
    let kind = k_induction(&s, &net, 10, &cfg()).unwrap();
    assert_eq!((kind.status, kind.depth), (Status::Falsified, 3));
}

#[test]
fn clamped_state_is_one_inductive() {
    let s = script(common::CLAMPED_SCRIPT);
    let net = common::clamp_net();
    let r = k_induction(&s, &net, 5, &cfg()).unwrap();
    assert_eq!(
        (r.status, r.depth, r.guarantee),
        (Status::Proven, 1, Some(Guarantee::Unbounded))
    );
    let b = bmc(&s, &net, 10, &cfg()).unwrap();
    assert_eq!(
        (b.status, b.depth, b.guarantee),
        (Status::Proven, 10, Some(Guarantee::Bounded))
    );
}

#[test]
fn shift_register_needs_depth_two() {
    let s = script(common::SHIFT_SCRIPT);
    let net = common::shift_net();
    let step1 = build_induction_query(&s, &net, 1).unwrap();
    assert_eq!(solve(&step1, &cfg()).unwrap().status, Status::Falsified);
    let r = k_induction(&s, &net, 5, &cfg()).unwrap();
    assert_eq!((r.status, r.depth), (Status::Proven, 2));
    let b = bmc(&s, &net, 2 * r.depth, &cfg()).unwrap();
    assert_eq!(b.status, Status::Proven);
}

#[test]
fn zero_node_budget_gives_unknown() {
    let s = script("@Pre\nx_size = 1\ny_size = 1\n-1 <= x[0][0] <= 1\n@Exp\ny[0][0] >= -4.9\n");
    let q = build_query(&s, &common::gap_net(), 1).unwrap();
    let r = solve(&q, &cfg().with_node_budget(0)).unwrap();
    assert_eq!(r.status, Status::Unknown);
    assert_eq!(solve(&q, &cfg()).unwrap().status, Status::Falsified);
}

#[test]
fn random_instances_match_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut decided = 0;
    for i in 0..30 {
        let net = common::random_relu_net(&mut rng, 8);
        let prop = BoxProperty::random(&mut rng, &net);
        let Some(expected) = common::oracle_verdict(&net, &prop, 1e-5) else {
            continue;
        };
        decided += 1;
        let r = solve(
            &build_query(&script(&prop.to_drlp()), &net, 1).unwrap(),
            &cfg(),
        )
        .unwrap();
        assert_eq!(r.status == Status::Proven, expected, "instance {i}: {r:?}");
        if let Some(w) = r.witness {
            let y = net.forward(&w.x[0]).unwrap();
            assert!(y.iter().zip(&w.y[0]).all(|(a, b)| (a - b).abs() <= 1e-6));
            assert!(prop.is_violation(&w.x[0], &y, 1e-6), "instance {i}");
        }
    }
    assert!(decided >= 25);
}
