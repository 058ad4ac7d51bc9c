mod common;

use lvflex::milp::{
    brute_force_schedule, build_milp, solve_milp, verify_schedule, Checker, MilpOutcome, ModelSpec, SolveOptions,
};

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut mismatches = Vec::new();
    let mut infeasible = 0;
    let mut certified = 0;
    for seed in 0..300u64 {
        let preset = (seed % 5) as usize;
        let inst = common::small_instance(seed, preset, 4, 5);
        let spec = ModelSpec::default();
        let brute = brute_force_schedule(
            &inst.net,
            &inst.demand,
            &inst.contracts,
            &inst.limits,
            spec,
            Checker::Lin,
            20,
        )
        .unwrap();
        let model = build_milp(&inst.net, &inst.demand, &inst.contracts, &inst.limits, spec).unwrap();
        let res = solve_milp(&model, &SolveOptions::default()).unwrap();
        let got = match &res.outcome {
            MilpOutcome::Optimal(s) => {
                assert!(verify_schedule(s, &model.contracts, model.horizon()).is_empty());
                Some(s.objective)
            }
            MilpOutcome::Infeasible(i) => {
                if let Some(c) = &i.certificate {
                    assert!(c.is_valid(), "invalid certificate on seed {seed}");
                    certified += 1;
                }
                None
            }
            MilpOutcome::Timeout { .. } => panic!("timeout on seed {seed}"),
        };
        let want = brute.schedule.as_ref().map(|s| s.objective);
        infeasible += want.is_none() as usize;
        if got != want {
            mismatches.push((seed, preset, got, want));
        }
    }
    println!("infeasible {infeasible} certified {certified}");
    assert!(mismatches.is_empty(), "{mismatches:?}");
}

#[test]
fn comfort_binds_sometimes() {
    use lvflex::milp::preset_by_name;
    let mut binding = 0;
    for seed in 0..300u64 {
        let preset = (seed % 5) as usize;
        let inst = common::small_instance(seed, preset, 4, 5);
        let spec = ModelSpec::default();
        let m = build_milp(&inst.net, &inst.demand, &inst.contracts, &inst.limits, spec).unwrap();
        let simple = preset_by_name("simple", 60).unwrap();
        let cs: Vec<_> = inst
            .contracts
            .iter()
            .map(|c| lvflex::milp::Contract::new(&c.user_id, c.p_gtd_kw, &simple))
            .collect();
        let ms = build_milp(&inst.net, &inst.demand, &cs, &inst.limits, spec).unwrap();
        let a = solve_milp(&m, &SolveOptions::default()).unwrap().objective();
        let b = solve_milp(&ms, &SolveOptions::default()).unwrap().objective();
        if a != b {
            binding += 1;
        }
    }
    println!("binding {binding}");
    assert!(binding > 0);
}
