//! Cross-checks the planner against plain depth-first enumeration.

use plantagent::parser::SkillPlan;
use plantagent::planner::{oracle_plan_skills, Planner};
use plantagent::task::bundled_tasks;
use plantagent::validator::{simulate_skill_plan, validate_plan};
use plantagent::{Registry, TaskSpec};

const CODES: [&str; 12] = ["S1", "S2", "T1", "I1", "I2", "I3", "M1", "M2", "M3", "P1", "P2", "L1"];

/// Every grammar-valid, executable, satisfying plan of at most `max_len`
/// steps, in catalog order, found by extending executable prefixes.
fn enumerate(registry: &Registry, spec: &TaskSpec, max_len: usize) -> Vec<Vec<String>> {
    let planner = Planner::new(registry).with_max_len(max_len);
    let initial = spec.initial_state(registry);
    let mut found = Vec::new();
    let mut stack: Vec<Vec<String>> = vec![vec!["S1".to_string()]];
    while let Some(prefix) = stack.pop() {
        let report = validate_plan(&SkillPlan::new(prefix.clone()), spec, &planner);
        if report.is_correct() {
            found.push(prefix.clone());
        }
        if prefix.len() == max_len {
            continue;
        }
        for code in CODES.iter().rev() {
            let mut next = prefix.clone();
            next.push(code.to_string());
            let n = next.len();
            if n >= 2 && next[n - 1] == "T1" && next[n - 2] == "T1" {
                continue;
            }
            // only prefixes whose completed steps execute can grow into plans
            let done: Vec<String> = if next.last().unwrap() == "T1" {
                next[..n - 1].to_vec()
            } else {
                next.clone()
            };
            if simulate_skill_plan(&SkillPlan::new(done), registry, &initial).executable() {
                stack.push(next);
            }
        }
    }
    found
}

fn shortest_first(mut plans: Vec<Vec<String>>) -> Option<Vec<String>> {
    let index = |c: &String| CODES.iter().position(|x| x == c).unwrap();
    plans.sort_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.iter().map(index).cmp(b.iter().map(index)))
    });
    plans.into_iter().next()
}

#[test]
fn planner_matches_enumeration_on_short_tasks() {
    let r = Registry::bundled();
    for spec in [&bundled_tasks()[0], &bundled_tasks()[2]] {
        let oracle = oracle_plan_skills(&r, spec).unwrap();
        let best = shortest_first(enumerate(&r, spec, oracle.len())).unwrap();
        assert_eq!(best, oracle, "{}", spec.instruction);
    }
}
