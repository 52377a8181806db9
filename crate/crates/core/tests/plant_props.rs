use std::path::PathBuf;

use plantagent::parser::{parse_function_steps, FunctionStep};
use plantagent::plant::{FunctionCall, Location, Material, PlantState, DEFAULT_WORKPIECE_ID};
use plantagent::validator::simulate_function_steps;
use plantagent::Registry;
use proptest::prelude::*;
use serde_json::{json, Map, Value};
use url::Url;

const STATIONS: [&str; 5] = ["storage", "inspection", "cnc", "painting", "laser"];
const CODES: [&str; 12] = ["S1", "S2", "T1", "I1", "I2", "I3", "M1", "M2", "M3", "P1", "P2", "L1"];

fn golden_steps() -> Vec<FunctionStep> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/transport_completion.txt");
    parse_function_steps(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn golden_registry() -> Registry {
    Registry::bundled().rebased(&Url::parse("http://129.69.102.129:5010").unwrap())
}

fn standard_start(r: &Registry) -> PlantState {
    PlantState::standard_start(r, Material::Wood, Location::Module("storage".into()))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn golden_transport_executes() {
    let r = golden_registry();
    let sim = simulate_function_steps(&golden_steps(), &r, &standard_start(&r));
    assert!(sim.executable(), "{:?}", sim.fault);
    let wp = sim.final_state.workpiece(DEFAULT_WORKPIECE_ID).unwrap();
    assert_eq!(wp.location, Location::Module("painting".into()));
}

#[test]
fn every_reordering_of_the_transport_faults() {
    let r = golden_registry();
    let steps = golden_steps();
    let start = standard_start(&r);
    let perms = permutations(steps.len());
    assert_eq!(perms.len(), 120);
    let mut faulted = 0;
    for p in perms.iter().filter(|p| **p != [0, 1, 2, 3, 4]) {
        let reordered: Vec<_> = p.iter().map(|&i| steps[i].clone()).collect();
        let sim = simulate_function_steps(&reordered, &r, &start);
        assert!(!sim.executable(), "permutation {p:?} executed");
        faulted += 1;
    }
    assert_eq!(faulted, 119);
}

#[derive(Debug, Clone)]
enum Op {
    Func(&'static str, Option<&'static str>),
    Skill(&'static str),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        prop::sample::select(STATIONS.to_vec()).prop_map(|m| Op::Func("move_dock", Some(m))),
        Just(Op::Func("move_dock", None)),
        Just(Op::Func("load", None)),
        Just(Op::Func("unload", None)),
        Just(Op::Func("undock", None)),
        Just(Op::Func("teleport", None)),
        prop::sample::select(CODES.to_vec()).prop_map(Op::Skill),
    ]
}

fn params(target: Option<&str>) -> Map<String, Value> {
    match target {
        Some(m) => FunctionCall::move_dock(m).params,
        None => Map::new(),
    }
}

fn start() -> impl Strategy<Value = (Material, Location)> {
    (
        prop::sample::select(vec![Material::Steel, Material::Wood]),
        prop_oneof![
            Just(Location::Inventory),
            prop::sample::select(STATIONS.to_vec()).prop_map(|m| Location::Module(m.into())),
        ],
    )
}

proptest! {
    #[test]
    fn workpiece_is_conserved_and_faults_change_nothing((material, loc) in start(),
                                                        ops in prop::collection::vec(op(), 0..40)) {
        let r = Registry::bundled();
        let mut state = PlantState::standard_start(&r, material, loc);
        for op in ops {
            let before = state.clone();
            let result = match &op {
                Op::Func(name, target) => state.apply_functionality(&r, name, &params(*target)),
                Op::Skill(code) => state.apply_skill(&r, code, DEFAULT_WORKPIECE_ID, None),
            };
            match result {
                Ok(next) => {
                    prop_assert_eq!(next.version, before.version + 1);
                    state = next;
                }
                Err(_) => prop_assert_eq!(&state, &before),
            }
            prop_assert_eq!(state.workpieces.len(), 1);
            let wp = state.workpiece(DEFAULT_WORKPIECE_ID).unwrap();
            prop_assert_eq!(wp.material, material);
            let carrying = state.robot.carrying.is_some();
            prop_assert_eq!(carrying, wp.location == Location::Robot);
            prop_assert!(!state.robot.docked || state.robot.position.is_some());
        }
    }

    #[test]
    fn features_only_grow((material, loc) in start(), codes in prop::collection::vec(prop::sample::select(CODES.to_vec()), 0..30)) {
        let r = Registry::bundled();
        let mut state = PlantState::standard_start(&r, material, loc);
        for code in codes {
            if let Ok(next) = state.apply_skill(&r, code, DEFAULT_WORKPIECE_ID, None) {
                let old = state.workpiece(DEFAULT_WORKPIECE_ID).unwrap();
                let new = next.workpiece(DEFAULT_WORKPIECE_ID).unwrap();
                prop_assert!(old.features.keys().all(|k| new.features.contains_key(k)));
                state = next;
            }
        }
    }
}

#[test]
fn move_dock_params_must_name_a_station() {
    let r = Registry::bundled();
    let s = standard_start(&r);
    let robot = json!({"target_module": "robotino_7"});
    assert!(s.apply_functionality(&r, "move_dock", robot.as_object().unwrap()).is_err());
}
