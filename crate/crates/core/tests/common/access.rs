//! Every read and mutation, for every role, against sealed and unsealed
//! datasets, with the outputs scanned for sealed label values.

use holdmeter::planner::{MeterSpec, Mode};
use holdmeter::registry::{DatasetId, LabelMap, Mutation, Principal, Registry, Role};

const LABEL_BASE: i64 = 7_300_000;
const TEST_N: usize = 400;

pub fn principal(role: Role) -> Principal {
    Principal::new(format!("{role}-user"), role, format!("tok-{role}"))
}

/// Labels drawn from a range no prediction or id ever uses, so any
/// occurrence in an output is a disclosure.
pub fn secret_labels(prefix: &str) -> LabelMap {
    (0..TEST_N).map(|i| (format!("{prefix}{i:04}"), LABEL_BASE + i as i64)).collect()
}

pub fn leaks(text: &str) -> bool {
    (0..TEST_N as i64).any(|i| text.contains(&(LABEL_BASE + i).to_string()))
}

pub struct Fixture {
    pub reg: Registry,
    pub val: DatasetId,
    pub sealed: DatasetId,
    pub next: DatasetId,
    pub session: holdmeter::engine::SessionId,
}

pub fn fixture() -> Fixture {
    let mut reg = Registry::in_memory();
    let admin = principal(Role::Admin);
    let none = Mutation::default();
    let val_items: LabelMap = (0..30).map(|i| (format!("v{i:04}"), 1)).collect();
    let val = reg.register_dataset(&admin, None, val_items, false, 0, &none).unwrap();
    let sealed = reg
        .register_dataset(&principal(Role::Labeler), None, secret_labels("s"), true, 0, &none)
        .unwrap();
    let next = reg
        .register_dataset(&principal(Role::Labeler), None, secret_labels("n"), true, 0, &none)
        .unwrap();
    let spec = MeterSpec::uniform(Mode::Regular, 2, 2, 0.1, 0.1).unwrap();
    let session = reg
        .create_session(&admin, spec, val.clone(), sealed.clone(), 0, &none)
        .unwrap()
        .id;
    Fixture {
        reg,
        val,
        sealed,
        next,
        session,
    }
}

pub fn predictions(f: &Fixture, p: &Principal, test: &DatasetId) -> LabelMap {
    let mut out = LabelMap::new();
    for id in f.reg.example_ids(p, &f.val).unwrap() {
        out.insert(id, 0);
    }
    for id in f.reg.example_ids(p, test).unwrap() {
        out.insert(id, 0);
    }
    out
}

/// Run every operation as `p` and collect the serialized outputs, errors
/// included.
pub fn outputs(role: Role, rotate_first: bool) -> (Vec<(String, String)>, Fixture) {
    let mut f = fixture();
    let p = principal(role);
    let none = Mutation::default();
    let mut out = Vec::new();
    let mut record = |op: &str, text: String| out.push((op.to_string(), text));

    if rotate_first {
        for _ in 0..2 {
            let preds = predictions(&f, &p, &f.sealed.clone());
            f.reg.submit(&p, &f.session, preds, 1, &none).unwrap();
        }
        let next = f.next.clone();
        let r = f.reg.rotate(&p, &f.session, next, 2, &none);
        record("rotate", format!("{r:?}"));
    }
    let test = f.reg.session_summary(&p, &f.session).unwrap().test;

    for ds in [f.val.clone(), f.sealed.clone(), f.next.clone()] {
        record("read_labels", serde_json::to_string(&f.reg.read_labels(&p, &ds).unwrap()).unwrap());
        record("dataset_info", serde_json::to_string(&f.reg.dataset_info(&p, &ds).unwrap()).unwrap());
        record("example_ids", serde_json::to_string(&f.reg.example_ids(&p, &ds).unwrap()).unwrap());
    }
    record("list_datasets", serde_json::to_string(&f.reg.list_datasets(&p)).unwrap());

    let preds = predictions(&f, &p, &test);
    let r = f.reg.submit(&p, &f.session, preds.clone(), 3, &none);
    record("submit", format!("{}", r.as_ref().map(|r| serde_json::to_string(r).unwrap()).unwrap_or_else(|e| e.to_string())));
    let mut partial = preds;
    partial.pop_first();
    let r = f.reg.submit(&p, &f.session, partial, 4, &none);
    record("submit_error", format!("{:?} {}", r, r.as_ref().err().map(ToString::to_string).unwrap_or_default()));
    let r = f.reg.revert(&p, &f.session, 5, &none);
    record("revert", format!("{r:?}"));
    let r = f.reg.handoff(&p, &f.session, 5, &none);
    record("handoff", format!("{r:?}"));
    let r = f.reg.rotate(&p, &f.session, f.sealed.clone(), 6, &none);
    record("rotate_error", format!("{r:?}"));
    let r = f
        .reg
        .register_dataset(&p, None, secret_labels("x"), true, 7, &none)
        .map(|id| f.reg.read_labels(&p, &id).map(|v| serde_json::to_string(&v).unwrap()));
    record("register_sealed", format!("{r:?}"));

    record("status", serde_json::to_string(&f.reg.status(&p, &f.session).unwrap()).unwrap());
    record("history", serde_json::to_string(&f.reg.history(&p, &f.session).unwrap()).unwrap());
    record("summary", serde_json::to_string(&f.reg.session_summary(&p, &f.session).unwrap()).unwrap());
    record("sessions", serde_json::to_string(&f.reg.list_sessions(&p)).unwrap());
    (out, f)
}


pub fn developers_never_see_sealed_labels() {
    for rotate_first in [false, true] {
        let (outs, f) = outputs(Role::Developer, rotate_first);
        let retired = rotate_first.then(|| f.sealed.clone());
        for (op, text) in &outs {
            let allowed = op == "read_labels" && retired.as_ref().is_some_and(|r| text.contains(&r.0));
            if !allowed {
                assert!(!leaks(text), "developer saw sealed labels via {op} (rotated: {rotate_first}): {text:.200}");
            }
        }
        // and the retired set really is readable
        let dev = principal(Role::Developer);
        assert_eq!(f.reg.read_labels(&dev, &f.sealed).unwrap().reveals_labels(), rotate_first);
        assert!(!f.reg.read_labels(&dev, &f.next).unwrap().reveals_labels());
    }
}

pub fn labelers_and_admins_read_everything() {
    for role in [Role::Labeler, Role::Admin] {
        let (outs, f) = outputs(role, false);
        let p = principal(role);
        for ds in [&f.val, &f.sealed, &f.next] {
            assert!(f.reg.read_labels(&p, ds).unwrap().reveals_labels());
        }
        assert!(outs.iter().any(|(op, t)| op == "read_labels" && leaks(t)));
    }
}

pub fn sealed_registration_matrix() {
    let none = Mutation::default();
    for role in Role::ALL {
        for sealed in [false, true] {
            let mut reg = Registry::in_memory();
            let r = reg.register_dataset(&principal(role), None, secret_labels("q"), sealed, 0, &none);
            assert_eq!(r.is_ok(), !sealed || role != Role::Developer, "{role} sealed={sealed}");
        }
    }
}
