//! Program templates: small CS1-style problems over conditionals, loops,
//! strings, and arrays.
//!
//! Instantiation randomizes identifier names, a few constants, and picks
//! one of a handful of semantically equivalent structure variants, then
//! pairs the source with a native reference closure over the same
//! constants and a set of reference inputs (edge cases plus random draws).
//! The reference closure is the specification; the interpreter run of the
//! generated source must agree with it input for input.

use rand::prelude::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::interp::Value;
use crate::seed;

pub struct Template {
    pub name: &'static str,
    pub skill: &'static str,
    pub variants: usize,
}

pub const TEMPLATES: [Template; 6] = [
    Template {
        name: "speedTicket",
        skill: "conditionals",
        variants: 2,
    },
    Template {
        name: "ticketPrice",
        skill: "conditionals",
        variants: 2,
    },
    Template {
        name: "countPairs",
        skill: "strings",
        variants: 2,
    },
    Template {
        name: "sumSkip",
        skill: "loops",
        variants: 2,
    },
    Template {
        name: "canSplit",
        skill: "arrays",
        variants: 2,
    },
    Template {
        name: "findFirst",
        skill: "loops",
        variants: 2,
    },
];

pub fn template(name: &str) -> &'static Template {
    TEMPLATES
        .iter()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("unknown template `{name}`"))
}

/// Template for the `i`-th problem id (problems cycle through templates).
pub fn template_for_problem(problem: usize) -> &'static Template {
    &TEMPLATES[(problem.saturating_sub(1)) % TEMPLATES.len()]
}

pub struct TemplateInstance {
    pub source: String,
    pub inputs: Vec<Vec<Value>>,
    /// Reference-closure output per input; the specification the source
    /// must honor.
    pub expected: Vec<Value>,
}

type Reference = Box<dyn Fn(&[Value]) -> Value>;

struct Built {
    source: String,
    reference: Reference,
    inputs: Vec<Vec<Value>>,
}

/// Instantiate with independent streams for structure, constants,
/// identifiers, and inputs, all derived from one seed.
pub fn instantiate(name: &str, seed_value: u64) -> TemplateInstance {
    let t = template(name);
    let variant = (seed::derive(seed_value, "variant") % t.variants as u64) as usize;
    instantiate_controlled(
        name,
        variant,
        seed::derive(seed_value, "consts"),
        seed::derive(seed_value, "idents"),
        seed::derive(seed_value, "inputs"),
    )
}

/// Fully pinned instantiation, used by tests that hold structure and
/// constants fixed while varying identifiers.
pub fn instantiate_controlled(
    name: &str,
    variant: usize,
    const_seed: u64,
    ident_seed: u64,
    input_seed: u64,
) -> TemplateInstance {
    let mut crng = ChaCha8Rng::seed_from_u64(const_seed);
    let mut irng = ChaCha8Rng::seed_from_u64(ident_seed);
    let mut xrng = ChaCha8Rng::seed_from_u64(input_seed);
    let built = match name {
        "speedTicket" => speed_ticket(variant, &mut crng, &mut irng, &mut xrng),
        "ticketPrice" => ticket_price(variant, &mut crng, &mut irng, &mut xrng),
        "countPairs" => count_pairs(variant, &mut crng, &mut irng, &mut xrng),
        "sumSkip" => sum_skip(variant, &mut crng, &mut irng, &mut xrng),
        "canSplit" => can_split(variant, &mut crng, &mut irng, &mut xrng),
        "findFirst" => find_first(variant, &mut crng, &mut irng, &mut xrng),
        other => panic!("unknown template `{other}`"),
    };
    let expected = built.inputs.iter().map(|i| (built.reference)(i)).collect();
    TemplateInstance {
        source: built.source,
        inputs: built.inputs,
        expected,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("pool is non-empty")
}

fn int(v: &Value) -> i64 {
    match v {
        Value::Int(x) => *x,
        other => panic!("reference expected int, got {other}"),
    }
}

fn boolean(v: &Value) -> bool {
    match v {
        Value::Bool(x) => *x,
        other => panic!("reference expected boolean, got {other}"),
    }
}

fn string(v: &Value) -> String {
    match v {
        Value::Str(x) => x.clone(),
        other => panic!("reference expected String, got {other}"),
    }
}

fn array(v: &Value) -> Vec<i64> {
    match v {
        Value::IntArr(x) => x.clone(),
        other => panic!("reference expected int[], got {other}"),
    }
}

fn rand_array(rng: &mut ChaCha8Rng, len: usize, lo: i64, hi: i64) -> Vec<i64> {
    (0..len).map(|_| rng.gen_range(lo..=hi)).collect()
}

// --- speedTicket: 0 / small / big ticket from a speed and a birthday bonus

fn speed_ticket(variant: usize, crng: &mut ChaCha8Rng, irng: &mut ChaCha8Rng, xrng: &mut ChaCha8Rng) -> Built {
    let limit = *[55i64, 60, 65].choose(crng).unwrap();
    let gap = *[15i64, 20, 25].choose(crng).unwrap();
    let bonus = 5i64;

    let m = pick(irng, &["caughtSpeeding", "speedTicket", "ticketFor", "checkSpeed"]);
    let spd = pick(irng, &["speed", "velocity", "spd", "pace"]);
    let bday = pick(irng, &["isBirthday", "birthday", "onBirthday"]);
    let lim = pick(irng, &["limit", "cap", "allowed"]);
    let bon = pick(irng, &["bonus", "grace", "slack"]);
    let res = pick(irng, &["result", "ticket", "level"]);

    let source = match variant {
        0 => format!(
            "int {m}(int {spd}, boolean {bday}) {{\n    int {lim} = {limit};\n    if ({bday}) {{\n        {lim} = {lim} + {bonus};\n    }}\n    if ({spd} <= {lim}) {{\n        return 0;\n    }}\n    if ({spd} <= {lim} + {gap}) {{\n        return 1;\n    }}\n    return 2;\n}}\n"
        ),
        _ => format!(
            "int {m}(int {spd}, boolean {bday}) {{\n    int {lim} = {limit};\n    int {bon} = {bonus};\n    if ({bday}) {{\n        {lim} = {lim} + {bon};\n    }}\n    int {res} = 2;\n    if ({spd} <= {lim}) {{\n        {res} = 0;\n    }} else {{\n        if ({spd} <= {lim} + {gap}) {{\n            {res} = 1;\n        }} else {{\n            {res} = 2;\n        }}\n    }}\n    return {res};\n}}\n"
        ),
    };

    let reference: Reference = Box::new(move |args| {
        let speed = int(&args[0]);
        let birthday = boolean(&args[1]);
        let lim = limit + if birthday { bonus } else { 0 };
        Value::Int(if speed <= lim {
            0
        } else if speed <= lim + gap {
            1
        } else {
            2
        })
    });

    let mut inputs = Vec::new();
    for s in [
        limit - 1,
        limit,
        limit + 1,
        limit + bonus,
        limit + bonus + 1,
        limit + gap,
        limit + gap + 1,
        limit + bonus + gap,
        limit + bonus + gap + 1,
    ] {
        inputs.push(vec![Value::Int(s), Value::Bool(inputs.len() % 2 == 0)]);
    }
    for _ in 0..11 {
        inputs.push(vec![
            Value::Int(xrng.gen_range(0..=120)),
            Value::Bool(xrng.gen_bool(0.5)),
        ]);
    }
    Built {
        source,
        reference,
        inputs,
    }
}

// --- ticketPrice: arithmetic pricing with weekend bump and child discount

fn ticket_price(variant: usize, crng: &mut ChaCha8Rng, irng: &mut ChaCha8Rng, xrng: &mut ChaCha8Rng) -> Built {
    let base = *[8i64, 10, 12].choose(crng).unwrap();
    let extra = *[3i64, 4].choose(crng).unwrap();
    let mult = *[2i64, 3].choose(crng).unwrap();
    let bump = *[5i64, 6].choose(crng).unwrap();
    let kid_age = *[12i64, 13].choose(crng).unwrap();

    let m = pick(irng, &["ticketPrice", "admission", "fareFor", "priceOf"]);
    let day = pick(irng, &["day", "dayNum", "weekday"]);
    let age = pick(irng, &["age", "years", "visitorAge"]);
    let bas = pick(irng, &["base", "floor", "start"]);
    let ext = pick(irng, &["extra", "fee", "addon"]);
    let prc = pick(irng, &["price", "total", "cost"]);
    let tmp = pick(irng, &["sum", "partial", "core"]);

    let source = match variant {
        0 => format!(
            "int {m}(int {day}, int {age}) {{\n    int {bas} = {base};\n    int {ext} = {extra};\n    int {prc} = ({bas} + {ext}) * {mult};\n    if ({day} % 7 == 0 || {day} % 7 == 6) {{\n        {prc} = {prc} + {bump};\n    }}\n    if ({age} < {kid_age}) {{\n        {prc} = {prc} / 2;\n    }}\n    return {prc};\n}}\n"
        ),
        _ => format!(
            "int {m}(int {day}, int {age}) {{\n    int {bas} = {base};\n    int {ext} = {extra};\n    int {tmp} = {bas} + {ext};\n    int {prc} = {tmp} * {mult};\n    if ({day} % 7 == 0 || {day} % 7 == 6) {{\n        {prc} = {prc} + {bump};\n    }}\n    if ({age} < {kid_age}) {{\n        {prc} = {prc} / 2;\n    }}\n    return {prc};\n}}\n"
        ),
    };

    let reference: Reference = Box::new(move |args| {
        let day = int(&args[0]);
        let age = int(&args[1]);
        let mut price = (base + extra) * mult;
        if day % 7 == 0 || day % 7 == 6 {
            price += bump;
        }
        if age < kid_age {
            price /= 2;
        }
        Value::Int(price)
    });

    let mut inputs = Vec::new();
    for (d, a) in [
        (0, kid_age - 1),
        (6, kid_age),
        (7, kid_age + 1),
        (13, 30),
        (14, 8),
        (3, kid_age),
    ] {
        inputs.push(vec![Value::Int(d), Value::Int(a)]);
    }
    for _ in 0..14 {
        inputs.push(vec![
            Value::Int(xrng.gen_range(0..=28)),
            Value::Int(xrng.gen_range(0..=70)),
        ]);
    }
    Built {
        source,
        reference,
        inputs,
    }
}

// --- countPairs: occurrences of a two-character pattern in a string

fn count_pairs(variant: usize, crng: &mut ChaCha8Rng, irng: &mut ChaCha8Rng, xrng: &mut ChaCha8Rng) -> Built {
    let pattern = *["ab", "ba", "ca", "bc"].choose(crng).unwrap();

    let m = pick(irng, &["countPairs", "countPattern", "hits", "pairCount"]);
    let txt = pick(irng, &["text", "str", "input", "word"]);
    let cnt = pick(irng, &["count", "total", "found"]);
    let idx = pick(irng, &["i", "pos", "cursor"]);

    let (p0, p1) = (&pattern[0..1], &pattern[1..2]);
    let source = match variant {
        0 => format!(
            "int {m}(String {txt}) {{\n    int {cnt} = 0;\n    for (int {idx} = 0; {idx} < length({txt}); {idx} = {idx} + 1) {{\n        if ({idx} + 2 <= length({txt}) && equals(substring({txt}, {idx}, {idx} + 2), \"{pattern}\")) {{\n            {cnt} = {cnt} + 1;\n        }}\n    }}\n    return {cnt};\n}}\n"
        ),
        _ => format!(
            "int {m}(String {txt}) {{\n    int {cnt} = 0;\n    int {idx} = 0;\n    while ({idx} + 1 < length({txt})) {{\n        if (equals(charAt({txt}, {idx}), \"{p0}\") && equals(charAt({txt}, {idx} + 1), \"{p1}\")) {{\n            {cnt} = {cnt} + 1;\n        }}\n        {idx} = {idx} + 1;\n    }}\n    return {cnt};\n}}\n"
        ),
    };

    let pat = pattern.to_string();
    let reference: Reference = Box::new(move |args| {
        let text = string(&args[0]);
        let bytes = text.as_bytes();
        let mut count = 0i64;
        for i in 0..bytes.len().saturating_sub(1) {
            if &text[i..i + 2] == pat {
                count += 1;
            }
        }
        Value::Int(count)
    });

    let mut inputs = vec![
        vec![Value::Str(String::new())],
        vec![Value::Str(pattern.to_string())],
        vec![Value::Str(format!("{pattern}{pattern}"))],
        vec![Value::Str(pattern.chars().rev().collect())],
        vec![Value::Str("a".to_string())],
    ];
    let alphabet = ['a', 'b', 'c'];
    for _ in 0..15 {
        let len = xrng.gen_range(0..=10);
        let s: String = (0..len)
            .map(|_| *alphabet.choose(xrng).unwrap())
            .collect();
        inputs.push(vec![Value::Str(s)]);
    }
    Built {
        source,
        reference,
        inputs,
    }
}

// --- sumSkip: array sum skipping a sentinel and the element right after it

fn sum_skip(variant: usize, crng: &mut ChaCha8Rng, irng: &mut ChaCha8Rng, xrng: &mut ChaCha8Rng) -> Built {
    let sentinel = *[13i64, 7, 9].choose(crng).unwrap();

    let m = pick(irng, &["sumSkip", "sumWithout", "safeSum", "tally"]);
    let xs = pick(irng, &["nums", "values", "xs", "items"]);
    let tot = pick(irng, &["total", "sum", "acc"]);
    let idx = pick(irng, &["i", "pos", "k"]);
    let len_v = pick(irng, &["n", "size", "count"]);

    let source = match variant {
        0 => format!(
            "int {m}(int[] {xs}) {{\n    int {tot} = 0;\n    int {idx} = 0;\n    while ({idx} < length({xs})) {{\n        if ({xs}[{idx}] == {sentinel}) {{\n            {idx} = {idx} + 2;\n        }} else {{\n            {tot} = {tot} + {xs}[{idx}];\n            {idx} = {idx} + 1;\n        }}\n    }}\n    return {tot};\n}}\n"
        ),
        _ => format!(
            "int {m}(int[] {xs}) {{\n    int {tot} = 0;\n    int {len_v} = length({xs});\n    for (int {idx} = 0; {idx} < {len_v}; {idx} = {idx} + 1) {{\n        if ({xs}[{idx}] == {sentinel}) {{\n            {idx} = {idx} + 1;\n        }} else {{\n            {tot} = {tot} + {xs}[{idx}];\n        }}\n    }}\n    return {tot};\n}}\n"
        ),
    };

    let reference: Reference = Box::new(move |args| {
        let xs = array(&args[0]);
        let mut total = 0i64;
        let mut i = 0usize;
        while i < xs.len() {
            if xs[i] == sentinel {
                i += 2;
            } else {
                total += xs[i];
                i += 1;
            }
        }
        Value::Int(total)
    });

    let mut inputs = vec![
        vec![Value::IntArr(vec![])],
        vec![Value::IntArr(vec![sentinel])],
        vec![Value::IntArr(vec![sentinel, 4])],
        vec![Value::IntArr(vec![1, sentinel])],
        vec![Value::IntArr(vec![1, sentinel, 2, 3])],
        vec![Value::IntArr(vec![sentinel, sentinel, 5])],
    ];
    for _ in 0..14 {
        let len = xrng.gen_range(0..=8);
        let mut arr = rand_array(xrng, len, 0, 20);
        if len > 0 && xrng.gen_bool(0.5) {
            let at = xrng.gen_range(0..len);
            arr[at] = sentinel;
        }
        inputs.push(vec![Value::IntArr(arr)]);
    }
    Built {
        source,
        reference,
        inputs,
    }
}

// --- canSplit: can a prefix carry exactly half of the array total

fn can_split(variant: usize, _crng: &mut ChaCha8Rng, irng: &mut ChaCha8Rng, xrng: &mut ChaCha8Rng) -> Built {
    let m = pick(irng, &["canSplit", "canBalance", "splitsEven", "balanced"]);
    let xs = pick(irng, &["nums", "arr", "values", "data"]);
    let tot = pick(irng, &["total", "sum", "whole"]);
    let lft = pick(irng, &["left", "prefix", "head"]);
    let pos = pick(irng, &["pos", "j", "cut"]);
    let idx = pick(irng, &["i", "k", "scan"]);
    let len_v = pick(irng, &["n", "size", "len"]);
    let fnd = pick(irng, &["found", "happy", "matched"]);

    let source = match variant {
        0 => format!(
            "boolean {m}(int[] {xs}) {{\n    int {tot} = 0;\n    for (int {idx} = 0; {idx} < length({xs}); {idx} = {idx} + 1) {{\n        {tot} = {tot} + {xs}[{idx}];\n    }}\n    if ({tot} % 2 != 0) {{\n        return false;\n    }}\n    int {lft} = 0;\n    int {pos} = 0;\n    while ({pos} < length({xs})) {{\n        {lft} = {lft} + {xs}[{pos}];\n        if ({lft} * 2 == {tot}) {{\n            return true;\n        }}\n        {pos} = {pos} + 1;\n    }}\n    return false;\n}}\n"
        ),
        _ => format!(
            "boolean {m}(int[] {xs}) {{\n    int {tot} = 0;\n    int {len_v} = length({xs});\n    for (int {idx} = 0; {idx} < {len_v}; {idx} = {idx} + 1) {{\n        {tot} = {tot} + {xs}[{idx}];\n    }}\n    boolean {fnd} = false;\n    int {lft} = 0;\n    int {pos} = 0;\n    while ({pos} < {len_v} && {fnd} == false) {{\n        {lft} = {lft} + {xs}[{pos}];\n        if ({lft} * 2 == {tot}) {{\n            {fnd} = true;\n        }}\n        {pos} = {pos} + 1;\n    }}\n    if ({tot} % 2 != 0) {{\n        {fnd} = false;\n    }}\n    return {fnd};\n}}\n"
        ),
    };

    let reference: Reference = Box::new(move |args| {
        let xs = array(&args[0]);
        let total: i64 = xs.iter().sum();
        if total % 2 != 0 {
            return Value::Bool(false);
        }
        let mut left = 0i64;
        for x in &xs {
            left += x;
            if left * 2 == total {
                return Value::Bool(true);
            }
        }
        Value::Bool(false)
    });

    let mut inputs = vec![
        vec![Value::IntArr(vec![])],
        vec![Value::IntArr(vec![2, 2])],
        vec![Value::IntArr(vec![1, 1, 1, 2, 1])],
        vec![Value::IntArr(vec![2, 1, 1])],
        vec![Value::IntArr(vec![3])],
        vec![Value::IntArr(vec![1, 2])],
        vec![Value::IntArr(vec![10, 10])],
    ];
    for _ in 0..13 {
        let len = xrng.gen_range(0..=8);
        inputs.push(vec![Value::IntArr(rand_array(xrng, len, 0, 9))]);
    }
    Built {
        source,
        reference,
        inputs,
    }
}

// --- findFirst: index of the first occurrence of a target, or -1

fn find_first(variant: usize, _crng: &mut ChaCha8Rng, irng: &mut ChaCha8Rng, xrng: &mut ChaCha8Rng) -> Built {
    let m = pick(irng, &["findFirst", "indexOf", "locate", "firstAt"]);
    let xs = pick(irng, &["xs", "nums", "haystack", "items"]);
    let tgt = pick(irng, &["target", "needle", "wanted"]);
    let idx = pick(irng, &["i", "pos", "at"]);
    let done = pick(irng, &["done", "stop", "finished"]);

    let source = match variant {
        0 => format!(
            "int {m}(int[] {xs}, int {tgt}) {{\n    int {idx} = 0;\n    while ({idx} < length({xs}) && {xs}[{idx}] != {tgt}) {{\n        {idx} = {idx} + 1;\n    }}\n    if ({idx} == length({xs})) {{\n        return -1;\n    }}\n    return {idx};\n}}\n"
        ),
        _ => format!(
            "int {m}(int[] {xs}, int {tgt}) {{\n    int {idx} = 0;\n    boolean {done} = false;\n    while ({done} == false) {{\n        if ({idx} >= length({xs}) || {xs}[{idx}] == {tgt}) {{\n            {done} = true;\n        }} else {{\n            {idx} = {idx} + 1;\n        }}\n    }}\n    if ({idx} >= length({xs})) {{\n        return -1;\n    }}\n    return {idx};\n}}\n"
        ),
    };

    let reference: Reference = Box::new(move |args| {
        let xs = array(&args[0]);
        let target = int(&args[1]);
        Value::Int(
            xs.iter()
                .position(|&x| x == target)
                .map(|p| p as i64)
                .unwrap_or(-1),
        )
    });

    let mut inputs = vec![
        vec![Value::IntArr(vec![]), Value::Int(4)],
        vec![Value::IntArr(vec![4]), Value::Int(4)],
        vec![Value::IntArr(vec![1, 2, 3]), Value::Int(9)],
        vec![Value::IntArr(vec![5, 6, 7]), Value::Int(7)],
        vec![Value::IntArr(vec![8, 8]), Value::Int(8)],
    ];
    for _ in 0..15 {
        let len = xrng.gen_range(0..=8);
        let arr = rand_array(xrng, len, 0, 9);
        let target = xrng.gen_range(0..=9);
        inputs.push(vec![Value::IntArr(arr), Value::Int(target)]);
    }
    Built {
        source,
        reference,
        inputs,
    }
}
