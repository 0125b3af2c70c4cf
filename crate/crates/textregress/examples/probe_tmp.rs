fn main() {
    let v: f64 = 0.9233174812724845_f64;
    let s = serde_json::to_string(&v).unwrap();
    let back: f64 = serde_json::from_str(&s).unwrap();
    println!("{v:.17} -> {s} -> {back:.17} equal={}", v == back);
    let v2: f64 = 0.9233174812724844_f64;
    println!("bits {:x} vs {:x}", v.to_bits(), v2.to_bits());
    let s2 = serde_json::to_string(&v2).unwrap();
    let b2: f64 = serde_json::from_str(&s2).unwrap();
    println!("{v2:.17} -> {s2} -> {b2:.17} equal={}", v2 == b2);
}
