fn main() {
    let results = kswr::verify::monodomain_checks(&kswr::verify::VerifyOptions::default()).unwrap();
    for r in &results {
        println!("{} {} — {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
}
