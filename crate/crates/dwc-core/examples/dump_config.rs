fn main() {
    println!("{}", dwc_core::cli::RunConfig::default().to_json_pretty().unwrap());
}
