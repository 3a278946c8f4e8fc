fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let config = cbindgen::Config::from_file("cbindgen.toml")
        .expect("cbindgen.toml is readable");
    cbindgen::generate_with_config(&crate_dir, config)
        .expect("header generation succeeds")
        .write_to_file(std::path::Path::new(&crate_dir).join("include/dcfds.h"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
