use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(dir.join("cbindgen.toml")).expect("cbindgen.toml");
    let header = cbindgen::generate_with_config(&dir, config).expect("header generation");
    let out = dir.join("include").join("hsvt.h");
    std::fs::create_dir_all(out.parent().unwrap()).unwrap();
    // write_to_file leaves the file alone when unchanged
    header.write_to_file(out);
}
