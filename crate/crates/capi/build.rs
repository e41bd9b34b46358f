use std::env;
use std::fs;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let config = cbindgen::Config::from_root_or_default(&crate_dir);
    let bindings = cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("binding generation failed");

    let mut rendered = Vec::new();
    bindings.write(&mut rendered);

    // The header is committed so C consumers never need the Rust toolchain.
    // Rewrite it only when the content changed to keep rebuilds quiet.
    let header = crate_dir.join("include").join("cellsig.h");
    if fs::read(&header).ok().as_deref() != Some(rendered.as_slice()) {
        fs::create_dir_all(header.parent().unwrap()).unwrap();
        fs::write(&header, rendered).unwrap();
    }

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
