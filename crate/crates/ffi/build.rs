use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml"))
        .expect("cbindgen.toml must parse");
    match cbindgen::generate_with_config(&crate_dir, config) {
        Ok(writer) => {
            writer.write_to_file(crate_dir.join("include").join("cotrade.h"));
        }
        Err(e) => {
            // Header generation failing should not break `cargo build` for
            // consumers without the toolchain; surface the cause instead.
            println!("cargo:warning=cbindgen failed: {e}");
        }
    }
}
