//! Regenerates the native-format fixture corpora under `fixtures/`.
//!
//! cargo run -p fedfuse-core --example make_fixtures -- [dir]

use fedfuse_core::data::synthetic::{write_native_fixture, SyntheticProfile};
use fedfuse_core::data::Adapter;

fn main() -> fedfuse_core::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures").to_string());
    for adapter in [Adapter::Ahsd, Adapter::Olid, Adapter::Hasoc, Adapter::HateXplain, Adapter::OffendEs] {
        let profile = SyntheticProfile::for_adapter(adapter)?;
        write_native_fixture(&profile, format!("{dir}/{}", adapter.tag()), 200, 100, 0)?;
    }
    Ok(())
}
