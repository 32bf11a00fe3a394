//! Lays out a frame buffer in scattered host pages, compacts its
//! scatter-gather list, and decodes it back.
//!
//!     cargo run --example scatter_gather

use ultrashare::workload::frame_sg_list;
use ultrashare::{compact_sg, decode_sg, SgElement};

fn main() {
    let page = 4096;
    let mut next = 0x40u64;
    // a 240x180 RGB frame starting 128 bytes into its first page
    let list = frame_sg_list(129_600, 128, page, || {
        next += 3;
        next
    })
    .unwrap();
    println!(
        "{} elements, first {} B, last {} B, {} B total",
        list.len(),
        list.first_length,
        list.last_length,
        list.total_bytes()
    );
    println!(
        "compact form stores {} addresses + 2 lengths instead of {} (address, length) pairs",
        list.len(),
        list.len()
    );
    let elements = decode_sg(&list).unwrap();
    for e in elements.iter().take(3).chain(elements.last()) {
        println!("  {:#014x}  {:>4} B", e.address, e.length);
    }
    assert_eq!(compact_sg(&elements, page).unwrap(), list);

    // only the first and last element may be partial
    let bad = [
        SgElement::new(0, 4096),
        SgElement::new(4096, 100),
        SgElement::new(8192, 4096),
    ];
    println!(
        "\nshort middle element: {}",
        compact_sg(&bad, page).unwrap_err()
    );
}
