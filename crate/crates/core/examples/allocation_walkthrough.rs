//! Steps the allocation unit by hand: three queues, four accelerators, and
//! a group table that is rewritten halfway through.
//!
//!     cargo run --example allocation_walkthrough

use ultrashare::{
    allocate_step, AccMask, AcceleratorStatus, Command, CommandQueue, GroupTable, SimTime,
};

fn cmd(id: u64, acc_type: u32) -> Command {
    Command {
        command_id: id,
        core_id: 0,
        acc_type,
        rx_lists: vec![],
        tx_lists: vec![],
        submit_time: SimTime::ZERO,
    }
}

fn main() {
    // group 0 -> accs 0,1; group 1 -> acc 2; group 2 -> acc 3
    let mut table = GroupTable::new(
        4,
        vec![
            AccMask::from_indices([0, 1]),
            AccMask::from_indices([2]),
            AccMask::from_indices([3]),
        ],
    )
    .unwrap();
    let mut queues: Vec<_> = (0..3).map(|g| CommandQueue::new(g, 8)).collect();
    for id in 0..3 {
        queues[0].enqueue(cmd(id, 0)).unwrap();
    }
    queues[1].enqueue(cmd(10, 1)).unwrap();
    queues[2].enqueue(cmd(20, 2)).unwrap();

    let mut status = AcceleratorStatus::all_idle(4);
    let mut cursor = 0;
    println!("idle mask {}", status.idle_mask());
    while let Some(a) = allocate_step(&mut status, &table, &mut queues, &mut cursor) {
        println!(
            "queue {} -> command {} on accelerator {}   (cursor now {cursor}, idle {})",
            a.queue,
            a.command.command_id,
            a.acc,
            status.idle_mask()
        );
    }
    println!(
        "queue 0 still holds {} command(s): its accelerators are busy",
        queues[0].len()
    );

    // lend accelerator 3 to group 0 and free it
    table
        .reconfigure(0, AccMask::from_indices([0, 1, 3]))
        .unwrap();
    table.reconfigure(2, AccMask::NONE).unwrap();
    status.set_idle(3);
    println!("\nafter moving accelerator 3 into group 0:");
    while let Some(a) = allocate_step(&mut status, &table, &mut queues, &mut cursor) {
        println!(
            "queue {} -> command {} on accelerator {}",
            a.queue, a.command.command_id, a.acc
        );
    }
}
