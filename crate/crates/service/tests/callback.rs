//! The render callback, instrumented: no heap traffic while commands flow.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use maemi_core::{PitchMode, Trigger, VoiceConfig};
use maemi_service::{Command, Engine};

struct Counting;

static COUNTING: AtomicBool = AtomicBool::new(false);
static ALLOCATIONS: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        if COUNTING.load(Ordering::Relaxed) {
            ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        }
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

#[test]
fn render_block_does_not_allocate() {
    let mut parts = Engine::build(&VoiceConfig::default(), 3, 4096).unwrap();
    let mut out = vec![0.0f32; parts.engine.block_frames()];
    let script = [
        Command::Gate(true),
        Command::Mode(PitchMode::PitchFollowing),
        Command::Trigger(Trigger::Mae),
        Command::Pitch(440.0),
        Command::Trigger(Trigger::MaeRe),
        Command::Loudness(0.9),
        Command::Trigger(Trigger::Mi),
        Command::Gate(false),
        Command::Gate(true),
        Command::Trigger(Trigger::Mae),
    ];
    ALLOCATIONS.store(0, Ordering::SeqCst);
    let mut peak = 0.0f32;
    for b in 0..600 {
        // Producers run on the network side; keep them outside the count.
        if b % 20 == 0 {
            let command = script[(b / 20) % script.len()];
            for mailbox in &mut parts.mailboxes {
                mailbox.push(command).unwrap();
            }
        }
        COUNTING.store(true, Ordering::SeqCst);
        parts.engine.render_block(&mut out);
        COUNTING.store(false, Ordering::SeqCst);
        peak = out.iter().fold(peak, |m, x| m.max(x.abs()));
        // Draining the tap belongs to the telemetry side.
        while parts.taps.pop().is_ok() {}
    }
    assert!(peak > 0.0);
    assert_eq!(ALLOCATIONS.load(Ordering::SeqCst), 0);
}
