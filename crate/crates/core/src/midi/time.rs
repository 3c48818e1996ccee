use super::{TempoEvent, DEFAULT_MICROS_PER_QUARTER};

/// Segments of constant tempo as (start tick, start ms, microseconds per quarter).
fn segments(tempo_events: &[TempoEvent], ppq: u16) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    let per_quarter = 1000.0 * ppq as f64;
    let lead = match tempo_events.first() {
        Some(t) if t.tick == 0 => None,
        _ => Some(TempoEvent { tick: 0, micros_per_quarter: DEFAULT_MICROS_PER_QUARTER }),
    };
    let mut elapsed = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    lead.into_iter().chain(tempo_events.iter().copied()).map(move |ev| {
        let tick = ev.tick as f64;
        if let Some((prev_tick, prev_us)) = prev {
            elapsed += (tick - prev_tick) * prev_us / per_quarter;
        }
        let us = ev.micros_per_quarter as f64;
        prev = Some((tick, us));
        (tick, elapsed, us)
    })
}

fn default_segment() -> (f64, f64, f64) {
    (0.0, 0.0, DEFAULT_MICROS_PER_QUARTER as f64)
}

/// Wall-clock milliseconds at `tick` under a tempo map; 120 BPM applies before the first event.
pub fn render_wallclock(tick: u64, tempo_events: &[TempoEvent], ppq: u16) -> f64 {
    let tick = tick as f64;
    let mut current = default_segment();
    for seg in segments(tempo_events, ppq) {
        if seg.0 > tick {
            break;
        }
        current = seg;
    }
    current.1 + (tick - current.0) * current.2 / (1000.0 * ppq as f64)
}

/// Inverse of [`render_wallclock`], unrounded.
pub fn wallclock_to_tick(ms: f64, tempo_events: &[TempoEvent], ppq: u16) -> f64 {
    let mut current = default_segment();
    for seg in segments(tempo_events, ppq) {
        if seg.1 > ms {
            break;
        }
        current = seg;
    }
    current.0 + (ms - current.1) * (1000.0 * ppq as f64) / current.2
}
