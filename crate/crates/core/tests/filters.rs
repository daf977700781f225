use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinflow_core::filters::{stc_cut_trail, stc_filter, trail_filter, FilterConfig};
use spinflow_core::{Event, EventStream, Polarity, SensorGeometry};

// Reference filters written from the definitions, scanning each event's
// full pixel history instead of keeping per-pixel state.

fn same_pixel(a: &Event, b: &Event) -> bool {
    a.x == b.x && a.y == b.y
}

fn reference_stc(events: &[Event], threshold: u64) -> Vec<Event> {
    let mut out = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let prev = events[..i].iter().rev().find(|p| same_pixel(p, e));
        if let Some(p) = prev {
            if p.polarity == e.polarity && e.t - p.t <= threshold {
                out.push(*e);
            }
        }
    }
    out
}

fn reference_trail(events: &[Event], threshold: u64) -> Vec<Event> {
    let mut out: Vec<Event> = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let prev = events[..i].iter().rev().find(|p| same_pixel(p, e));
        let last_kept = out.iter().rev().find(|p| same_pixel(p, e));
        let keep = match (prev, last_kept) {
            (None, _) => true,
            (Some(p), _) if p.polarity != e.polarity => true,
            (Some(_), None) => true,
            (Some(_), Some(k)) => k.polarity != e.polarity || e.t - k.t > threshold,
        };
        if keep {
            out.push(*e);
        }
    }
    out
}

fn random_stream(rng: &mut ChaCha8Rng) -> (EventStream, u64) {
    let w = rng.gen_range(1..=8u16);
    let h = rng.gen_range(1..=8u16);
    let n = rng.gen_range(0..=10_000usize);
    let threshold = rng.gen_range(1..=2_000u64);
    let max_gap = rng.gen_range(1..=200u64);
    let mut t = 0u64;
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        t += rng.gen_range(0..=max_gap);
        let pol = if rng.gen_bool(0.5) { Polarity::On } else { Polarity::Off };
        events.push(Event::new(t, rng.gen_range(0..w), rng.gen_range(0..h), pol));
    }
    let g = SensorGeometry::new(w, h).unwrap();
    (EventStream::new(g, events).unwrap(), threshold)
}

#[test]
fn filters_match_reference_on_random_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (stream, threshold) = random_stream(&mut rng);
        let cfg = FilterConfig::new(threshold).unwrap();
        let ev = stream.events();
        let stc = stc_filter(&stream, cfg);
        assert_eq!(stc.events(), reference_stc(ev, threshold).as_slice());
        let trail = trail_filter(&stream, cfg);
        assert_eq!(trail.events(), reference_trail(ev, threshold).as_slice());
        let both = stc_cut_trail(&stream, cfg);
        assert_eq!(both.events(), reference_trail(stc.events(), threshold).as_slice());
        assert!(both.len() <= stc.len());
    }
}

fn one_pixel(spec: &[(u64, Polarity)]) -> EventStream {
    let g = SensorGeometry::new(4, 4).unwrap();
    EventStream::new(g, spec.iter().map(|&(t, p)| Event::new(t, 1, 2, p)).collect()).unwrap()
}

fn times(s: &EventStream) -> Vec<u64> {
    s.events().iter().map(|e| e.t).collect()
}

#[test]
fn burst_first_event_is_discarded_by_stc() {
    let cfg = FilterConfig::new(500).unwrap();
    let s = one_pixel(&[(0, Polarity::On), (100, Polarity::On), (200, Polarity::On)]);
    assert_eq!(times(&stc_filter(&s, cfg)), vec![100, 200]);
    assert!(stc_filter(&one_pixel(&[(0, Polarity::On)]), cfg).is_empty());
    assert!(stc_filter(&one_pixel(&[(0, Polarity::On), (100, Polarity::Off)]), cfg).is_empty());
}

#[test]
fn burst_first_event_is_kept_by_trail() {
    let cfg = FilterConfig::new(500).unwrap();
    let s = one_pixel(&[(0, Polarity::On), (100, Polarity::On), (200, Polarity::On)]);
    assert_eq!(times(&trail_filter(&s, cfg)), vec![0]);
    assert_eq!(times(&trail_filter(&one_pixel(&[(0, Polarity::On), (600, Polarity::On)]), cfg)), vec![0, 600]);
    assert_eq!(times(&trail_filter(&one_pixel(&[(0, Polarity::On), (100, Polarity::Off)]), cfg)), vec![0, 100]);
}

#[test]
fn one_event_per_burst_survives_stc_cut_trail() {
    let cfg = FilterConfig::new(500).unwrap();
    let s = one_pixel(&[(0, Polarity::On), (100, Polarity::On), (200, Polarity::On), (300, Polarity::On)]);
    assert_eq!(times(&stc_cut_trail(&s, cfg)), vec![100]);
    // Two bursts separated by more than the window.
    let s = one_pixel(&[
        (0, Polarity::On),
        (100, Polarity::On),
        (5_000, Polarity::Off),
        (5_050, Polarity::Off),
        (5_090, Polarity::Off),
    ]);
    assert_eq!(times(&stc_cut_trail(&s, cfg)), vec![100, 5_050]);
    let g = SensorGeometry::new(4, 4).unwrap();
    assert!(stc_cut_trail(&EventStream::empty(g), cfg).is_empty());
}

#[test]
fn sparse_noise_is_removed() {
    let cfg = FilterConfig::new(500).unwrap();
    let g = SensorGeometry::new(16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let events = (0..2_000u64)
        .map(|i| Event::new(i * 10, rng.gen_range(0..16), rng.gen_range(0..16), Polarity::On))
        .collect::<Vec<_>>();
    // Each pixel sees an event every ~2.5 ms on average; keep only those
    // whose same-pixel gaps all exceed the window.
    let mut last = vec![None::<u64>; 256];
    let sparse: Vec<Event> = events
        .into_iter()
        .filter(|e| {
            let i = e.y as usize * 16 + e.x as usize;
            let ok = last[i].map_or(true, |t| e.t - t > 2_000);
            if ok {
                last[i] = Some(e.t);
            }
            ok
        })
        .collect();
    let s = EventStream::new(g, sparse).unwrap();
    assert!(stc_cut_trail(&s, cfg).is_empty());
}

fn arb_stream() -> impl Strategy<Value = (EventStream, u64)> {
    (1u64..3_000, prop::collection::vec((0u64..300, 0u16..5, 0u16..5, any::<bool>()), 0..400)).prop_map(|(thr, raw)| {
        let mut t = 0;
        let events = raw
            .into_iter()
            .map(|(dt, x, y, on)| {
                t += dt;
                Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off })
            })
            .collect();
        (EventStream::new(SensorGeometry::new(5, 5).unwrap(), events).unwrap(), thr)
    })
}

fn is_subsequence(sub: &[Event], full: &[Event]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|e| it.any(|f| f == e))
}

proptest! {
    #[test]
    fn outputs_are_subsequences((stream, thr) in arb_stream()) {
        let cfg = FilterConfig::new(thr).unwrap();
        for out in [stc_filter(&stream, cfg), trail_filter(&stream, cfg), stc_cut_trail(&stream, cfg)] {
            prop_assert!(is_subsequence(out.events(), stream.events()));
        }
    }

    #[test]
    fn chain_equals_composition((stream, thr) in arb_stream()) {
        let cfg = FilterConfig::new(thr).unwrap();
        let stc = stc_filter(&stream, cfg);
        let chained = stc_cut_trail(&stream, cfg);
        let composed = trail_filter(&stc, cfg);
        prop_assert_eq!(chained.events(), composed.events());
        prop_assert!(chained.len() <= stc.len());
    }
}
