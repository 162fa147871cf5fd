use std::collections::BTreeMap;
use std::fmt::Write;

use bevtrack::bev::{BevGrid, FeatureMap};
use bevtrack::metrics::GtRecord;
use bevtrack::tracker::TrackRecord;

/// Pixels per meter in SVG output.
const SVG_SCALE: f64 = 20.0;

/// Binary 8-bit PGM of one channel, min-max normalized to 0..=255. A
/// constant channel maps to mid gray.
pub fn pgm(map: &FeatureMap, channel: usize) -> Result<Vec<u8>, String> {
    if channel >= map.channels() {
        return Err(format!("channel {channel} out of range, map has {}", map.channels()));
    }
    let data = map.channel(channel);
    if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
        return Err(format!("non-finite value {bad} in channel {channel}"));
    }
    let (lo, hi) = data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = f64::from(hi) - f64::from(lo);
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(data.iter().map(|&v| {
        if span > 0.0 {
            ((f64::from(v) - f64::from(lo)) / span * 255.0).round() as u8
        } else {
            128
        }
    }));
    Ok(out)
}

/// Stable color for a track id: golden-ratio hue steps keep consecutive ids
/// apart.
pub fn id_color(id: u64) -> String {
    let hue = (id as f64 * 0.618_033_988_749_895).fract() * 360.0;
    let (s, l) = (0.65, 0.45);
    let c = (1.0 - (2.0 * l - 1.0_f64).abs()) * s;
    let x = c * (1.0 - ((hue / 60.0) % 2.0 - 1.0).abs());
    let m = l - c / 2.0;
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let byte = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

/// Top view in world meters: grid outline, ground truth as small circles and
/// one polyline per track id in frame order.
pub fn svg(grid: &BevGrid, gt: &[GtRecord], tracks: &[TrackRecord]) -> String {
    let (w, h) = grid.extent();
    let px = |x: f64, y: f64| ((x - grid.origin.0) * SVG_SCALE, (y - grid.origin.1) * SVG_SCALE);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        w * SVG_SCALE,
        h * SVG_SCALE,
        w * SVG_SCALE,
        h * SVG_SCALE
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{:.2}" height="{:.2}" fill="white" stroke="black" stroke-width="1"/>"#, w * SVG_SCALE, h * SVG_SCALE);
    for g in gt {
        let (x, y) = px(g.x, g.y);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="none" stroke="gray"/>"#);
    }
    let mut by_id: BTreeMap<u64, Vec<&TrackRecord>> = BTreeMap::new();
    for t in tracks {
        by_id.entry(t.id).or_default().push(t);
    }
    for (id, mut pts) in by_id {
        pts.sort_by_key(|t| t.frame);
        let points: Vec<String> = pts
            .iter()
            .map(|t| {
                let (x, y) = px(t.x, t.y);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-id="{id}" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            points.join(" "),
            id_color(id)
        );
    }
    s.push_str("</svg>\n");
    s
}
