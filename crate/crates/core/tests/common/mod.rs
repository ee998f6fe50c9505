#![allow(dead_code)]

pub mod harness;
pub mod server;

use annotate_core::geometry::{Point, Shape};
use annotate_core::model::{
    Anchor, AttributeId, AttributeSpec, EntryDraft, FileId, FileSpec, InputType, Media, Project, Value,
};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

const WORDS: &[&str] = &[
    "pilot", "co-pilot", "Sherlock", "John", "a,b", "say \"hi\"", "line\nbreak", "naïve", "面", " padded ", "",
    "{\"json\":1}", "|",
];

pub fn word(rng: &mut StdRng) -> String {
    let w = WORDS.choose(rng).unwrap();
    if rng.random_bool(0.3) {
        format!("{w}{}", rng.random_range(0..1000))
    } else {
        (*w).to_owned()
    }
}

/// A finite coordinate with a full-precision mantissa most of the time.
pub fn coord(rng: &mut StdRng) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(0..2000) as f64 / 10.0,
        1 => rng.random::<f64>() * 4000.0 - 1000.0,
        2 => rng.random::<f64>() * 1e-3,
        _ => rng.random_range(0..640) as f64,
    }
}

pub fn positive(rng: &mut StdRng) -> f64 {
    match rng.random_range(0..3) {
        0 => rng.random_range(1..400) as f64,
        1 => rng.random::<f64>() * 500.0 + 1e-3,
        _ => rng.random_range(1..1000) as f64 / 10.0,
    }
}

/// Star-shaped simple polygon around (cx, cy): sorted angles, radii in
/// [rmin, rmax].
pub fn star_polygon(rng: &mut StdRng, n: usize, cx: f64, cy: f64, rmin: f64, rmax: f64) -> Vec<Point> {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    angles
        .iter()
        .map(|a| {
            let r = rng.random_range(rmin..=rmax);
            Point::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

pub fn random_shape(rng: &mut StdRng) -> Shape {
    match rng.random_range(0..6) {
        0 => Shape::Rect {
            x: coord(rng),
            y: coord(rng),
            w: positive(rng),
            h: positive(rng),
        },
        1 => Shape::Circle {
            cx: coord(rng),
            cy: coord(rng),
            r: positive(rng),
        },
        2 => Shape::Ellipse {
            cx: coord(rng),
            cy: coord(rng),
            rx: positive(rng),
            ry: positive(rng),
        },
        3 => Shape::Point {
            x: coord(rng),
            y: coord(rng),
        },
        4 => loop {
            let n = rng.random_range(3..9);
            let (cx, cy) = (coord(rng), coord(rng));
            let v = star_polygon(rng, n, cx, cy, 1.0, 50.0);
            if v.len() >= 3 {
                break Shape::Polygon { vertices: v };
            }
        },
        _ => {
            let n = rng.random_range(2..6);
            let vertices = (0..n).map(|i| Point::new(i as f64 * 7.5 + coord(rng), coord(rng))).collect();
            Shape::Polyline { vertices }
        }
    }
}

fn random_value(rng: &mut StdRng, p: &Project, aid: &AttributeId) -> Value {
    let attr = p.attribute(aid.as_str()).unwrap();
    let ids: Vec<&String> = attr.options.keys().collect();
    match attr.input {
        InputType::Text => Value::Text(word(rng)),
        InputType::Checkbox => Value::set(ids.iter().filter(|_| rng.random_bool(0.5)).map(|s| s.as_str())),
        _ => Value::Text((*ids.choose(rng).unwrap()).clone()),
    }
}

/// A valid project with every shape kind, media type, anchor and input type
/// showing up across seeds, plus deletions so ids are not contiguous.
pub fn random_project(rng: &mut StdRng) -> Project {
    let mut p = Project::with_pid(format!("p{}", rng.random::<u32>()), &format!("project {}", word(rng))).unwrap();
    let anchors = [Anchor::File, Anchor::SpatialRegion, Anchor::TemporalSegment];
    let inputs = [
        InputType::Text,
        InputType::Checkbox,
        InputType::Radio,
        InputType::Dropdown,
        InputType::Image,
    ];
    for i in 0..rng.random_range(0..7) {
        let input = *inputs.choose(rng).unwrap();
        let mut spec = AttributeSpec::new(format!("{} {i}", word(rng).trim()), *anchors.choose(rng).unwrap(), input);
        if input.uses_options() {
            for k in 1..=rng.random_range(1..4) {
                spec = spec.option(k.to_string(), word(rng));
            }
        }
        p.add_attribute(spec).unwrap();
        if rng.random_bool(0.3) {
            let aid = p.attributes().keys().last().unwrap().clone();
            let v = random_value(rng, &p, &aid);
            // re-adding with a default would duplicate the name; rebuild instead
            let attr = p.attribute(aid.as_str()).unwrap().clone();
            let mut spec = AttributeSpec::new(format!("{} default", attr.name), attr.anchor, attr.input);
            for (id, label) in &attr.options {
                spec = spec.option(id.clone(), label.clone());
            }
            p.add_attribute(spec.with_default(v)).unwrap();
        }
    }
    let mut files: Vec<(FileId, Media)> = Vec::new();
    for i in 0..rng.random_range(0..5) {
        let media = *[Media::Image, Media::Audio, Media::Video].choose(rng).unwrap();
        let mut spec = FileSpec::new(format!("media/{i}_{}.{}", rng.random::<u16>(), media.as_str()), media);
        if media != Media::Audio && rng.random_bool(0.5) {
            spec = spec.dims(rng.random_range(1..4000), rng.random_range(1..4000));
        }
        if media != Media::Image && rng.random_bool(0.5) {
            spec = spec.duration(positive(rng) + 1000.0);
        }
        files.push((p.add_file_with(spec).unwrap(), media));
    }
    if files.is_empty() {
        return p;
    }
    for _ in 0..rng.random_range(0..25) {
        let (fid, media) = files.choose(rng).unwrap().clone();
        let mut d = EntryDraft::new(fid);
        let kind = rng.random_range(0..3);
        match (kind, media) {
            (1, Media::Image) | (1, Media::Video) => {
                d = d.region(random_shape(rng));
                if media == Media::Video && rng.random_bool(0.6) {
                    d = d.frame(rng.random_range(0..10_000) as f64 / 25.0);
                }
            }
            (2, Media::Audio) | (2, Media::Video) => {
                let a = rng.random_range(0..6000) as f64 / 10.0;
                d = d.segment(a, a + positive(rng));
            }
            _ => {}
        }
        let anchor = d.anchor();
        let aids: Vec<AttributeId> = p
            .attributes()
            .values()
            .filter(|a| a.anchor == anchor)
            .map(|a| a.aid.clone())
            .collect();
        for aid in aids {
            if rng.random_bool(0.7) {
                let v = random_value(rng, &p, &aid);
                d = d.value(&aid, v);
            }
        }
        p.insert_metadata(d).unwrap();
    }
    let mids: Vec<_> = p.metadata().keys().cloned().collect();
    for mid in mids {
        if rng.random_bool(0.1) {
            p.delete_metadata(&mid).unwrap();
        }
    }
    p
}

/// Video with `n` consecutive face detections of one track, plus the two
/// review attributes used in grid review.
pub struct FaceTrack {
    pub project: Project,
    pub track_id: AttributeId,
    pub name: AttributeId,
    pub is_good_track: AttributeId,
}

pub fn face_track(n: usize) -> FaceTrack {
    let mut p = Project::with_pid("sherlock", "face tracks").unwrap();
    let track_id = p
        .add_attribute(AttributeSpec::new("track_id", Anchor::SpatialRegion, InputType::Text))
        .unwrap();
    let name = p
        .add_attribute(
            AttributeSpec::new("name", Anchor::SpatialRegion, InputType::Dropdown)
                .option("1", "Sherlock")
                .option("2", "John"),
        )
        .unwrap();
    let is_good_track = p
        .add_attribute(
            AttributeSpec::new("is_good_track", Anchor::SpatialRegion, InputType::Radio)
                .option("1", "Yes")
                .option("2", "No"),
        )
        .unwrap();
    let video = p
        .add_file_with(FileSpec::new("sherlock_s01e01.mp4", Media::Video).dims(1280, 720).duration(600.0))
        .unwrap();
    for i in 0..n {
        let x = 400.0 + (i as f64 * 0.7).sin() * 20.0;
        p.insert_metadata(
            EntryDraft::new(video.clone())
                .frame(120.0 + i as f64 / 25.0)
                .region(Shape::Rect {
                    x,
                    y: 180.0,
                    w: 96.0,
                    h: 112.0,
                })
                .value(&track_id, Value::text("17")),
        )
        .unwrap();
    }
    FaceTrack {
        project: p,
        track_id,
        name,
        is_good_track,
    }
}

/// One audio file with a pilot segment from 3.1 s to 9.2 s.
pub fn diarisation_fixture() -> (Project, FileId, AttributeId) {
    let mut p = Project::with_pid("cockpit", "cockpit recording").unwrap();
    let speaker = p
        .add_attribute(AttributeSpec::new("speaker", Anchor::TemporalSegment, InputType::Text))
        .unwrap();
    let audio = p
        .add_file_with(FileSpec::new("cockpit.wav", Media::Audio).duration(60.0))
        .unwrap();
    p.insert_metadata(EntryDraft::new(audio.clone()).segment(3.1, 9.2).value(&speaker, Value::text("pilot")))
        .unwrap();
    (p, audio, speaker)
}

/// Independent even-odd ray casting (horizontal ray towards +x).
pub fn even_odd(poly: &[Point], q: Point) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > q.y) != (b.y > q.y) {
            let x_cross = a.x + (q.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if q.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `q` to the polygon outline, computed independently.
pub fn outline_distance(poly: &[Point], q: Point) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((q.x - a.x) * dx + (q.y - a.y) * dy) / len2).clamp(0.0, 1.0)
            };
            ((a.x + t * dx - q.x).powi(2) + (a.y + t * dy - q.y).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}
