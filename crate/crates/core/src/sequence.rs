//! Sequence ingestion and synthesis.
//!
//! On-disk layout follows the common benchmark convention: an `img/`
//! subfolder of lexicographically ordered frames next to a ground-truth
//! text file with one `x,y,w,h` line per frame (top-left convention,
//! comma or tab separated). Synthetic sequences are generated from a
//! [`SynthSpec`] with exact ground truth and seeded noise, and save/load
//! round-trips them byte-exactly.

use crate::error::{CoreError, Result};
use crate::imaging::{BoundingBox, Image};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// An ordered frame list with per-frame ground truth (or a single init box).
#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Image>,
    /// Either one box (init-only) or one per frame.
    pub gt_boxes: Vec<BoundingBox>,
}

impl Sequence {
    /// True when every frame is annotated, enabling evaluation.
    pub fn fully_annotated(&self) -> bool {
        self.gt_boxes.len() == self.frames.len()
    }
}

/// One moving rectangular blob: solid fill with a contrasting inner core so
/// the pattern carries structure, coverage-antialiased at its edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobSpec {
    pub start_center: (f32, f32),
    /// Width and height at the first frame.
    pub size: (f32, f32),
    /// Center displacement per frame, pixels.
    pub velocity: (f32, f32),
    /// Fill color, RGB in [0, 255].
    pub color: [f32; 3],
    /// Per-frame multiplicative side growth; 1.0 = constant size.
    pub zoom: f32,
}

impl BlobSpec {
    pub fn center_at(&self, t: usize) -> (f32, f32) {
        (
            self.start_center.0 + self.velocity.0 * t as f32,
            self.start_center.1 + self.velocity.1 * t as f32,
        )
    }

    pub fn size_at(&self, t: usize) -> (f32, f32) {
        let z = self.zoom.powi(t as i32);
        (self.size.0 * z, self.size.1 * z)
    }

    pub fn box_at(&self, t: usize) -> BoundingBox {
        let (cx, cy) = self.center_at(t);
        let (w, h) = self.size_at(t);
        BoundingBox { cx, cy, w, h }
    }
}

/// Deterministic synthetic sequence description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub background: [f32; 3],
    pub target: BlobSpec,
    pub distractor: Option<BlobSpec>,
    /// Standard deviation of white pixel noise, in [0, 255] units.
    pub noise_sigma: f32,
    pub seed: u64,
}

/// Axis overlap of the pixel cell `[p - 0.5, p + 0.5]` with `[lo, hi]`.
fn coverage_1d(p: f32, lo: f32, hi: f32) -> f32 {
    let a = (p - 0.5).max(lo);
    let b = (p + 0.5).min(hi);
    (b - a).clamp(0.0, 1.0)
}

fn render_blob(frame: &mut Image, blob: &BlobSpec, t: usize) {
    let (cx, cy) = blob.center_at(t);
    let (w, h) = blob.size_at(t);
    let (x_lo, x_hi) = (cx - w / 2.0, cx + w / 2.0);
    let (y_lo, y_hi) = (cy - h / 2.0, cy + h / 2.0);
    // inner core at 55% size, darker shade of the fill color
    let core = 0.55f32;
    let (cx_lo, cx_hi) = (cx - w * core / 2.0, cx + w * core / 2.0);
    let (cy_lo, cy_hi) = (cy - h * core / 2.0, cy + h * core / 2.0);

    let x0 = (x_lo - 1.0).floor().max(0.0) as usize;
    let x1 = ((x_hi + 1.0).ceil() as usize).min(frame.width().saturating_sub(1));
    let y0 = (y_lo - 1.0).floor().max(0.0) as usize;
    let y1 = ((y_hi + 1.0).ceil() as usize).min(frame.height().saturating_sub(1));

    for y in y0..=y1 {
        let cov_y = coverage_1d(y as f32, y_lo, y_hi);
        let core_y = coverage_1d(y as f32, cy_lo, cy_hi);
        if cov_y == 0.0 {
            continue;
        }
        for x in x0..=x1 {
            let cov = cov_y * coverage_1d(x as f32, x_lo, x_hi);
            if cov == 0.0 {
                continue;
            }
            let core_cov = core_y * coverage_1d(x as f32, cx_lo, cx_hi);
            for c in 0..frame.channels() {
                let fill = blob.color[c.min(2)];
                let shaded = fill * (1.0 - 0.45 * (core_cov / cov.max(1e-6)).min(1.0));
                let bg = frame.get(y, x, c);
                frame.set(y, x, c, bg + cov * (shaded - bg));
            }
        }
    }
}

fn blob_inside_frame(blob: &BlobSpec, spec: &SynthSpec) -> bool {
    for t in 0..spec.frame_count {
        let b = blob.box_at(t);
        if b.cx - b.w / 2.0 < 0.0
            || b.cy - b.h / 2.0 < 0.0
            || b.cx + b.w / 2.0 > spec.width as f32
            || b.cy + b.h / 2.0 > spec.height as f32
        {
            return false;
        }
    }
    true
}

/// Render the spec into frames plus exact ground truth. Pixels are rounded
/// to integers after noise so the in-memory sequence matches its PNG
/// round-trip bit for bit.
pub fn synth_sequence(spec: &SynthSpec) -> Result<Sequence> {
    if spec.frame_count == 0 || spec.width == 0 || spec.height == 0 {
        return Err(CoreError::InvalidInput("empty synthetic spec".into()));
    }
    if !blob_inside_frame(&spec.target, spec) {
        return Err(CoreError::InvalidInput(
            "target blob leaves the frame during the motion".into(),
        ));
    }
    if let Some(d) = &spec.distractor {
        if !blob_inside_frame(d, spec) {
            return Err(CoreError::InvalidInput(
                "distractor blob leaves the frame during the motion".into(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut gt = Vec::with_capacity(spec.frame_count);
    for t in 0..spec.frame_count {
        let mut frame = Image::new(spec.height, spec.width, 3);
        for (i, v) in frame.data_mut().iter_mut().enumerate() {
            *v = spec.background[i % 3];
        }
        render_blob(&mut frame, &spec.target, t);
        if let Some(d) = &spec.distractor {
            render_blob(&mut frame, d, t);
        }
        for v in frame.data_mut() {
            if spec.noise_sigma > 0.0 {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v += n as f32 * spec.noise_sigma;
            }
            *v = v.round().clamp(0.0, 255.0);
        }
        frames.push(frame);
        gt.push(spec.target.box_at(t));
    }
    Ok(Sequence {
        name: spec.name.clone(),
        frames,
        gt_boxes: gt,
    })
}

fn parse_gt_line(line: &str, lineno: usize) -> Result<BoundingBox> {
    let fields: Vec<&str> = line
        .split(|c| c == ',' || c == '\t')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if fields.len() != 4 {
        return Err(CoreError::Load(format!(
            "ground-truth line {lineno}: expected 4 fields, got {}",
            fields.len()
        )));
    }
    let mut vals = [0.0f32; 4];
    for (v, f) in vals.iter_mut().zip(&fields) {
        *v = f.parse().map_err(|_| {
            CoreError::Load(format!("ground-truth line {lineno}: non-numeric field '{f}'"))
        })?;
    }
    BoundingBox::from_top_left(vals[0], vals[1], vals[2], vals[3])
        .map_err(|e| CoreError::Load(format!("ground-truth line {lineno}: {e}")))
}

fn decode_image(path: &Path) -> Result<Image> {
    let img = image::open(path)
        .map_err(|e| CoreError::Load(format!("cannot decode {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().iter().map(|&b| b as f32).collect();
    Image::from_data(h, w, 3, data)
}

/// Load a sequence directory: `img/` frames plus `groundtruth_rect.txt`
/// (or `groundtruth.txt`). The annotation must have either one line or one
/// line per frame.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let img_dir = dir.join("img");
    if !img_dir.is_dir() {
        return Err(CoreError::Load(format!(
            "missing image subfolder {}",
            img_dir.display()
        )));
    }
    let mut paths: Vec<_> = std::fs::read_dir(&img_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png") | Some("jpg") | Some("jpeg")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CoreError::Load(format!("no frames in {}", img_dir.display())));
    }

    let gt_path = ["groundtruth_rect.txt", "groundtruth.txt"]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            CoreError::Load(format!("missing ground-truth file in {}", dir.display()))
        })?;
    let gt_text = std::fs::read_to_string(&gt_path)?;
    let mut gt_boxes = Vec::new();
    for (i, line) in gt_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        gt_boxes.push(parse_gt_line(line, i + 1)?);
    }
    if gt_boxes.is_empty() {
        return Err(CoreError::Load(format!("empty ground truth {}", gt_path.display())));
    }
    if gt_boxes.len() != 1 && gt_boxes.len() != paths.len() {
        return Err(CoreError::Load(format!(
            "{} ground-truth lines for {} frames (need 1 or equal)",
            gt_boxes.len(),
            paths.len()
        )));
    }

    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        frames.push(decode_image(p)?);
    }
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    Ok(Sequence {
        name,
        frames,
        gt_boxes,
    })
}

fn encode_image(img: &Image, path: &Path) -> Result<()> {
    let to_u8 = |v: f32| v.round().clamp(0.0, 255.0) as u8;
    match img.channels() {
        3 => {
            let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
            let buf: image::RgbImage =
                image::ImageBuffer::from_raw(img.width() as u32, img.height() as u32, bytes)
                    .expect("buffer size matches dimensions");
            buf.save(path)
                .map_err(|e| CoreError::Load(format!("cannot write {}: {e}", path.display())))
        }
        _ => {
            let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
            let buf: image::GrayImage =
                image::ImageBuffer::from_raw(img.width() as u32, img.height() as u32, bytes)
                    .expect("buffer size matches dimensions");
            buf.save(path)
                .map_err(|e| CoreError::Load(format!("cannot write {}: {e}", path.display())))
        }
    }
}

/// Encode one image as PNG (u8, rounded from the f32 planes).
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    encode_image(img, path)
}

/// Write `dir/img/%04d.png` frames plus `dir/groundtruth_rect.txt` in the
/// exact format `load_sequence` reads back.
pub fn save_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    let img_dir = dir.join("img");
    std::fs::create_dir_all(&img_dir)?;
    for (i, frame) in seq.frames.iter().enumerate() {
        encode_image(frame, &img_dir.join(format!("{:04}.png", i + 1)))?;
    }
    let mut gt = String::new();
    for b in &seq.gt_boxes {
        let (x, y, w, h) = b.to_top_left();
        gt.push_str(&format!("{x},{y},{w},{h}\n"));
    }
    std::fs::write(dir.join("groundtruth_rect.txt"), gt)?;
    Ok(())
}

/// Burn a box outline into a frame (used by the CLI's `--render`).
pub fn draw_box_outline(frame: &mut Image, b: &BoundingBox, color: [f32; 3], thickness: usize) {
    let (x0, y0, w, h) = b.to_top_left();
    let x1 = x0 + w - 1.0;
    let y1 = y0 + h - 1.0;
    let clamp_x = |v: f32| (v.round() as i64).clamp(0, frame.width() as i64 - 1) as usize;
    let clamp_y = |v: f32| (v.round() as i64).clamp(0, frame.height() as i64 - 1) as usize;
    let (xa, xb) = (clamp_x(x0), clamp_x(x1));
    let (ya, yb) = (clamp_y(y0), clamp_y(y1));
    let ch = frame.channels();
    let mut put = |y: usize, x: usize| {
        for c in 0..ch {
            frame.set(y, x, c, color[c.min(2)]);
        }
    };
    for t in 0..thickness {
        for x in xa..=xb {
            put((ya + t).min(yb), x);
            put(yb.saturating_sub(t).max(ya), x);
        }
        for y in ya..=yb {
            put(y, (xa + t).min(xb));
            put(y, xb.saturating_sub(t).max(xa));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic_spec() -> SynthSpec {
        SynthSpec {
            name: "basic".into(),
            width: 200,
            height: 120,
            frame_count: 10,
            background: [30.0, 30.0, 30.0],
            target: BlobSpec {
                start_center: (50.0, 60.0),
                size: (24.0, 24.0),
                velocity: (3.0, 0.0),
                color: [200.0, 80.0, 60.0],
                zoom: 1.0,
            },
            distractor: None,
            noise_sigma: 0.0,
            seed: 9,
        }
    }

    #[test]
    fn ground_truth_follows_motion_exactly() {
        let seq = synth_sequence(&basic_spec()).unwrap();
        assert_eq!(seq.frames.len(), 10);
        assert!(seq.fully_annotated());
        for (t, b) in seq.gt_boxes.iter().enumerate() {
            assert_eq!(b.cx, 50.0 + 3.0 * t as f32);
            assert_eq!(b.cy, 60.0);
            assert_eq!((b.w, b.h), (24.0, 24.0));
        }
    }

    #[test]
    fn zoom_grows_sides_per_frame() {
        let mut spec = basic_spec();
        spec.target.zoom = 1.01;
        spec.target.velocity = (0.0, 0.0);
        let seq = synth_sequence(&spec).unwrap();
        for (t, b) in seq.gt_boxes.iter().enumerate() {
            let want = 24.0 * 1.01f32.powi(t as i32);
            assert!((b.w - want).abs() < 1e-4);
            assert!((b.h - want).abs() < 1e-4);
        }
    }

    #[test]
    fn seeded_synthesis_is_byte_identical() {
        let mut spec = basic_spec();
        spec.noise_sigma = 5.0;
        let a = synth_sequence(&spec).unwrap();
        let b = synth_sequence(&spec).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.data(), fb.data());
        }
        spec.seed += 1;
        let c = synth_sequence(&spec).unwrap();
        assert!(a.frames[0].data() != c.frames[0].data());
    }

    #[test]
    fn blob_leaving_frame_rejected() {
        let mut spec = basic_spec();
        spec.target.velocity = (20.0, 0.0);
        assert!(synth_sequence(&spec).is_err());
    }

    #[test]
    fn blob_pixels_have_blob_color() {
        let seq = synth_sequence(&basic_spec()).unwrap();
        let f = &seq.frames[0];
        // blob edge ring keeps the fill color; center is the darker core
        assert_eq!(f.get(60, 40, 0), 200.0);
        assert!(f.get(60, 50, 0) < 200.0 * 0.6 + 1.0);
        // far background untouched
        assert_eq!(f.get(10, 150, 0), 30.0);
    }

    #[test]
    fn gt_line_parsing_conventions() {
        let b = parse_gt_line("10,20,30,40", 1).unwrap();
        assert_eq!((b.cx, b.cy, b.w, b.h), (24.5, 39.5, 30.0, 40.0));
        let tabbed = parse_gt_line("10\t20\t30\t40", 1).unwrap();
        assert_eq!(&b, &tabbed);
        assert!(parse_gt_line("10,20,30", 1).is_err());
        assert!(parse_gt_line("a,b,c,d", 1).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = basic_spec();
        spec.noise_sigma = 3.0;
        let seq = synth_sequence(&spec).unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.frames.len(), seq.frames.len());
        for (a, b) in seq.frames.iter().zip(&loaded.frames) {
            assert_eq!(a.data(), b.data());
        }
        for (a, b) in seq.gt_boxes.iter().zip(&loaded.gt_boxes) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn init_only_annotation_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let seq = synth_sequence(&basic_spec()).unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        // truncate ground truth to a single line
        let gt_path = dir.path().join("groundtruth_rect.txt");
        let text = std::fs::read_to_string(&gt_path).unwrap();
        let first = text.lines().next().unwrap();
        std::fs::write(&gt_path, format!("{first}\n")).unwrap();
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.gt_boxes.len(), 1);
        assert!(!loaded.fully_annotated());
        // two lines for ten frames is a count mismatch
        std::fs::write(&gt_path, format!("{first}\n{first}\n")).unwrap();
        assert!(load_sequence(dir.path()).is_err());
    }

    #[test]
    fn missing_parts_give_load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_sequence(dir.path()).is_err());
        std::fs::create_dir_all(dir.path().join("img")).unwrap();
        assert!(load_sequence(dir.path()).is_err());
    }
}
