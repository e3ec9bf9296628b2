//! Initial filtering of a raw image pool: perceptual-hash dedup and
//! detection-confidence thresholding.
//!
//! The dHash convention pinned here: the grayscale image is resampled to
//! 9x8 by box-averaging; bit (r, c) is 1 iff the mean of box (r, c) is
//! strictly less than that of box (r, c+1); bits pack row-major into a
//! u64, bit index `r * 8 + c` from the least significant end. Box means
//! are compared as exact integer ratios, so the hash is bit-exact across
//! platforms and invariant to uniform brightness shifts.

use std::collections::BTreeSet;

use crate::bbox::Bbox;
use crate::error::{CoreError, Result};

/// Detection-confidence threshold used by the initial filtering stage.
pub const DEFAULT_TAU: f64 = 0.95;
/// Hamming-distance threshold under which two hashes count as duplicates.
pub const DEFAULT_HAMMING_THRESHOLD: u32 = 6;

const HASH_COLS: usize = 9;
const HASH_ROWS: usize = 8;

/// Grayscale pixel grid, row-major. Values are unit-free; only order
/// matters for hashing.
#[derive(Debug, Clone)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CoreError::InvalidValue(format!(
                "image dimensions {width}x{height} must be positive"
            )));
        }
        if pixels.len() != width * height {
            return Err(CoreError::DimensionMismatch {
                context: "image pixels",
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> u32 {
        self.pixels[y * self.width + x]
    }

    /// Integer-weighted luma: `round((299 R + 587 G + 114 B) / 1000)`.
    pub fn luma(r: u32, g: u32, b: u32) -> u32 {
        (299 * r + 587 * g + 114 * b + 500) / 1000
    }
}

/// 64-bit difference hash of an image, keyed by image id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageHash {
    pub image_id: String,
    pub bits: u64,
}

impl ImageHash {
    pub fn hamming(&self, other: &ImageHash) -> u32 {
        (self.bits ^ other.bits).count_ones()
    }
}

/// Difference hash over a 9x8 box-averaged downsample.
pub fn dhash(image: &GrayImage) -> u64 {
    // (sum, count) per box; means compared as exact rationals. For
    // images narrower than the grid a box degrades to a single pixel,
    // so every box is nonempty: r*H/8 <= H-1 and y0+1 <= H.
    let mut sums = [[0u64; HASH_COLS]; HASH_ROWS];
    let mut counts = [[0u64; HASH_COLS]; HASH_ROWS];
    for r in 0..HASH_ROWS {
        let y0 = r * image.height / HASH_ROWS;
        let y1 = ((r + 1) * image.height / HASH_ROWS).max(y0 + 1);
        for c in 0..HASH_COLS {
            let x0 = c * image.width / HASH_COLS;
            let x1 = ((c + 1) * image.width / HASH_COLS).max(x0 + 1);
            let mut sum = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += u64::from(image.pixel(x, y));
                }
            }
            sums[r][c] = sum;
            counts[r][c] = ((y1 - y0) * (x1 - x0)) as u64;
        }
    }

    let mut bits = 0u64;
    for r in 0..HASH_ROWS {
        for c in 0..HASH_COLS - 1 {
            // mean(r,c) < mean(r,c+1)  <=>  sum_l * count_r < sum_r * count_l
            let lhs = u128::from(sums[r][c]) * u128::from(counts[r][c + 1]);
            let rhs = u128::from(sums[r][c + 1]) * u128::from(counts[r][c]);
            if lhs < rhs {
                bits |= 1u64 << (r * 8 + c);
            }
        }
    }
    bits
}

/// Greedy near-duplicate removal in ascending image-id order: an image
/// is dropped when it lies within `hamming_threshold` of an already
/// retained one. Returns the retained ids.
pub fn dedup(hashes: &[ImageHash], hamming_threshold: u32) -> Result<BTreeSet<String>> {
    if hamming_threshold > 64 {
        return Err(CoreError::InvalidValue(format!(
            "hamming threshold {hamming_threshold} exceeds 64"
        )));
    }
    let mut sorted: Vec<&ImageHash> = hashes.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    for pair in sorted.windows(2) {
        if pair[0].image_id == pair[1].image_id {
            return Err(CoreError::InvalidValue(format!(
                "duplicate image id '{}' in dedup input",
                pair[0].image_id
            )));
        }
    }

    let mut retained: Vec<&ImageHash> = Vec::new();
    for h in sorted {
        if retained.iter().all(|r| r.hamming(h) > hamming_threshold) {
            retained.push(h);
        }
    }
    Ok(retained.into_iter().map(|h| h.image_id.clone()).collect())
}

/// A detector bounding box with its confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDetection {
    pub image_id: String,
    pub bbox: Bbox,
    pub confidence: f64,
}

impl BoxDetection {
    pub fn new(image_id: String, bbox: Bbox, confidence: f64) -> Result<Self> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(CoreError::InvalidValue(format!(
                "detection confidence {confidence} is outside [0, 1]"
            )));
        }
        Ok(Self {
            image_id,
            bbox,
            confidence,
        })
    }
}

/// Keeps detections with confidence strictly above `tau`.
pub fn filter_detections(detections: &[BoxDetection], tau: f64) -> Result<Vec<BoxDetection>> {
    if !tau.is_finite() || !(0.0..=1.0).contains(&tau) {
        return Err(CoreError::InvalidValue(format!(
            "tau {tau} is outside [0, 1]"
        )));
    }
    Ok(detections
        .iter()
        .filter(|d| d.confidence > tau)
        .cloned()
        .collect())
}

/// Parses plain (ASCII) PGM `P2` or PPM `P3` into a grayscale grid; PPM
/// pixels are converted with the integer luma weights.
pub fn load_pnm(text: &str, path: &str) -> Result<GrayImage> {
    let mut tokens = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        for tok in line.split_whitespace() {
            tokens.push((lineno + 1, tok));
        }
    }
    let mut iter = tokens.into_iter();
    let err = |line: usize, message: String| CoreError::Parse {
        path: path.to_string(),
        line,
        message,
    };

    let (line0, magic) = iter
        .next()
        .ok_or_else(|| err(1, "empty PNM file".into()))?;
    let channels = match magic {
        "P2" => 1,
        "P3" => 3,
        other => {
            return Err(err(
                line0,
                format!("unsupported magic '{other}' (plain P2/P3 only)"),
            ))
        }
    };

    let mut next_u32 = |what: &str| -> Result<(usize, u32)> {
        let (line, tok) = iter
            .next()
            .ok_or_else(|| err(0, format!("missing {what}")))?;
        let v = tok
            .parse::<u32>()
            .map_err(|e| err(line, format!("bad {what} '{tok}': {e}")))?;
        Ok((line, v))
    };

    let (_, width) = next_u32("width")?;
    let (wline, height) = next_u32("height")?;
    if width == 0 || height == 0 {
        return Err(err(wline, format!("zero image dimension {width}x{height}")));
    }
    let (mline, maxval) = next_u32("maxval")?;
    if maxval == 0 || maxval > 65_535 {
        return Err(err(mline, format!("maxval {maxval} out of range [1, 65535]")));
    }

    let n = width as usize * height as usize;
    let mut pixels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut chan = [0u32; 3];
        for c in chan.iter_mut().take(channels) {
            let (line, v) = next_u32("pixel value")?;
            if v > maxval {
                return Err(err(line, format!("pixel value {v} exceeds maxval {maxval}")));
            }
            *c = v;
        }
        pixels.push(if channels == 1 {
            chan[0]
        } else {
            GrayImage::luma(chan[0], chan[1], chan[2])
        });
    }
    if iter.next().is_some() {
        return Err(err(0, "trailing data after pixel raster".into()));
    }
    GrayImage::new(width as usize, height as usize, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image_from_fn(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> u32) -> GrayImage {
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn constant_image_hashes_to_zero() {
        let img = image_from_fn(40, 30, |_, _| 128);
        assert_eq!(dhash(&img), 0);
    }

    #[test]
    fn increasing_ramp_sets_every_bit() {
        let img = image_from_fn(45, 24, |x, _| x as u32);
        assert_eq!(dhash(&img), u64::MAX);
    }

    #[test]
    fn fixed_grid_matches_direct_rule() {
        // A 9x8 input maps one pixel per box, so the hash must equal a
        // direct application of the comparison rule.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let img = image_from_fn(9, 8, |_, _| rng.random_range(0..256));
        let mut expected = 0u64;
        for r in 0..8 {
            for c in 0..8 {
                if img.pixel(c, r) < img.pixel(c + 1, r) {
                    expected |= 1 << (r * 8 + c);
                }
            }
        }
        assert_eq!(dhash(&img), expected);
    }

    #[test]
    fn brightness_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let w = rng.random_range(9..60);
            let h = rng.random_range(8..50);
            let pixels: Vec<u32> = (0..w * h).map(|_| rng.random_range(0..200)).collect();
            let img = GrayImage::new(w, h, pixels.clone()).unwrap();
            let shifted =
                GrayImage::new(w, h, pixels.iter().map(|p| p + 37).collect()).unwrap();
            assert_eq!(dhash(&img), dhash(&shifted));
        }
    }

    #[test]
    fn small_images_hash_without_panic() {
        for (w, h) in [(1, 1), (3, 2), (8, 8), (9, 8), (2, 20)] {
            let img = image_from_fn(w, h, |x, y| (x * 7 + y * 13) as u32);
            let _ = dhash(&img);
        }
    }

    #[test]
    fn dedup_keeps_one_of_identical_pair() {
        let hashes = vec![
            ImageHash { image_id: "img_b".into(), bits: 0xDEAD },
            ImageHash { image_id: "img_a".into(), bits: 0xDEAD },
        ];
        let retained = dedup(&hashes, 0).unwrap();
        assert_eq!(retained.len(), 1);
        // Greedy scan runs in id order, so the smaller id wins.
        assert!(retained.contains("img_a"));
    }

    #[test]
    fn dedup_keeps_all_distinct() {
        let hashes: Vec<ImageHash> = (0..10)
            .map(|i| ImageHash {
                image_id: format!("img_{i:03}"),
                bits: 0xFFu64 << (8 * (i % 8)) | (i as u64),
            })
            .collect();
        let retained = dedup(&hashes, 2).unwrap();
        let mut ok = 0;
        for (i, a) in hashes.iter().enumerate() {
            if hashes[..i].iter().all(|b| b.hamming(a) > 2) {
                ok += 1;
            }
        }
        assert_eq!(retained.len(), ok);
    }

    #[test]
    fn dedup_rejects_duplicate_ids_and_big_thresholds() {
        let hashes = vec![
            ImageHash { image_id: "x".into(), bits: 1 },
            ImageHash { image_id: "x".into(), bits: 2 },
        ];
        assert!(dedup(&hashes, 0).is_err());
        assert!(dedup(&[], 65).is_err());
    }

    #[test]
    fn dedup_matches_exhaustive_oracle_on_adversarial_pool() {
        // 100 hashes in near-duplicate clusters; the oracle recomputes
        // the greedy result from an explicit pairwise distance matrix.
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        let mut hashes = Vec::new();
        let mut centers = Vec::new();
        for i in 0..100 {
            let bits = if i % 4 == 0 || centers.is_empty() {
                let b: u64 = rng.random();
                centers.push(b);
                b
            } else {
                // Flip a few bits of a random earlier center.
                let mut b = centers[rng.random_range(0..centers.len())];
                for _ in 0..rng.random_range(0..8) {
                    b ^= 1u64 << rng.random_range(0..64);
                }
                b
            };
            hashes.push(ImageHash {
                image_id: format!("img_{i:03}"),
                bits,
            });
        }

        let threshold = 6;
        let retained = dedup(&hashes, threshold).unwrap();

        let mut sorted = hashes.clone();
        sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let n = sorted.len();
        let mut dist = vec![vec![0u32; n]; n];
        for i in 0..n {
            for j in 0..n {
                dist[i][j] = (sorted[i].bits ^ sorted[j].bits).count_ones();
            }
        }
        let mut oracle: Vec<usize> = Vec::new();
        for i in 0..n {
            if oracle.iter().all(|&j| dist[i][j] > threshold) {
                oracle.push(i);
            }
        }
        let oracle_ids: BTreeSet<String> =
            oracle.iter().map(|&i| sorted[i].image_id.clone()).collect();
        assert_eq!(retained, oracle_ids);

        // No two retained images within the threshold of one another.
        let kept: Vec<&ImageHash> = sorted
            .iter()
            .filter(|h| retained.contains(&h.image_id))
            .collect();
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                assert!(a.hamming(b) > threshold);
            }
        }
    }

    fn det(id: &str, conf: f64) -> BoxDetection {
        BoxDetection::new(
            id.into(),
            Bbox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            conf,
        )
        .unwrap()
    }

    #[test]
    fn filter_uses_strict_inequality() {
        let dets = vec![det("a", 0.99), det("b", 0.95), det("c", 0.90)];
        let kept = filter_detections(&dets, DEFAULT_TAU).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].image_id, "a");
    }

    #[test]
    fn filter_extremes() {
        let dets = vec![det("a", 0.99), det("b", 0.0), det("c", 0.5)];
        assert_eq!(filter_detections(&dets, 0.0).unwrap().len(), 2);
        assert!(filter_detections(&dets, 1.0).unwrap().is_empty());
        assert!(filter_detections(&dets, 1.5).is_err());
    }

    #[test]
    fn filter_is_monotone_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dets: Vec<BoxDetection> = (0..50)
            .map(|i| det(&format!("img_{i}"), rng.random_range(0.0..1.0)))
            .collect();
        let mut last = usize::MAX;
        for i in 0..=10 {
            let tau = i as f64 / 10.0;
            let kept = filter_detections(&dets, tau).unwrap().len();
            assert!(kept <= last);
            last = kept;
        }
    }

    #[test]
    fn pnm_parsing_grayscale_and_color() {
        let pgm = "P2\n# comment\n3 2 255\n0 10 20\n30 40 50\n";
        let img = load_pnm(pgm, "a.pgm").unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixel(1, 1), 40);

        let ppm = "P3\n1 1\n255\n255 0 0\n";
        let img = load_pnm(ppm, "b.ppm").unwrap();
        // round(0.299 * 255) = 76
        assert_eq!(img.pixel(0, 0), 76);
    }

    #[test]
    fn pnm_errors_are_line_numbered() {
        match load_pnm("P2\n2 2 255\n0 1 2\n", "t.pgm") {
            Err(CoreError::Parse { .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
        match load_pnm("P5\n2 2\n255\n", "t.pgm") {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match load_pnm("P2\n2 1 255\n0 999\n", "t.pgm") {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
