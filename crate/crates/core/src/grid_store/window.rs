use std::collections::{BTreeMap, HashSet};

use super::{
    hourly_average, DatasetManifest, Grid, GridError, SequenceSample, Timestamp, FRAMES_PER_HOUR,
    FRAME_MINUTES, HORIZON_HOURS, INPUT_FRAMES,
};

/// Frames from the first input (t-60) to the last target frame (t+170).
const WINDOW_FRAMES: usize = INPUT_FRAMES + HORIZON_HOURS * FRAMES_PER_HOUR;
const LEAD_MINUTES: i64 = INPUT_FRAMES as i64 * FRAME_MINUTES;

/// Counts of candidate windows seen while streaming.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GapReport {
    /// Anchors whose window start is a manifest frame and whose window end
    /// does not run past the last frame.
    pub candidates: usize,
    pub emitted: usize,
    /// Candidates dropped for a missing frame.
    pub gapped: usize,
}

/// Streaming iterator over complete windows of a manifest, in anchor order.
pub struct SampleWindows<'a> {
    manifest: &'a DatasetManifest,
    present: HashSet<Timestamp>,
    by_time: BTreeMap<Timestamp, usize>,
    starts: Vec<Timestamp>,
    next: usize,
    last: Option<Timestamp>,
    cache: BTreeMap<Timestamp, (Grid, Grid)>,
    report: GapReport,
}

/// Stream every sample whose 24 frames (t-60 ... t+170) are all present.
/// Windows with any missing frame are skipped and counted in the
/// [`GapReport`].
pub fn window_samples(manifest: &DatasetManifest) -> SampleWindows<'_> {
    let by_time: BTreeMap<Timestamp, usize> = manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.timestamp, i))
        .collect();
    SampleWindows {
        manifest,
        present: by_time.keys().copied().collect(),
        starts: by_time.keys().copied().collect(),
        last: by_time.keys().next_back().copied(),
        by_time,
        next: 0,
        cache: BTreeMap::new(),
        report: GapReport::default(),
    }
}

impl SampleWindows<'_> {
    pub fn gap_report(&self) -> GapReport {
        self.report
    }

    fn frame(&mut self, ts: Timestamp) -> Result<(Grid, Grid), GridError> {
        if let Some(f) = self.cache.get(&ts) {
            return Ok(f.clone());
        }
        let entry = &self.manifest.entries[self.by_time[&ts]];
        let loaded = self.manifest.load_frame(entry)?;
        self.cache.insert(ts, loaded.clone());
        Ok(loaded)
    }

    fn build(&mut self, anchor: Timestamp) -> Result<SequenceSample, GridError> {
        // Frames before this window's start are never needed again.
        let first = anchor.offset(-LEAD_MINUTES);
        self.cache = self.cache.split_off(&first);

        let mut rain = Vec::with_capacity(WINDOW_FRAMES);
        let mut radar_in = Vec::with_capacity(INPUT_FRAMES);
        for k in 0..WINDOW_FRAMES as i64 {
            let (r, d) = self.frame(first.offset(k * FRAME_MINUTES))?;
            if (k as usize) < INPUT_FRAMES {
                radar_in.push(d);
            }
            rain.push(r);
        }
        assemble(anchor, rain, radar_in)
    }
}

fn assemble(anchor: Timestamp, mut rain: Vec<Grid>, radar_in: Vec<Grid>) -> Result<SequenceSample, GridError> {
    let targets = (0..HORIZON_HOURS)
        .map(|h| {
            let s = INPUT_FRAMES + h * FRAMES_PER_HOUR;
            hourly_average(&rain[s..s + FRAMES_PER_HOUR], h)
        })
        .collect::<Result<Vec<_>, _>>()?;
    rain.truncate(INPUT_FRAMES);
    Ok(SequenceSample {
        anchor,
        rain_in: rain,
        radar_in,
        targets,
    })
}

/// Every window of an in-memory run of consecutive `(rain, radar)` frames,
/// one per 10-minute step.
pub fn samples_from_frames(frames: &[(Grid, Grid)]) -> Result<Vec<SequenceSample>, GridError> {
    for pair in frames.windows(2) {
        let (a, b) = (pair[0].0.timestamp(), pair[1].0.timestamp());
        if b != a.offset(FRAME_MINUTES) {
            return Err(GridError::NonConsecutive(b));
        }
    }
    if frames.len() < WINDOW_FRAMES {
        return Ok(Vec::new());
    }
    (0..=frames.len() - WINDOW_FRAMES)
        .map(|s| {
            let w = &frames[s..s + WINDOW_FRAMES];
            let rain = w.iter().map(|(r, _)| r.clone()).collect();
            let radar = w[..INPUT_FRAMES].iter().map(|(_, d)| d.clone()).collect();
            assemble(w[0].0.timestamp().offset(LEAD_MINUTES), rain, radar)
        })
        .collect()
}

impl Iterator for SampleWindows<'_> {
    type Item = Result<SequenceSample, GridError>;

    fn next(&mut self) -> Option<Self::Item> {
        let last = self.last?;
        while self.next < self.starts.len() {
            let start = self.starts[self.next];
            self.next += 1;
            let end = start.offset((WINDOW_FRAMES as i64 - 1) * FRAME_MINUTES);
            if end > last {
                continue;
            }
            self.report.candidates += 1;
            let complete = (0..WINDOW_FRAMES as i64)
                .all(|k| self.present.contains(&start.offset(k * FRAME_MINUTES)));
            if !complete {
                self.report.gapped += 1;
                continue;
            }
            self.report.emitted += 1;
            return Some(self.build(start.offset(LEAD_MINUTES)));
        }
        None
    }
}
