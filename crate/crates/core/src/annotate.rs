//! Clip captioning.
//!
//! Long clips are windowed into 256-frame spans, each captioned from 8
//! uniformly sampled frames by an external captioner service. Failures are
//! recorded per request and never abort the corpus.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{encode_frames, stable_hash64, ClientError, HttpJson};
use crate::frame_io::sample_uniform_frames;

/// Default captioning prompt sent with every request.
pub const DEFAULT_CAPTION_PROMPT: &str =
    "Elaborate on the visual and narrative elements of the video in detail";

/// Frames per caption window.
pub const DEFAULT_WINDOW: u64 = 256;
/// A final partial window shorter than this merges into its predecessor.
pub const DEFAULT_MIN_FINAL_WINDOW: u64 = 32;
/// Frames sampled per caption request.
pub const FRAMES_PER_REQUEST: usize = 8;
/// Caption text is truncated to this many bytes.
pub const MAX_CAPTION_BYTES: usize = 2048;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("caption corpus is empty")]
    EmptyCorpus,
}

/// One captioning call: a window of a clip plus the sampled frame indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub clip_id: String,
    pub window_index: u32,
    /// Clip-relative frame indices, strictly increasing, at most 8.
    pub frame_indices: Vec<u64>,
    pub prompt: String,
    pub frames_ref: Option<String>,
}

/// A stored caption with its recomputed counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub clip_id: String,
    pub window_index: u32,
    pub text: String,
    pub char_count: u64,
    pub word_count: u64,
}

impl Caption {
    /// Builds a caption, truncating over-long text at a char boundary and
    /// deriving the counts from the final text.
    pub fn new(clip_id: &str, window_index: u32, text: String) -> Self {
        let mut text = text;
        if text.len() > MAX_CAPTION_BYTES {
            let mut cut = MAX_CAPTION_BYTES;
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            text.truncate(cut);
        }
        let char_count = text.chars().count() as u64;
        let word_count = text.split_whitespace().count() as u64;
        Self {
            clip_id: clip_id.to_string(),
            window_index,
            text,
            char_count,
            word_count,
        }
    }
}

/// Splits `[0, clip_len)` into consecutive caption windows of `window`
/// frames. A final remainder shorter than `min_final` merges into the
/// previous window; a clip shorter than one window is a single window.
pub fn window_clip(clip_len: u64, window: u64, min_final: u64) -> Vec<(u64, u64)> {
    assert!(clip_len >= 1 && window >= 1);
    let mut windows = Vec::new();
    let full = clip_len / window;
    for i in 0..full {
        windows.push((i * window, (i + 1) * window));
    }
    let tail = clip_len % window;
    if tail > 0 {
        if tail >= min_final || windows.is_empty() {
            windows.push((clip_len - tail, clip_len));
        } else {
            let last = windows.last_mut().expect("nonempty");
            last.1 = clip_len;
        }
    }
    windows
}

/// Builds the request for one window using uniform frame sampling.
pub fn build_caption_request(
    clip_id: &str,
    window_index: u32,
    window: (u64, u64),
    prompt: &str,
) -> CaptionRequest {
    let (start, end) = window;
    assert!(start < end);
    let indices = sample_uniform_frames(end - start, FRAMES_PER_REQUEST)
        .into_iter()
        .map(|i| start + i)
        .collect();
    CaptionRequest {
        clip_id: clip_id.to_string(),
        window_index,
        frame_indices: indices,
        prompt: prompt.to_string(),
        frames_ref: None,
    }
}

/// Captioning service.
pub trait Captioner: Sync {
    fn caption(&self, request: &CaptionRequest, frames: &[Vec<u8>]) -> Result<String, ClientError>;
}

/// Deterministic stub: a fixed template plus the clip id hash, so repeated
/// runs produce identical captions.
#[derive(Debug, Default)]
pub struct StubCaptioner;

impl Captioner for StubCaptioner {
    fn caption(&self, request: &CaptionRequest, _frames: &[Vec<u8>]) -> Result<String, ClientError> {
        let key = format!("{}#{}", request.clip_id, request.window_index);
        Ok(format!(
            "Synthetic caption for {key}: scene signature {:016x}.",
            stable_hash64(&key)
        ))
    }
}

#[derive(Serialize)]
struct CaptionWire<'a> {
    clip_id: &'a str,
    prompt: &'a str,
    frames: Vec<String>,
}

#[derive(Deserialize)]
struct CaptionResponse {
    caption: String,
}

/// Captioner over HTTP: POST `{clip_id, prompt, frames: [base64 224x224
/// RGB]}`, response `{"caption": string}`.
pub struct HttpCaptioner {
    http: HttpJson,
}

impl HttpCaptioner {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, ClientError> {
        Ok(Self {
            http: HttpJson::new(endpoint, timeout)?,
        })
    }
}

impl Captioner for HttpCaptioner {
    fn caption(&self, request: &CaptionRequest, frames: &[Vec<u8>]) -> Result<String, ClientError> {
        let response: CaptionResponse = self.http.post(&CaptionWire {
            clip_id: &request.clip_id,
            prompt: &request.prompt,
            frames: encode_frames(frames),
        })?;
        Ok(response.caption)
    }
}

/// Retry policy for captioning calls: exponential backoff, at most
/// `max_retries` retries after the first attempt.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay: Duration::from_millis(100),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Zero-delay policy for tests.
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
            factor: 1.0,
        }
    }

    fn delay(&self, retry: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(retry as i32))
    }
}

/// Outcome of one caption request after retries.
#[derive(Debug, Clone)]
pub struct CaptionOutcome {
    pub clip_id: String,
    pub window_index: u32,
    pub result: Result<Caption, String>,
    pub attempts: u32,
}

/// Captions the whole corpus with bounded in-flight concurrency.
///
/// `frames_for` supplies the raw frame payloads for a request (an empty
/// vector is fine for stub clients). Per-item failures are recorded in the
/// outcome, never propagated. Outcomes keep request order.
pub fn caption_corpus<F>(
    requests: &[CaptionRequest],
    client: &dyn Captioner,
    policy: &RetryPolicy,
    max_inflight: usize,
    frames_for: F,
) -> Vec<CaptionOutcome>
where
    F: Fn(&CaptionRequest) -> Result<Vec<Vec<u8>>, ClientError> + Sync,
{
    assert!(max_inflight >= 1);
    let results: Mutex<Vec<Option<CaptionOutcome>>> =
        Mutex::new((0..requests.len()).map(|_| None).collect());
    let cursor = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..max_inflight.min(requests.len().max(1)) {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let request = &requests[i];
                let outcome = caption_one(request, client, policy, &frames_for);
                results.lock().expect("poisoned").as_mut_slice()[i] = Some(outcome);
            });
        }
    });

    results
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|o| o.expect("every slot filled"))
        .collect()
}

fn caption_one<F>(
    request: &CaptionRequest,
    client: &dyn Captioner,
    policy: &RetryPolicy,
    frames_for: &F,
) -> CaptionOutcome
where
    F: Fn(&CaptionRequest) -> Result<Vec<Vec<u8>>, ClientError>,
{
    let mut attempts = 0;
    let mut last_error = String::new();
    while attempts <= policy.max_retries {
        if attempts > 0 {
            std::thread::sleep(policy.delay(attempts - 1));
        }
        attempts += 1;
        let frames = match frames_for(request) {
            Ok(frames) => frames,
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };
        match client.caption(request, &frames) {
            Ok(text) => {
                return CaptionOutcome {
                    clip_id: request.clip_id.clone(),
                    window_index: request.window_index,
                    result: Ok(Caption::new(&request.clip_id, request.window_index, text)),
                    attempts,
                }
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    CaptionOutcome {
        clip_id: request.clip_id.clone(),
        window_index: request.window_index,
        result: Err(last_error),
        attempts,
    }
}

/// Corpus-level caption statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionStats {
    pub mean_chars: f64,
    pub mean_words: f64,
    /// Caption counts bucketed by character length, bin width 100.
    pub char_histogram: BTreeMap<u64, u64>,
}

pub fn caption_stats(captions: &[Caption]) -> Result<CaptionStats, AnnotateError> {
    if captions.is_empty() {
        return Err(AnnotateError::EmptyCorpus);
    }
    let n = captions.len() as f64;
    let mut histogram = BTreeMap::new();
    for caption in captions {
        *histogram.entry(caption.char_count / 100 * 100).or_insert(0) += 1;
    }
    Ok(CaptionStats {
        mean_chars: captions.iter().map(|c| c.char_count as f64).sum::<f64>() / n,
        mean_words: captions.iter().map(|c| c.word_count as f64).sum::<f64>() / n,
        char_histogram: histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    #[test]
    fn single_full_window() {
        assert_eq!(window_clip(256, 256, 32), vec![(0, 256)]);
    }

    #[test]
    fn short_tail_merges_into_previous_window() {
        // 520 = 2 full windows + 8 frames; 8 < 32 so the tail merges.
        assert_eq!(window_clip(520, 256, 32), vec![(0, 256), (256, 520)]);
    }

    #[test]
    fn long_enough_tail_stays_separate() {
        assert_eq!(window_clip(300, 256, 32), vec![(0, 256), (256, 300)]);
    }

    #[test]
    fn tiny_clip_is_its_own_window() {
        assert_eq!(window_clip(10, 256, 32), vec![(0, 10)]);
    }

    #[test]
    fn windows_partition_the_clip() {
        for len in 1..1200u64 {
            let windows = window_clip(len, 256, 32);
            assert_eq!(windows[0].0, 0);
            assert_eq!(windows.last().unwrap().1, len);
            for pair in windows.windows(2) {
                assert_eq!(pair[0].1, pair[1].0);
            }
            for &(s, e) in &windows {
                assert!(s < e);
            }
        }
    }

    #[test]
    fn request_for_tiny_window_uses_every_frame() {
        let req = build_caption_request("c", 0, (0, 8), DEFAULT_CAPTION_PROMPT);
        assert_eq!(req.frame_indices, vec![0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn request_samples_eight_of_256() {
        let req = build_caption_request("c", 0, (0, 256), DEFAULT_CAPTION_PROMPT);
        assert_eq!(req.frame_indices, vec![0, 36, 73, 109, 146, 182, 219, 255]);
    }

    #[test]
    fn window_offset_applies_to_indices() {
        let req = build_caption_request("c", 1, (256, 264), DEFAULT_CAPTION_PROMPT);
        assert_eq!(req.frame_indices, vec![256, 257, 258, 259, 260, 261, 262, 263]);
    }

    #[test]
    fn prompt_override_carried_verbatim() {
        let req = build_caption_request("c", 0, (0, 16), "describe the physics");
        assert_eq!(req.prompt, "describe the physics");
    }

    struct EchoCaptioner(&'static str);
    impl Captioner for EchoCaptioner {
        fn caption(&self, _r: &CaptionRequest, _f: &[Vec<u8>]) -> Result<String, ClientError> {
            Ok(self.0.to_string())
        }
    }

    fn requests(n: usize) -> Vec<CaptionRequest> {
        (0..n)
            .map(|i| build_caption_request(&format!("clip_{i}"), 0, (0, 64), DEFAULT_CAPTION_PROMPT))
            .collect()
    }

    #[test]
    fn echo_captioner_counts_words() {
        let outcomes = caption_corpus(
            &requests(3),
            &EchoCaptioner("test caption"),
            &RetryPolicy::immediate(0),
            2,
            |_| Ok(vec![]),
        );
        for outcome in &outcomes {
            let caption = outcome.result.as_ref().unwrap();
            assert_eq!(caption.text, "test caption");
            assert_eq!(caption.word_count, 2);
            assert_eq!(caption.char_count, 12);
        }
    }

    struct FlakyCaptioner {
        failures_left: AtomicU32,
    }
    impl Captioner for FlakyCaptioner {
        fn caption(&self, _r: &CaptionRequest, _f: &[Vec<u8>]) -> Result<String, ClientError> {
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                Err(ClientError::Unavailable("flaky".into()))
            } else {
                Ok("recovered".into())
            }
        }
    }

    #[test]
    fn one_failure_then_success_counts_one_retry() {
        let client = FlakyCaptioner {
            failures_left: AtomicU32::new(1),
        };
        let outcomes = caption_corpus(
            &requests(1),
            &client,
            &RetryPolicy::immediate(2),
            1,
            |_| Ok(vec![]),
        );
        assert_eq!(outcomes[0].attempts, 2);
        assert_eq!(outcomes[0].result.as_ref().unwrap().text, "recovered");
    }

    struct AlwaysFailing;
    impl Captioner for AlwaysFailing {
        fn caption(&self, _r: &CaptionRequest, _f: &[Vec<u8>]) -> Result<String, ClientError> {
            Err(ClientError::Timeout("down".into()))
        }
    }

    #[test]
    fn persistent_failure_recorded_without_aborting_corpus() {
        let outcomes = caption_corpus(
            &requests(4),
            &AlwaysFailing,
            &RetryPolicy::immediate(1),
            3,
            |_| Ok(vec![]),
        );
        assert_eq!(outcomes.len(), 4);
        for outcome in &outcomes {
            assert!(outcome.result.is_err());
            assert_eq!(outcome.attempts, 2);
        }
    }

    #[test]
    fn caption_counts_collapse_whitespace() {
        let caption = Caption::new("c", 0, "a  b".into());
        assert_eq!(caption.word_count, 2);
        assert_eq!(caption.char_count, 4);
    }

    #[test]
    fn over_long_caption_truncated_at_char_boundary() {
        let text = "é".repeat(2000); // 4000 bytes of 2-byte chars
        let caption = Caption::new("c", 0, text);
        assert!(caption.text.len() <= MAX_CAPTION_BYTES);
        assert_eq!(caption.char_count, 1024);
    }

    #[test]
    fn stats_over_known_corpus() {
        let captions = vec![
            Caption::new("a", 0, "x".repeat(10)),
            Caption::new("b", 0, "y".repeat(20)),
        ];
        let stats = caption_stats(&captions).unwrap();
        assert_eq!(stats.mean_chars, 15.0);
        assert_eq!(stats.char_histogram[&0], 2);
    }

    #[test]
    fn empty_caption_corpus_is_an_error() {
        assert!(matches!(caption_stats(&[]), Err(AnnotateError::EmptyCorpus)));
        let stats = caption_stats(&[Caption::new("a", 0, String::new())]).unwrap();
        assert_eq!(stats.mean_chars, 0.0);
        assert_eq!(stats.mean_words, 0.0);
    }

    #[test]
    fn stub_captioner_is_deterministic() {
        let req = &requests(1)[0];
        let a = StubCaptioner.caption(req, &[]).unwrap();
        let b = StubCaptioner.caption(req, &[]).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("clip_0#0"));
    }
}
