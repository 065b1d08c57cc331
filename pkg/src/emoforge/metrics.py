"""Objective evaluation suite: WER/CER over edit distance, mel-cepstral
distortion with DTW alignment, speaker-embedding cosine similarity, and
MOS aggregation with Student-t 95% confidence intervals.

Per-utterance metrics are pure functions of the two waveforms / transcripts;
corpus aggregation pools WER/CER (total edits over total reference tokens)
and reports MCD/SECS as medians.
"""

import csv
import io
import json
import re
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from .dsp import mel_cepstra, mel_spectrogram
from .errors import (
    InsufficientDataError,
    InvalidInputError,
    ShapeError,
    UndefinedMetricError,
)
from .numeric import cosine_similarity, l2_normalize_rows


# ---------------------------------------------------------------------------
# Edit distance, WER, CER
# ---------------------------------------------------------------------------

@dataclass
class EditOps:
    substitutions: int
    deletions: int
    insertions: int

    @property
    def distance(self):
        return self.substitutions + self.deletions + self.insertions


def edit_distance(ref, hyp):
    """Levenshtein alignment between two token sequences.

    Returns an EditOps with the minimal substitution/deletion/insertion
    counts. When several alignments reach the minimum, substitutions are
    preferred over deletions over insertions, so the counts (not just the
    distance) are deterministic.
    """
    n, m = len(ref), len(hyp)
    # dp[i][j] = (distance, S, D, I) for ref[:i] vs hyp[:j]
    dp = [[None] * (m + 1) for _ in range(n + 1)]
    dp[0][0] = (0, 0, 0, 0)
    for i in range(1, n + 1):
        d = dp[i - 1][0]
        dp[i][0] = (d[0] + 1, d[1], d[2] + 1, d[3])
    for j in range(1, m + 1):
        d = dp[0][j - 1]
        dp[0][j] = (d[0] + 1, d[1], d[2], d[3] + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = dp[i - 1][j - 1]
            up = dp[i - 1][j]
            left = dp[i][j - 1]
            hit = ref[i - 1] == hyp[j - 1]
            # candidate order encodes the tie-break preference
            cands = [
                (diag[0] + (0 if hit else 1), diag[1] + (0 if hit else 1), diag[2], diag[3]),
                (up[0] + 1, up[1], up[2] + 1, up[3]),
                (left[0] + 1, left[1], left[2], left[3] + 1),
            ]
            best = min(c[0] for c in cands)
            dp[i][j] = next(c for c in cands if c[0] == best)
    _, s, d, ins = dp[n][m]
    return EditOps(substitutions=s, deletions=d, insertions=ins)


_KEEP = re.compile(r"[^a-z0-9' ]+")
_SPACES = re.compile(r"\s+")


def normalize_text(s):
    """Lowercase, strip punctuation to [a-z0-9' ], collapse whitespace."""
    s = _KEEP.sub(" ", s.lower().replace("\t", " ").replace("\n", " "))
    return _SPACES.sub(" ", s).strip()


def wer(ref_text, hyp_text):
    """Word error rate: edit distance over reference word count (fraction)."""
    ref = normalize_text(ref_text).split()
    hyp = normalize_text(hyp_text).split()
    if not ref:
        raise UndefinedMetricError("WER undefined: empty reference after normalization")
    return edit_distance(ref, hyp).distance / len(ref)


def cer(ref_text, hyp_text):
    """Character error rate over normalized characters (internal spaces count)."""
    ref = list(normalize_text(ref_text))
    hyp = list(normalize_text(hyp_text))
    if not ref:
        raise UndefinedMetricError("CER undefined: empty reference after normalization")
    return edit_distance(ref, hyp).distance / len(ref)


# ---------------------------------------------------------------------------
# DTW and MCD
# ---------------------------------------------------------------------------

def dtw_align(a, b):
    """Dynamic time warping between two feature sequences.

    Returns the monotone path of (i, j) index pairs from (0, 0) to
    (T_a-1, T_b-1) minimizing the summed per-pair Euclidean cost, with
    steps {(1,0), (0,1), (1,1)}.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] < 1 or b.shape[0] < 1:
        raise ShapeError("dtw_align needs two non-empty 2-D sequences")
    if a.shape[1] != b.shape[1]:
        raise ShapeError("feature dims differ: %d vs %d" % (a.shape[1], b.shape[1]))
    cost = cdist(a, b)
    ta, tb = cost.shape
    acc = np.empty((ta, tb))
    acc[0, 0] = cost[0, 0]
    for i in range(1, ta):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
    for j in range(1, tb):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, ta):
        for j in range(1, tb):
            acc[i, j] = cost[i, j] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    path = [(ta - 1, tb - 1)]
    i, j = ta - 1, tb - 1
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # prefer the diagonal on ties (path shape only; cost is unaffected)
            moves = [(acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j), (acc[i, j - 1], i, j - 1)]
            best = min(m[0] for m in moves)
            _, i, j = next(m for m in moves if m[0] == best)
        path.append((i, j))
    path.reverse()
    return path


_MCD_COEFFS = 14  # c0..c13; c0 is dropped before alignment


def mcd(ref, syn):
    """Mel-cepstral distortion in dB between two waveforms.

    Cepstra (c1..c13, c0 excluded for gain invariance) are DTW-aligned and
    the per-pair distortion (10/ln 10)*sqrt(2*sum(dc_k^2)) is averaged over
    the path. Arguments are ordered canonically first, so the result is
    exactly symmetric even when several warping paths tie.
    """
    if ref.sample_rate != syn.sample_rate:
        raise InvalidInputError(
            "sample rates differ: %d vs %d" % (ref.sample_rate, syn.sample_rate))
    ca = mel_cepstra(mel_spectrogram(ref), _MCD_COEFFS)[:, 1:]
    cb = mel_cepstra(mel_spectrogram(syn), _MCD_COEFFS)[:, 1:]
    if ca.tobytes() > cb.tobytes():
        ca, cb = cb, ca
    path = dtw_align(ca, cb)
    diffs = np.array([ca[i] - cb[j] for i, j in path])
    per_pair = (10.0 / np.log(10.0)) * np.sqrt(2.0 * np.sum(diffs ** 2, axis=1))
    return float(np.mean(per_pair))


# ---------------------------------------------------------------------------
# Speaker similarity
# ---------------------------------------------------------------------------

def speaker_embedding(w):
    """Unit-norm speaker embedding: per-band mean and std of the log-mel
    spectrogram, concatenated (dim 2*N_mel). Sign-invariant by construction
    since only magnitude spectra enter."""
    m = mel_spectrogram(w)
    if m.frames.shape[0] < 5:
        raise InvalidInputError(
            "need >= 5 mel frames for a speaker embedding, got %d" % m.frames.shape[0])
    emb = np.concatenate([m.frames.mean(axis=0), m.frames.std(axis=0)])
    return l2_normalize_rows(emb[None, :])[0]


def secs(ref, syn):
    """Speaker-embedding cosine similarity, in [-1, 1]."""
    return cosine_similarity(speaker_embedding(ref), speaker_embedding(syn))


# ---------------------------------------------------------------------------
# MOS aggregation
# ---------------------------------------------------------------------------

@dataclass
class MosSummary:
    mean: float
    half_width_95: float
    n: int

    def formatted(self):
        return "%.2f(±%.2f)" % (self.mean, self.half_width_95)


def mos_aggregate(scores):
    """Aggregate opinion scores on the 1.0..5.0 half-point grid.

    Returns the sample mean with a two-sided 95% Student-t half-width
    (sample std, n-1 degrees of freedom).
    """
    scores = [float(s) for s in scores]
    if len(scores) < 2:
        raise InsufficientDataError("need >= 2 ratings, got %d" % len(scores))
    for s in scores:
        if not (1.0 <= s <= 5.0) or abs(s * 2.0 - round(s * 2.0)) > 1e-9:
            raise InvalidInputError("rating %r is not on the 1.0..5.0 half-point grid" % s)
    arr = np.asarray(scores)
    n = arr.size
    sd = float(arr.std(ddof=1))
    half = float(stats.t.ppf(0.975, n - 1) * sd / np.sqrt(n))
    return MosSummary(mean=float(arr.mean()), half_width_95=half, n=n)


# ---------------------------------------------------------------------------
# Corpus-level report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    utterances: list  # dicts with id, wer, cer, mcd, secs and pooled counts
    wer: float
    cer: float
    mcd_median: float
    secs_median: float
    mos: MosSummary  # or None when no ratings supplied
    n_utts: int

    def to_json(self):
        payload = {
            "wer": self.wer,
            "cer": self.cer,
            "mcd_median": self.mcd_median,
            "secs_median": self.secs_median,
            "mos": None if self.mos is None else {
                "mean": self.mos.mean, "ci95": self.mos.half_width_95, "n": self.mos.n},
            "n_utts": self.n_utts,
            "utterances": [
                {k: u[k] for k in ("id", "wer", "cer", "mcd", "secs")} for u in self.utterances
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["id", "wer", "cer", "mcd", "secs"])
        for u in self.utterances:
            writer.writerow([u["id"], "%.6f" % u["wer"], "%.6f" % u["cer"],
                             "%.6f" % u["mcd"], "%.6f" % u["secs"]])
        return buf.getvalue()


def utterance_metrics(utt_id, ref_wav, syn_wav, ref_text, hyp_text):
    """All per-utterance metrics plus the raw counts needed for pooling."""
    ref_words = normalize_text(ref_text).split()
    hyp_words = normalize_text(hyp_text).split()
    ref_chars = list(normalize_text(ref_text))
    hyp_chars = list(normalize_text(hyp_text))
    if not ref_words:
        raise UndefinedMetricError("empty reference transcript for %r" % utt_id)
    w_ops = edit_distance(ref_words, hyp_words)
    c_ops = edit_distance(ref_chars, hyp_chars)
    return {
        "id": utt_id,
        "wer": w_ops.distance / len(ref_words),
        "cer": c_ops.distance / len(ref_chars),
        "mcd": mcd(ref_wav, syn_wav),
        "secs": secs(ref_wav, syn_wav),
        "word_edits": w_ops.distance,
        "word_count": len(ref_words),
        "char_edits": c_ops.distance,
        "char_count": len(ref_chars),
    }


def aggregate_report(per_utt, mos_scores=None):
    """Fold per-utterance metric dicts into an EvalReport.

    WER/CER are pooled (total edits / total reference tokens); MCD and SECS
    are reported as medians.
    """
    if not per_utt:
        raise InsufficientDataError("no utterances to aggregate")
    return EvalReport(
        utterances=list(per_utt),
        wer=sum(u["word_edits"] for u in per_utt) / sum(u["word_count"] for u in per_utt),
        cer=sum(u["char_edits"] for u in per_utt) / sum(u["char_count"] for u in per_utt),
        mcd_median=float(np.median([u["mcd"] for u in per_utt])),
        secs_median=float(np.median([u["secs"] for u in per_utt])),
        mos=None if mos_scores is None else mos_aggregate(mos_scores),
        n_utts=len(per_utt),
    )
