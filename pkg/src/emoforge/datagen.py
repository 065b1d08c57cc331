"""Deterministic synthetic multimodal emotion corpus.

Each utterance carries three feature vectors (vision / audio / text) drawn
from well-separated per-class Gaussian clusters, plus reference audio
rendered as speaker- and emotion-modulated harmonic tones. The renderer is
the ground truth the TTS trainer imitates and the metric suite scores
against, so everything here is exactly reproducible from the seed.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dsp import HOP, Waveform, wav_write
from .errors import ConfigError, FormatError, InvalidInputError, InvalidLabelError
from .numeric import rng_stream

EMOTIONS = ("neutral", "happy", "sad", "angry", "surprise")

# base fundamental per speaker; roughly bass / tenor / alto / soprano
_SPEAKER_F0 = (110.0, 146.0, 196.0, 246.0)

# per-speaker harmonic comb (spectral decay, harmonic count, step between
# harmonics); voices light up very different mel-band sets, so timbre and
# not only pitch separates them
_SPEAKER_TIMBRE = (
    (2.5, 4, 1),    # dark: steep rolloff, few partials
    (1.0, 8, 1),    # warm
    (0.5, 14, 1),   # bright
    (0.3, 19, 2),   # reedy: odd harmonics only, slow rolloff
)

# (F0 multiplier, pitch contour over utterance position, amplitude)
_EMOTION_RENDER = {
    "neutral": (1.0, lambda p: 1.0, 0.5),
    "happy": (1.3, lambda p: 1.0 + 0.15 * p, 0.5),
    "sad": (0.8, lambda p: 1.0 - 0.15 * p, 0.5),
    "angry": (1.2, lambda p: 1.0, 0.8),
    "surprise": (1.4, lambda p: 1.0 + 0.2 * np.sin(np.pi * p), 0.5),
}

_TEXT_POOL = (
    "the quick brown fox jumps over the lazy dog.",
    "pack my box with five dozen jugs.",
    "how vexingly quick daft zebras jump.",
    "bright vixens jump for joy.",
    "sphinx of black quartz judge my vow.",
    "waltz bad nymph for quick jigs.",
    "glib jocks quiz nymph to vex dwarf.",
    "the five boxing wizards jump quickly.",
)

_VOWELS = frozenset("aeiou")


@dataclass
class CorpusConfig:
    n_classes: int = 5
    n_speakers: int = 4
    samples_per_class: int = 200
    d_vis: int = 64
    d_audio: int = 64
    d_text: int = 64
    separation: float = 4.0
    noise_std: float = 1.0
    seed: int = 42

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError("need at least 2 emotion classes")
        if self.n_speakers < 1 or self.samples_per_class < 1:
            raise ConfigError("need at least one speaker and one sample per class")
        if self.separation <= 0:
            raise ConfigError("separation must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.n_classes > min(self.d_vis, self.d_audio, self.d_text):
            raise ConfigError("cannot orthogonalize %d class directions in dim %d"
                              % (self.n_classes, min(self.d_vis, self.d_audio, self.d_text)))


@dataclass
class Utterance:
    id: str
    text: str
    emotion: int
    speaker: int
    wav_path: str
    durations: list  # frames per character
    feat_vis: np.ndarray
    feat_audio: np.ndarray
    feat_text: np.ndarray

    def __post_init__(self):
        self.feat_vis = np.asarray(self.feat_vis, dtype=np.float64)
        self.feat_audio = np.asarray(self.feat_audio, dtype=np.float64)
        self.feat_text = np.asarray(self.feat_text, dtype=np.float64)
        if any(d < 1 for d in self.durations):
            raise InvalidInputError("character durations must be >= 1 frame")
        for f in (self.feat_vis, self.feat_audio, self.feat_text):
            if not np.all(np.isfinite(f)):
                raise InvalidInputError("utterance features must be finite")


def emotion_name(class_id, n_classes=5):
    if not 0 <= class_id < n_classes:
        raise InvalidLabelError("emotion class %r out of range [0, %d)" % (class_id, n_classes))
    if class_id < len(EMOTIONS):
        return EMOTIONS[class_id]
    return "emotion%d" % class_id


def emotion_id(name):
    if name not in EMOTIONS:
        raise InvalidLabelError("unknown emotion %r (known: %s)" % (name, ", ".join(EMOTIONS)))
    return EMOTIONS.index(name)


def char_frames(ch):
    """Frames per rendered character: vowels ring longest, pauses shortest."""
    if ch in _VOWELS:
        return 8
    if ch == " ":
        return 4
    if ch == ".":
        return 5
    return 6


def text_durations(text):
    return [char_frames(ch) for ch in text]


def speaker_f0(speaker):
    if speaker < len(_SPEAKER_F0):
        return _SPEAKER_F0[speaker]
    return _SPEAKER_F0[-1] * 1.26 ** (speaker - len(_SPEAKER_F0) + 1)


def _emotion_render_params(class_id):
    if class_id < len(EMOTIONS):
        return _EMOTION_RENDER[EMOTIONS[class_id]]
    return (1.0 + 0.06 * (class_id - 4), lambda p: 1.0, 0.5)


def render_reference(text, emotion, speaker, config=None, sample_rate=16000):
    """Render reference audio: one harmonic tone segment per character.

    Speaker sets base F0 and timbre; emotion sets the F0 multiplier, the
    pitch contour across the utterance and the amplitude. Spaces and
    periods render as silence. Deterministic, no RNG involved.
    """
    if not text:
        raise InvalidInputError("cannot render empty text")
    n_classes = config.n_classes if config is not None else max(5, emotion + 1)
    if not 0 <= emotion < n_classes:
        raise InvalidLabelError("emotion class %r out of range [0, %d)" % (emotion, n_classes))
    if speaker < 0:
        raise InvalidLabelError("speaker id must be non-negative")

    mult, contour, amp = _emotion_render_params(emotion)
    f0 = speaker_f0(speaker)
    alpha, max_h, step = _SPEAKER_TIMBRE[speaker % len(_SPEAKER_TIMBRE)]
    parts = [(h, h ** -alpha) for h in range(1, max_h + 1, step)]
    total_amp = sum(a for _, a in parts)

    segments = []
    n_chars = len(text)
    fade = int(0.008 * sample_rate)
    for k, ch in enumerate(text):
        n = char_frames(ch) * HOP
        if ch in " .":
            segments.append(np.zeros(n))
            continue
        p = k / max(1, n_chars - 1)
        # per-character pitch offset keeps different texts spectrally distinct
        f = f0 * mult * contour(p) * 2.0 ** ((ord(ch) - ord("m")) / 52.0)
        t = np.arange(n) / sample_rate
        seg = np.zeros(n)
        for h, a in parts:
            if f * h < 7600.0:  # keep partials below Nyquist
                seg += (a / total_amp) * np.sin(2.0 * np.pi * f * h * t)
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
        seg[:fade] *= ramp
        seg[-fade:] *= ramp[::-1]
        segments.append(amp * seg)
    return Waveform(samples=np.concatenate(segments), sample_rate=sample_rate)


def class_directions(rng, n_classes, dim):
    """Orthonormal class centroid directions via Gram-Schmidt on Gaussian draws."""
    dirs = np.zeros((n_classes, dim))
    for c in range(n_classes):
        v = rng.standard_normal(dim)
        for prev in dirs[:c]:
            v = v - (v @ prev) * prev
        norm = np.linalg.norm(v)
        while norm < 1e-8:  # essentially impossible, but stay well-defined
            v = rng.standard_normal(dim)
            norm = np.linalg.norm(v)
        dirs[c] = v / norm
    return dirs


def gen_corpus(config, out_dir):
    """Generate the corpus under out_dir: wav/*.wav plus manifest.jsonl.

    Feature vectors are inlined in the manifest. Byte-identical output for
    identical configs.
    """
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)

    dims = {"vis": config.d_vis, "audio": config.d_audio, "text": config.d_text}
    centers = {
        mu: config.separation * class_directions(rng_stream(config.seed, "datagen:dirs:" + mu),
                                                 config.n_classes, dim)
        for mu, dim in dims.items()
    }
    feat_rng = {mu: rng_stream(config.seed, "datagen:feats:" + mu) for mu in dims}

    utts = []
    for c in range(config.n_classes):
        for s in range(config.samples_per_class):
            idx = c * config.samples_per_class + s
            speaker = s % config.n_speakers
            text = _TEXT_POOL[(s // config.n_speakers) % len(_TEXT_POOL)]
            feats = {
                mu: centers[mu][c] + config.noise_std * feat_rng[mu].standard_normal(dims[mu])
                for mu in dims
            }
            utt_id = "utt_%05d" % idx
            wav_rel = os.path.join("wav", utt_id + ".wav")
            wav_write(os.path.join(out_dir, wav_rel), render_reference(text, c, speaker, config))
            utts.append(Utterance(
                id=utt_id, text=text, emotion=c, speaker=speaker, wav_path=wav_rel,
                durations=text_durations(text),
                feat_vis=feats["vis"], feat_audio=feats["audio"], feat_text=feats["text"],
            ))

    with open(os.path.join(out_dir, "manifest.jsonl"), "w") as f:
        for u in utts:
            f.write(json.dumps({
                "id": u.id, "text": u.text, "emotion": u.emotion, "speaker": u.speaker,
                "wav": u.wav_path, "durations": u.durations,
                "feat_vis": u.feat_vis.tolist(),
                "feat_audio": u.feat_audio.tolist(),
                "feat_text": u.feat_text.tolist(),
            }) + "\n")
    return utts


def load_manifest(path):
    utts = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                utts.append(Utterance(
                    id=row["id"], text=row["text"], emotion=int(row["emotion"]),
                    speaker=int(row["speaker"]), wav_path=row["wav"],
                    durations=[int(d) for d in row["durations"]],
                    feat_vis=row["feat_vis"], feat_audio=row["feat_audio"],
                    feat_text=row["feat_text"],
                ))
            except (KeyError, ValueError, TypeError) as e:
                raise FormatError("bad manifest line %d in %s: %s" % (lineno, path, e))
    if not utts:
        raise FormatError("empty manifest: %s" % path)
    return utts
