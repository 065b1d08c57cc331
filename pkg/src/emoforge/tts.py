"""Toy text-to-speech pipeline with pluggable emotion conditioning.

The synthesis path is: character encoder -> conditioning (one of three
variants) -> duration expansion -> position-wise mel decoder -> Griffin-Lim
vocoder.  The three variants differ only in where the emotion/speaker
condition enters:

  "vits"        affine coupling flow applied to the decoded mel frames
  "fastspeech"  cross-attention from the text features onto the condition
  "tacotron"    plain concatenation of condition onto the text features

All variants share the same base weights for a given seed (each block is
initialized from its own named stream), so with neutralized conditioning
parameters "vits" and "fastspeech" are frame-for-frame interchangeable.
"""

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import ParamLayout, AdamState, adam_step, constant, concat, grad
from .conditioning import (
    ConditionVector,
    attention_block_shapes,
    attention_graph,
    build_condition_graph,
    coupling_block_shapes,
    coupling_graph,
)
from .dsp import HOP, N_MELS, SAMPLE_RATE, MelSpectrogram, griffin_lim, mel_spectrogram
from .datagen import render_reference
from .errors import ConfigError, FormatError, InvalidInputError, InvalidLabelError
from .numeric import rng_stream

VOCAB = "abcdefghijklmnopqrstuvwxyz ."
VARIANTS = ("vits", "fastspeech", "tacotron")
CHAR_DIM = 32
DEC_HIDDEN = 64
COUPLING_GATE = 16
MAX_FRAMES_PER_CHAR = 20
CKPT_MAGIC = "EMITTS/1"


@dataclass
class TtsConfig:
    steps: int = 2000
    lr: float = 0.05
    batch: int = 8
    seed: int = 42

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")


@dataclass
class TtsParams:
    theta: np.ndarray
    layout: ParamLayout
    variant: str
    dims: dict  # char_dim, embed, n_speakers, dec_hidden, gate, n_mels
    seed: int


def _char_ids(text):
    ids = [VOCAB.index(ch) for ch in text.lower() if ch in VOCAB]
    if not ids:
        raise InvalidInputError("text is empty after normalization: %r" % (text,))
    return np.asarray(ids, dtype=np.intp)


def _posenc(t_len, dim):
    pos = np.arange(t_len, dtype=np.float64)[:, None]
    k = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (k // 2) / dim)
    pe = np.where(k % 2 == 0, np.sin(angle), np.cos(angle))
    return pe


def _cond_width(variant, char_dim, embed, n_speakers):
    if variant == "tacotron":
        return char_dim + embed + n_speakers
    return char_dim


def tts_block_shapes(variant, char_dim=CHAR_DIM, embed=32, n_speakers=4,
                     dec_hidden=DEC_HIDDEN, gate=COUPLING_GATE):
    if variant not in VARIANTS:
        raise ConfigError("unknown variant %r (want one of %s)" % (variant, "/".join(VARIANTS)))
    d_cond = _cond_width(variant, char_dim, embed, n_speakers)
    shapes = {
        "char_emb": (len(VOCAB), char_dim),
        "enc_w1": (char_dim, char_dim),
        "enc_b1": (char_dim,),
        "enc_w2": (char_dim, char_dim),
        "enc_b2": (char_dim,),
        "dur_w": (d_cond, 1),
        "dur_b": (1,),
        "dec_w1": (d_cond, dec_hidden),
        "dec_b1": (dec_hidden,),
        "dec_w2": (dec_hidden, N_MELS),
        "dec_b2": (N_MELS,),
    }
    if variant == "vits":
        # two coupling blocks with a half-swap between them, so both halves
        # of the mel frame are transformable (a single block pins the first)
        for prefix in ("flow_a_", "flow_b_"):
            for name, shape in coupling_block_shapes(N_MELS, embed + n_speakers, gate).items():
                shapes[prefix + name] = shape
    else:
        # condition-to-output linear bias so per-emotion spectral offsets
        # don't have to route through the shared tanh layer
        shapes["dec_wc"] = (embed + n_speakers, N_MELS)
        if variant == "fastspeech":
            shapes.update(attention_block_shapes(char_dim, embed + n_speakers))
    return shapes


def init_tts(variant, embed, n_speakers, seed=42, char_dim=CHAR_DIM,
             dec_hidden=DEC_HIDDEN, gate=COUPLING_GATE):
    shapes = tts_block_shapes(variant, char_dim, embed, n_speakers, dec_hidden, gate)
    scales = {}
    for name, shape in shapes.items():
        if name == "char_emb":
            scales[name] = 1.0
        elif name.endswith(("_b", "_b1", "_b2", "bf", "bg", "bo")):
            scales[name] = 0.0
        else:
            scales[name] = 1.0 / np.sqrt(shape[0])
    layout = ParamLayout(shapes)
    theta = layout.init(lambda name: rng_stream(seed, "tts:" + name), scales)
    dims = {"char_dim": char_dim, "embed": embed, "n_speakers": n_speakers,
            "dec_hidden": dec_hidden, "gate": gate, "n_mels": N_MELS}
    return TtsParams(theta=theta, layout=layout, variant=variant, dims=dims, seed=seed)


def speaker_one_hot(speaker, n_speakers):
    if not 0 <= speaker < n_speakers:
        raise InvalidLabelError("speaker %d out of range [0, %d)" % (speaker, n_speakers))
    u = np.zeros(n_speakers)
    u[speaker] = 1.0
    return u


# -- graph construction -------------------------------------------------------

def _text_graph(blocks, ids):
    e = blocks["char_emb"][ids] + constant(_posenc(len(ids), blocks["char_emb"].shape[1]))
    hidden = (e @ blocks["enc_w1"] + blocks["enc_b1"]).tanh()
    return hidden @ blocks["enc_w2"] + blocks["enc_b2"]


def _condition_graph(blocks, h_t, u_emo, u_spk, variant):
    if variant == "tacotron":
        t_len = h_t.shape[0]
        pads = [constant(np.tile(u_emo, (t_len, 1))), constant(np.tile(u_spk, (t_len, 1)))]
        return concat([h_t] + pads, axis=1)
    if variant == "fastspeech":
        c_t = build_condition_graph(blocks, constant(u_emo[None, :]), constant(u_spk[None, :]))
        return attention_graph(blocks, h_t, c_t)
    return h_t  # vits conditions the decoder output instead


def _duration_graph(blocks, h_cond_t):
    return (h_cond_t @ blocks["dur_w"] + blocks["dur_b"]).softplus()


def _swap_halves(t):
    half = t.shape[1] // 2
    return concat([t[:, half:], t[:, :half]], axis=1)


def _decoder_graph(blocks, h_cond_t, u_emo, u_spk, variant, frame_index):
    h_exp = h_cond_t[frame_index]
    hidden = (h_exp @ blocks["dec_w1"] + blocks["dec_b1"]).tanh()
    mel = hidden @ blocks["dec_w2"] + blocks["dec_b2"]
    u = constant(np.concatenate([u_emo, u_spk])[None, :])
    if variant == "vits":
        flow_a = {k[len("flow_a_"):]: v for k, v in blocks.items() if k.startswith("flow_a_")}
        flow_b = {k[len("flow_b_"):]: v for k, v in blocks.items() if k.startswith("flow_b_")}
        mel, _ = coupling_graph(flow_a, mel, u)
        mel, _ = coupling_graph(flow_b, _swap_halves(mel), u)
        mel = _swap_halves(mel)
    else:
        mel = mel + u @ blocks["dec_wc"]
    return mel


def _check_condition(u_emo, u_spk, params):
    ConditionVector(u_emo=np.asarray(u_emo, dtype=np.float64),
                    u_spk=np.asarray(u_spk, dtype=np.float64))
    if len(u_emo) != params.dims["embed"]:
        raise InvalidInputError("emotion embedding has dim %d, model expects %d"
                                % (len(u_emo), params.dims["embed"]))
    if len(u_spk) != params.dims["n_speakers"]:
        raise InvalidInputError("speaker vector has dim %d, model expects %d"
                                % (len(u_spk), params.dims["n_speakers"]))


# -- public operations -------------------------------------------------------

def text_encode(text, params):
    """Embed normalized characters and apply the position-wise transform."""
    ids = _char_ids(text)
    blocks = params.layout.unpack(params.theta)
    return _text_graph({k: constant(v) for k, v in blocks.items()}, ids).data


def condition_text(h_lg, u_emo, u_spk, params):
    """Apply the variant's text-side conditioning step (identity for vits)."""
    h_lg = np.asarray(h_lg, dtype=np.float64)
    u_emo = np.asarray(u_emo, dtype=np.float64)
    u_spk = np.asarray(u_spk, dtype=np.float64)
    _check_condition(u_emo, u_spk, params)
    blocks = {k: constant(v) for k, v in params.layout.unpack(params.theta).items()}
    return _condition_graph(blocks, constant(h_lg), u_emo, u_spk, params.variant).data


def predict_durations(h_cond, params):
    """Per-character frame counts: linear head + softplus, rounded into [1, 20]."""
    blocks = {k: constant(v) for k, v in params.layout.unpack(params.theta).items()}
    raw = _duration_graph(blocks, constant(np.asarray(h_cond, dtype=np.float64))).data
    return np.clip(np.rint(raw[:, 0]), 1, MAX_FRAMES_PER_CHAR).astype(int)


def synthesize(text, u_emo, u_spk, params, gl_iters=32):
    """Full path from text to waveform; deterministic given params and inputs."""
    u_emo = np.asarray(u_emo, dtype=np.float64)
    u_spk = np.asarray(u_spk, dtype=np.float64)
    _check_condition(u_emo, u_spk, params)
    ids = _char_ids(text)
    blocks = {k: constant(v) for k, v in params.layout.unpack(params.theta).items()}
    h_lg = _text_graph(blocks, ids)
    h_cond = _condition_graph(blocks, h_lg, u_emo, u_spk, params.variant)
    raw = _duration_graph(blocks, h_cond).data
    durations = np.clip(np.rint(raw[:, 0]), 1, MAX_FRAMES_PER_CHAR).astype(int)
    frame_index = np.repeat(np.arange(len(ids)), durations)
    mel_t = _decoder_graph(blocks, h_cond, u_emo, u_spk, params.variant, frame_index)
    mel = MelSpectrogram(frames=mel_t.data, sample_rate=SAMPLE_RATE, hop=HOP)
    wav = griffin_lim(mel, iters=gl_iters)
    return wav, mel


# -- training -----------------------------------------------------------------

def _utterance_batch(utt, prompts, n_speakers, mel_cache):
    ids = _char_ids(utt.text)
    durations = np.asarray(utt.durations, dtype=int)
    if len(ids) != len(durations):
        raise InvalidInputError("utterance %s: %d durations for %d characters"
                                % (utt.id, len(durations), len(ids)))
    if not 0 <= utt.emotion < len(prompts):
        raise InvalidLabelError("utterance %s: emotion %d out of range" % (utt.id, utt.emotion))
    key = (utt.text, utt.emotion, utt.speaker)
    if key not in mel_cache:
        ref = render_reference(utt.text, utt.emotion, utt.speaker)
        # center-padded STFT yields one frame beyond the teacher total; trim it
        mel_cache[key] = mel_spectrogram(ref).frames[: int(durations.sum())]
    return {
        "ids": ids,
        "durations": durations,
        "frame_index": np.repeat(np.arange(len(ids)), durations),
        "u_emo": prompts[utt.emotion],
        "u_spk": speaker_one_hot(utt.speaker, n_speakers),
        "target": mel_cache[key],
    }


def _loss_graph(theta_t, params, batch):
    blocks = params.layout.unpack(theta_t)
    h_lg = _text_graph(blocks, batch["ids"])
    h_cond = _condition_graph(blocks, h_lg, batch["u_emo"], batch["u_spk"], params.variant)
    dur_soft = _duration_graph(blocks, h_cond)
    mel = _decoder_graph(blocks, h_cond, batch["u_emo"], batch["u_spk"],
                         params.variant, batch["frame_index"])
    mel_err = mel - constant(batch["target"])
    dur_err = dur_soft - constant(batch["durations"].astype(np.float64)[:, None])
    return (mel_err * mel_err).mean() + (dur_err * dur_err).mean()


def train_tts(dataset, prompts, variant, config=None):
    """Teacher-forced trainer: L2 on mel frames plus L2 on soft durations.

    `prompts` is the trained alignment model's anchored prompt table (one
    unit-norm embedding per emotion class); returns (params, loss curve)
    where the curve holds mean probe-set loss snapshots, first entry before
    any update and last entry after the final step.
    """
    config = config or TtsConfig()
    if not dataset:
        raise ConfigError("empty training set")
    prompts = np.asarray(prompts, dtype=np.float64)
    if prompts.ndim != 2:
        raise ConfigError("prompt table must be a C x E matrix")
    n_speakers = max(u.speaker for u in dataset) + 1
    params = init_tts(variant, embed=prompts.shape[1], n_speakers=n_speakers,
                      seed=config.seed)

    mel_cache = {}
    batches = [_utterance_batch(u, prompts, n_speakers, mel_cache) for u in dataset]
    probe = batches[: min(8, len(batches))]

    def probe_loss(theta):
        vals = [_loss_graph(constant(theta), params, b).item() for b in probe]
        return float(np.mean(vals))

    order_rng = rng_stream(config.seed, "tts:order")
    state = AdamState.zeros(params.theta.size)
    snap_every = max(1, config.steps // 20)
    curve = [probe_loss(params.theta)]
    queue = []
    for step in range(1, config.steps + 1):
        while len(queue) < config.batch:
            queue.extend(order_rng.permutation(len(batches)))
        take, queue = queue[: config.batch], queue[config.batch:]
        g = np.zeros_like(params.theta)
        for i in take:
            gi, _ = grad(lambda t: _loss_graph(t, params, batches[i]),
                         params.theta, return_loss=True)
            g += gi
        params.theta, state = adam_step(params.theta, g / config.batch, state, config.lr)
        if step % snap_every == 0 or step == config.steps:
            curve.append(probe_loss(params.theta))
    return params, curve


# -- checkpointing ------------------------------------------------------------

def save_tts(params, path):
    payload = {
        "magic": CKPT_MAGIC,
        "variant": params.variant,
        "dims": params.dims,
        "seed": params.seed,
        "theta": params.theta.tolist(),
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_tts(path):
    try:
        with open(path) as f:
            payload = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError("not a TTS checkpoint: %s" % e)
    if not isinstance(payload, dict) or payload.get("magic") != CKPT_MAGIC:
        raise FormatError("bad checkpoint magic (want %s)" % CKPT_MAGIC)
    if payload.get("variant") not in VARIANTS:
        raise FormatError("unknown variant %r in checkpoint" % (payload.get("variant"),))
    d = payload["dims"]
    params = init_tts(payload["variant"], embed=d["embed"], n_speakers=d["n_speakers"],
                      seed=payload["seed"], char_dim=d["char_dim"],
                      dec_hidden=d["dec_hidden"], gate=d["gate"])
    theta = np.asarray(payload["theta"], dtype=np.float64)
    if theta.shape != params.theta.shape:
        raise FormatError("checkpoint has %d parameters, layout wants %d"
                          % (theta.size, params.theta.size))
    params.theta = theta
    return params
