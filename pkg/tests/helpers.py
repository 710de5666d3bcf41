"""Shared builders for the test suite."""

import numpy as np

from emorag import EmbeddingDatabase, EmotionEmbedding, IntensityLevel, UtteranceRecord

LEVELS = (IntensityLevel.WEAK, IntensityLevel.NORMAL, IntensityLevel.STRONG)


def build_db(vectors, labels=None, intensities=None, ids=None, transcripts=None, audio_refs=None):
    """Assemble a database from row vectors plus optional per-record metadata."""
    vectors = np.asarray(vectors, dtype=np.float32)
    n = vectors.shape[0]
    if labels is None:
        labels = [f"label{i % 3}" for i in range(n)]
    if intensities is None:
        intensities = [LEVELS[i % 3] for i in range(n)]
    if ids is None:
        ids = [f"rec{i}" for i in range(n)]
    if transcripts is None:
        transcripts = ["" for _ in range(n)]
    if audio_refs is None:
        audio_refs = [None for _ in range(n)]
    records = tuple(
        UtteranceRecord(
            id=ids[i],
            emotion_label=labels[i],
            intensity=intensities[i],
            embedding=EmotionEmbedding(vectors[i]),
            transcript=transcripts[i],
            audio_ref=audio_refs[i],
        )
        for i in range(n)
    )
    return EmbeddingDatabase(dim=int(vectors.shape[1]), records=records)


def random_db(rng, n=None, dim=None, n_labels=3, with_metadata=True):
    """A random gaussian database; optionally with messy unicode metadata."""
    if n is None:
        n = int(rng.integers(1, 40))
    if dim is None:
        dim = int(rng.integers(2, 16))
    vectors = rng.standard_normal((n, dim)).astype(np.float32)
    labels = [f"emo{int(rng.integers(n_labels))}" for _ in range(n)]
    intensities = [LEVELS[int(rng.integers(3))] for _ in range(n)]
    words = ("hello", "世界", "grüß", "åå", "x y z", "")
    transcripts = None
    audio_refs = None
    if with_metadata:
        transcripts = [words[int(rng.integers(len(words)))] for _ in range(n)]
        audio_refs = [
            f"wav/{i}.wav" if rng.random() < 0.5 else None for i in range(n)
        ]
    return build_db(
        vectors,
        labels=labels,
        intensities=intensities,
        transcripts=transcripts,
        audio_refs=audio_refs,
    )
