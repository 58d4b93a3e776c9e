"""Hierarchical lyrics-to-audio alignment."""

import json

from ._lyricsync import (
    AlignerModel,
    LyricsyncError,
    f1_from_confusion,
    lyrics_to_ipa,
    mae,
    mauch,
    medae,
    perc,
    run_cli,
    stack_frames,
    synth_corpus,
    vocabulary_size,
    wav_to_mel,
)
from ._lyricsync import align_song as _align_song

__all__ = [
    "AlignerModel",
    "LyricsyncError",
    "align_song",
    "f1_from_confusion",
    "lyrics_to_ipa",
    "mae",
    "mauch",
    "medae",
    "perc",
    "run_cli",
    "stack_frames",
    "synth_corpus",
    "vocabulary_size",
    "wav_to_mel",
]


def align_song(song_id, features, lyrics, sentence, word, language="en", monotonic=False):
    """Run the sentence-then-word cascade and return the alignment as a dict."""
    text = _align_song(song_id, features, lyrics, language=language, sentence=sentence, word=word,
                       monotonic=monotonic)
    return json.loads(text)
