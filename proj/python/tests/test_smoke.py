import json
import math

import numpy as np
import pytest

import lyricsync


def test_lyrics_to_ipa_marks_words_and_lines():
    seq = lyricsync.lyrics_to_ipa("hello world\nsing a song")
    assert seq["sentence_starts"] == [0, seq["word_starts"][2]]
    assert len(seq["word_starts"]) == 5
    assert all(0 <= t < lyricsync.vocabulary_size() for t in seq["tokens"])


def test_empty_lyrics_raise():
    with pytest.raises(lyricsync.LyricsyncError, match="EmptyLyrics"):
        lyricsync.lyrics_to_ipa("  \n ")


def test_wav_to_mel_shape():
    rate = 16000
    t = np.arange(rate, dtype=np.float32) / rate
    mel = lyricsync.wav_to_mel(0.5 * np.sin(2 * np.pi * 440 * t), rate)
    assert mel.ndim == 2 and mel.shape[1] == 80
    assert mel.shape[0] == pytest.approx(rate / 512, abs=2)
    stacked = lyricsync.stack_frames(mel, 4)
    assert stacked.shape == (math.ceil(mel.shape[0] / 4), 320)


def test_metrics():
    ref = [1.0, 2.0, 3.0]
    pred = [1.1, 2.0, 2.5]
    assert lyricsync.mae(ref, pred) == pytest.approx(0.2)
    assert lyricsync.medae(ref, pred) == pytest.approx(0.1)
    assert lyricsync.mauch(ref, pred, 0.2) == pytest.approx(2 / 3)
    # Words cover 1.0 to 3.5 s (last word gets the default 0.5 s) of a 4 s song.
    assert lyricsync.perc(ref, ref, 4.0) == pytest.approx(2.5 / 4.0)
    p, r, f1 = lyricsync.f1_from_confusion(8, 2, 2)
    assert (p, r, f1) == pytest.approx((0.8, 0.8, 0.8))
    with pytest.raises(ValueError):
        lyricsync.mae([1.0], [])


def test_toy_models_align_a_synthetic_song(tmp_path):
    song = lyricsync.synth_corpus(1, seed=4)[0]
    sentence = lyricsync.AlignerModel.toy("sentence", 4, seed=1)
    word = lyricsync.AlignerModel.toy("word", 4, seed=2)
    path = str(tmp_path / "word.lswt")
    word.save(path)
    assert lyricsync.AlignerModel.load(path).version == word.version

    tokens = lyricsync.lyrics_to_ipa(song["lyrics"], "ipa")["tokens"]
    probs = word.align(tokens, song["features"])
    assert probs.shape == (len(tokens), song["features"].shape[0])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    result = lyricsync.align_song(song["id"], song["features"], song["lyrics"], sentence, word, language="ipa")
    assert len(result["words"]) == len(song["word_onsets"])
    assert result == lyricsync.align_song(song["id"], song["features"], song["lyrics"], sentence, word,
                                          language="ipa")


def test_run_cli(tmp_path):
    code, out, err = lyricsync.run_cli(["synth", "--n", "2", "--out", str(tmp_path / "c")])
    assert code == 0, err
    lines = (tmp_path / "c" / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 2 and "id" in json.loads(lines[0])
    assert lyricsync.run_cli(["frobnicate"])[0] == 1
