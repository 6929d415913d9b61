import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from langdiar.annot import parse_rttm
from langdiar.audio import AudioBuffer, read_wav
from langdiar.errors import ConfigError, InsufficientAudioError
from langdiar.synth import (
    SourcePool,
    SynthParams,
    generate_corpus,
    generate_dataset,
    generate_utterance,
    load_pool,
    read_manifest,
    toy_pools,
)


def cheap_pools(sr=100, seconds=60):
    # durations do not depend on content; a low rate keeps large runs fast
    rng = np.random.default_rng(0)
    return (
        SourcePool("A", [AudioBuffer(rng.normal(size=sr * seconds), sr) for _ in range(2)]),
        SourcePool("B", [AudioBuffer(rng.normal(size=sr * seconds), sr) for _ in range(2)]),
    )


@pytest.fixture(scope="module")
def toy():
    return toy_pools(seed=0, clip_seconds=10.0, clips_per_pool=3)


def test_one_change(toy):
    audio, ann = generate_utterance(*toy, SynthParams(1, 1), np.random.default_rng(0))
    assert len(ann) == 2
    assert {t.label for t in ann} == {"A", "B"}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reference_invariants(seed):
    pools = cheap_pools(sr=1000)
    rng = np.random.default_rng(seed)
    params = SynthParams(crossfade_ms=float(rng.integers(0, 20)))
    audio, ann = generate_utterance(*pools, params, rng)
    assert sum(t.duration for t in ann) == pytest.approx(audio.duration, abs=1e-9)
    assert all(a.end == pytest.approx(b.onset) for a, b in zip(ann.turns, ann.turns[1:]))
    assert all(a.label != b.label for a, b in zip(ann.turns, ann.turns[1:]))
    assert 1 <= len(ann) - 1 <= 5


def test_segment_statistics_4000():
    anns = [ann for _, ann in generate_corpus(*cheap_pools(), SynthParams(seed=0))]
    durations = [t.duration for a in anns for t in a]
    assert 4.7 <= np.mean(durations) <= 5.3
    ks = np.array([len(a) - 1 for a in anns])
    counts = np.bincount(ks, minlength=6)[1:]
    assert counts.sum() == 4000
    assert chisquare(counts).pvalue > 0.001


def test_ratio_option():
    params = SynthParams(min_changes=5, max_changes=5, num_utterances=300, ratio=4.0, seed=3)
    anns = [ann for _, ann in generate_corpus(*cheap_pools(), params)]
    a = np.mean([t.duration for x in anns for t in x if t.label == "A"])
    b = np.mean([t.duration for x in anns for t in x if t.label == "B"])
    assert a / b == pytest.approx(4.0, rel=0.05)


def test_insufficient_audio():
    tiny = SourcePool("A", [AudioBuffer(np.ones(100), 100)])
    with pytest.raises(InsufficientAudioError):
        generate_utterance(tiny, tiny, SynthParams(), np.random.default_rng(0))


def test_bad_params():
    with pytest.raises(ConfigError):
        SynthParams(min_changes=3, max_changes=2)


def test_dataset_files_and_determinism(tmp_path, toy):
    params = SynthParams(num_utterances=10, seed=42)
    generate_dataset(*toy, params, tmp_path / "a")
    generate_dataset(*toy, params, tmp_path / "b", jobs=2)
    wavs = sorted(p.name for p in (tmp_path / "a" / "wav").iterdir())
    assert len(wavs) == 10
    for name in wavs:
        assert (tmp_path / "a" / "wav" / name).read_bytes() == (tmp_path / "b" / "wav" / name).read_bytes()
    for name in ("ref.rttm", "manifest.txt"):
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()
    refs = parse_rttm(tmp_path / "a" / "ref.rttm")
    manifest = read_manifest(tmp_path / "a" / "manifest.txt")
    assert len(refs) == len(manifest) == 10
    for entry in manifest:
        audio = read_wav(tmp_path / "a" / "wav" / f"{entry.utterance_id}.wav")
        assert entry.num_changes == len(refs[entry.utterance_id]) - 1
        assert refs[entry.utterance_id].end == pytest.approx(audio.duration, abs=1e-3)


def test_load_pool(tmp_path, toy):
    generate_dataset(*toy, SynthParams(num_utterances=2), tmp_path)
    pool = load_pool(tmp_path / "wav", "X")
    assert pool.label == "X" and len(pool.clips) == 2
    with pytest.raises(ConfigError):
        load_pool(tmp_path)
