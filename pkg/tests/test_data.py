import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pse.dsp import SegmentalConfig, Waveform
from pse.data import (
    ROLE_PREMIX_NOISE,
    ROLE_SPEAKER,
    ROLE_TRAIN_NOISE,
    Clip,
    Corpus,
    MixSpec,
    TrainingExample,
    generate_synthetic_corpus,
    load_corpus,
    load_wav,
    make_mixture,
    make_premixture,
    make_pse_example,
    make_se_example,
    manifest_overlap,
    merge_corpora,
    read_manifest,
    sample_segment,
    save_wav,
    scale_to_snr,
    split_manifest,
    write_manifest,
    WavFormatError,
    WavParseError,
)

CFG = SegmentalConfig()


def toy_corpus(lengths, seed=0, role=ROLE_SPEAKER, label="spk00"):
    rng = np.random.default_rng(seed)
    clips = tuple(
        Clip(f"c{i}", label, Waveform(rng.standard_normal(n) * 0.2))
        for i, n in enumerate(lengths)
    )
    return Corpus(role=role, clips=clips)


def measured_snr(signal, noise):
    return 10 * np.log10(np.dot(signal.samples, signal.samples) / np.dot(noise.samples, noise.samples))


class TestSampleSegment:
    def test_single_exact_clip_always_returned(self):
        corpus = toy_corpus([16000])
        for trial in range(3):
            seg = sample_segment(corpus, np.random.default_rng(trial))
            np.testing.assert_array_equal(seg.samples, corpus.clips[0].waveform.samples)

    def test_fixed_seed_repeats(self):
        corpus = toy_corpus([30000, 20000, 17000])
        a = sample_segment(corpus, np.random.default_rng(99))
        b = sample_segment(corpus, np.random.default_rng(99))
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_short_clip_tiled(self):
        corpus = toy_corpus([8000])
        seg = sample_segment(corpus, np.random.default_rng(0))
        clip = corpus.clips[0].waveform.samples
        np.testing.assert_array_equal(seg.samples, np.concatenate([clip, clip]))

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            sample_segment(Corpus(role=ROLE_SPEAKER, clips=()), np.random.default_rng(0))


class TestScaleToSnr:
    def test_equal_energy_zero_db(self):
        rng = np.random.default_rng(1)
        s = Waveform(rng.standard_normal(1000))
        n = Waveform(np.roll(s.samples, 13))
        scaled = scale_to_snr(s, n, 0.0)
        np.testing.assert_allclose(scaled.samples, n.samples, rtol=1e-12)

    def test_equal_energy_twenty_db(self):
        rng = np.random.default_rng(2)
        s = Waveform(rng.standard_normal(1000))
        n = Waveform(np.roll(s.samples, 7))
        scaled = scale_to_snr(s, n, 20.0)
        np.testing.assert_allclose(scaled.samples, 0.1 * n.samples, rtol=1e-12)

    @given(st.integers(0, 2**31), st.floats(-20, 40))
    @settings(max_examples=40, deadline=None)
    def test_output_hits_requested_snr(self, seed, snr):
        rng = np.random.default_rng(seed)
        s = Waveform(rng.standard_normal(500) + 0.01)
        n = Waveform(rng.standard_normal(500) + 0.01)
        scaled = scale_to_snr(s, n, snr)
        assert abs(measured_snr(s, scaled) - snr) < 1e-9

    def test_zero_energy_rejected(self):
        s = Waveform(np.ones(10))
        with pytest.raises(ValueError):
            scale_to_snr(s, Waveform(np.zeros(10)), 5.0)
        with pytest.raises(ValueError):
            scale_to_snr(Waveform(np.zeros(10)), s, 5.0)


class TestMixing:
    def test_zero_premix_noise_rejected(self):
        s = Waveform(np.ones(100))
        with pytest.raises(ValueError):
            make_premixture(s, Waveform(np.zeros(100)), 10.0)

    def test_high_snr_premixture_close_to_speech(self):
        rng = np.random.default_rng(3)
        s = Waveform(rng.standard_normal(16000))
        m = Waveform(rng.standard_normal(16000))
        prem = make_premixture(s, m, 30.0)
        rel = np.linalg.norm(prem.samples - s.samples) / np.linalg.norm(s.samples)
        assert abs(rel - 10 ** (-30 / 20)) < 1e-12

    def test_additivity_exact(self):
        rng = np.random.default_rng(4)
        s = Waveform(rng.standard_normal(16000))
        m = Waveform(rng.standard_normal(16000))
        scaled = scale_to_snr(s, m, 6.0)
        prem = make_premixture(s, m, 6.0)
        # exact sample-wise addition: the premixture is bit-equal to one add
        np.testing.assert_array_equal(prem.samples, s.samples + scaled.samples)

    def test_mixture_chain_composes(self):
        rng = np.random.default_rng(5)
        s = Waveform(rng.standard_normal(16000))
        m = Waveform(rng.standard_normal(16000))
        n = Waveform(rng.standard_normal(16000))
        prem = make_premixture(s, m, 8.0)
        mix = make_mixture(prem, n, -2.0)
        scaled_m = scale_to_snr(s, m, 8.0)
        scaled_n = scale_to_snr(prem, n, -2.0)
        np.testing.assert_array_equal(mix.samples, prem.samples + scaled_n.samples)
        np.testing.assert_allclose(
            mix.samples, s.samples + scaled_m.samples + scaled_n.samples, atol=1e-14
        )


class TestExamples:
    def setup_method(self):
        self.speaker = generate_synthetic_corpus(ROLE_SPEAKER, 4, 32000, 0, seed=11)
        self.premix = generate_synthetic_corpus(ROLE_PREMIX_NOISE, 4, 32000, seed=12)
        self.noise = generate_synthetic_corpus(ROLE_TRAIN_NOISE, 4, 32000, seed=13)
        self.spec = MixSpec(seed=21)

    def test_pse_example_structure(self):
        ex = make_pse_example(self.speaker, self.premix, self.noise, self.spec, 0, CFG)
        injected = Waveform(ex.mixture.samples - ex.target.samples)
        snr = measured_snr(ex.target, injected)
        low, high = self.spec.mix_snr_range
        assert low <= snr <= high
        premix_noise = Waveform(ex.target.samples - ex.clean_reference().samples)
        premix_snr = measured_snr(ex.clean_reference(), premix_noise)
        plow, phigh = self.spec.premix_snr_range
        assert plow <= premix_snr <= phigh
        assert len(ex.snr_labels) == 63

    def test_pse_example_matches_replayed_draws_exactly(self):
        # replay the documented draw order to recover the injected noises
        from pse.data import sample_segment

        spec, index = self.spec, 2
        ex = make_pse_example(self.speaker, self.premix, self.noise, spec, index, CFG)
        rng = np.random.default_rng([spec.seed, index])
        s = sample_segment(self.speaker, rng, spec.segment_length)
        m = sample_segment(self.premix, rng, spec.segment_length)
        premix_snr = float(rng.uniform(*spec.premix_snr_range))
        scaled_m = scale_to_snr(s, m, premix_snr)
        n = sample_segment(self.noise, rng, spec.segment_length)
        mix_snr = float(rng.uniform(*spec.mix_snr_range))
        np.testing.assert_array_equal(ex.clean_reference().samples, s.samples)
        np.testing.assert_array_equal(ex.target.samples, s.samples + scaled_m.samples)
        scaled_n = scale_to_snr(ex.target, n, mix_snr)
        np.testing.assert_array_equal(ex.mixture.samples, ex.target.samples + scaled_n.samples)

    def test_se_example_target_is_clean(self):
        ex = make_se_example(self.speaker, self.noise, self.spec, 3, CFG)
        np.testing.assert_array_equal(ex.target.samples, ex.clean_reference().samples)

    def test_streams_bit_identical_per_seed_and_index(self):
        for i in (0, 5):
            a = make_pse_example(self.speaker, self.premix, self.noise, self.spec, i)
            b = make_pse_example(self.speaker, self.premix, self.noise, self.spec, i)
            np.testing.assert_array_equal(a.mixture.samples, b.mixture.samples)
            np.testing.assert_array_equal(a.target.samples, b.target.samples)
        a = make_pse_example(self.speaker, self.premix, self.noise, self.spec, 0)
        b = make_pse_example(self.speaker, self.premix, self.noise, self.spec, 1)
        assert not np.array_equal(a.mixture.samples, b.mixture.samples)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            TrainingExample(Waveform(np.ones(10)), Waveform(np.ones(11)))

    def test_missing_clean_reference_raises(self):
        ex = TrainingExample(Waveform(np.ones(10)), Waveform(np.ones(10)))
        with pytest.raises(ValueError):
            ex.clean_reference()


class TestSyntheticCorpus:
    def test_same_seed_bit_identical(self):
        a = generate_synthetic_corpus(ROLE_SPEAKER, 3, 24000, 1, seed=5)
        b = generate_synthetic_corpus(ROLE_SPEAKER, 3, 24000, 1, seed=5)
        for x, y in zip(a.clips, b.clips):
            np.testing.assert_array_equal(x.waveform.samples, y.waveform.samples)

    def test_speech_has_silence_gaps(self):
        corpus = generate_synthetic_corpus(ROLE_SPEAKER, 5, 32000, 2, seed=6)
        for clip in corpus.clips:
            x = clip.waveform.samples
            quiet = np.mean(np.abs(x) < 0.01 * np.abs(x).max())
            assert quiet >= 0.10

    def test_speaker_profiles_spectrally_distinct(self):
        def mean_centroid(profile):
            corpus = generate_synthetic_corpus(ROLE_SPEAKER, 4, 32000, profile, seed=7)
            cents = []
            for clip in corpus.clips:
                mag = np.abs(np.fft.rfft(clip.waveform.samples))
                freqs = np.fft.rfftfreq(len(clip.waveform), 1 / 16000)
                cents.append(float((freqs * mag).sum() / mag.sum()))
            return np.mean(cents)

        c0, c1 = mean_centroid(0), mean_centroid(1)
        assert abs(c0 - c1) / min(c0, c1) >= 0.10

    def test_noise_families_distinct_tilt(self):
        def mean_centroid(role):
            corpus = generate_synthetic_corpus(role, 3, 32000, seed=8)
            cents = []
            for clip in corpus.clips:
                mag = np.abs(np.fft.rfft(clip.waveform.samples))
                freqs = np.fft.rfftfreq(len(clip.waveform), 1 / 16000)
                cents.append(float((freqs * mag).sum() / mag.sum()))
            return np.mean(cents)

        assert mean_centroid(ROLE_PREMIX_NOISE) < 0.8 * mean_centroid(ROLE_TRAIN_NOISE)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            generate_synthetic_corpus(ROLE_SPEAKER, 0, 16000)
        with pytest.raises(ValueError):
            generate_synthetic_corpus("bogus-role", 1, 16000)


class TestWavIO:
    def test_round_trip_sample_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        w = Waveform(np.clip(rng.standard_normal(5000) * 0.2, -1.0, 0.999))
        path = tmp_path / "x.wav"
        save_wav(path, w)
        loaded = load_wav(path)
        save_wav(tmp_path / "y.wav", loaded)
        np.testing.assert_array_equal(load_wav(tmp_path / "y.wav").samples, loaded.samples)

    def test_quantization_convention(self, tmp_path):
        w = Waveform(np.array([-1.0, 32767.0 / 32768.0]))
        path = tmp_path / "q.wav"
        save_wav(path, w)
        loaded = load_wav(path)
        assert loaded.samples[0] == -1.0
        assert loaded.samples[1] == 32767.0 / 32768.0

    def test_wrong_rate_rejected(self, tmp_path):
        import wave

        path = tmp_path / "hi.wav"
        with wave.open(str(path), "wb") as f:
            f.setnchannels(1)
            f.setsampwidth(2)
            f.setframerate(44100)
            f.writeframes(b"\x00\x00" * 100)
        with pytest.raises(WavFormatError):
            load_wav(path)

    def test_stereo_rejected(self, tmp_path):
        import wave

        path = tmp_path / "st.wav"
        with wave.open(str(path), "wb") as f:
            f.setnchannels(2)
            f.setsampwidth(2)
            f.setframerate(16000)
            f.writeframes(b"\x00\x00\x00\x00" * 100)
        with pytest.raises(WavFormatError):
            load_wav(path)

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"not a riff file at all, sorry")
        with pytest.raises(WavParseError):
            load_wav(path)


class TestManifests:
    def test_round_trip(self, tmp_path):
        entries = [("a/x.wav", "spk00"), ("a/y.wav", "spk00")]
        path = tmp_path / "m.tsv"
        write_manifest(path, entries)
        assert read_manifest(path) == entries
        raw = path.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")

    def test_load_corpus_resolves_relative_paths(self, tmp_path):
        corpus = generate_synthetic_corpus(ROLE_SPEAKER, 2, 16000, 0, seed=10)
        (tmp_path / "clips").mkdir()
        entries = []
        for clip in corpus.clips:
            rel = f"clips/{clip.clip_id}.wav"
            save_wav(tmp_path / rel, clip.waveform)
            entries.append((rel, clip.label))
        write_manifest(tmp_path / "m.tsv", entries)
        loaded = load_corpus(tmp_path / "m.tsv", ROLE_SPEAKER)
        assert loaded.speaker_id == "spk00"
        assert len(loaded) == 2

    def test_split_disjoint_and_complete(self, tmp_path):
        entries = [(f"c{i}.wav", "spk01") for i in range(10)]
        write_manifest(tmp_path / "all.tsv", entries)
        split_manifest(tmp_path / "all.tsv", tmp_path / "tr.tsv", tmp_path / "ev.tsv", 0.8)
        train = read_manifest(tmp_path / "tr.tsv")
        evale = read_manifest(tmp_path / "ev.tsv")
        assert len(train) == 8 and len(evale) == 2
        assert manifest_overlap(train, evale) == []
        assert sorted(train + evale) == sorted(entries)

    def test_overlap_detection(self):
        a = [("x.wav", "s"), ("y.wav", "s")]
        b = [("y.wav", "s"), ("z.wav", "s")]
        assert manifest_overlap(a, b) == ["y.wav"]


def test_merge_corpora_pools_clips():
    a = generate_synthetic_corpus(ROLE_SPEAKER, 2, 16000, 0, seed=1)
    b = generate_synthetic_corpus(ROLE_SPEAKER, 3, 16000, 1, seed=1)
    merged = merge_corpora([a, b])
    assert len(merged) == 5


def test_mixspec_validation():
    with pytest.raises(ValueError):
        MixSpec(premix_snr_range=(10.0, 0.0))
    with pytest.raises(ValueError):
        MixSpec(segment_length=0)
