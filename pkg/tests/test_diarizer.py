import numpy as np
import pytest

from conftest import random_filter
from wpeloc.diarizer import (
    DiarizeConfig, KnownCount, StftConfig, Threshold, ahc_cluster, ahc_merges, diarize,
    score_matrix, score_matrix_with_failures, segment_windows,
)
from wpeloc.metrics import der
from wpeloc.pairscore import ScoreModel, pair_features
from wpeloc.roomsim import RoomSpec, image_rir
from wpeloc.synth import speech_like
from wpeloc.timeline import Timeline
from wpeloc.wpe import WpeConfig, WpeFilter

MODEL = ScoreModel(0.01, 0.05, 50.0, lda_w=(1.0, 0.05), lda_b=-0.5, score_floor=-7.0)


def speech(rows, rec="r"):
    return Timeline.from_tuples(rec, [("speech", s, e) for s, e in rows])


def test_segment_windows_examples():
    cfg = DiarizeConfig(window=4.0, shift=0.5)
    assert segment_windows(speech([(0, 4.0)]), cfg) == [(0, 4.0)]
    assert segment_windows(speech([(0, 5.0)]), cfg) == [(0, 4.0), (0.5, 4.5), (1.0, 5.0)]
    assert segment_windows(speech([(0, 1.0)]), cfg, min_duration=0.2) == [(0, 1.0)]


def test_segment_windows_tails():
    cfg = DiarizeConfig(window=4.0, shift=2.0)
    # tail after the last full window is 2.5 s long: kept as its own window
    assert segment_windows(speech([(0, 8.5)]), cfg) == [(0, 4), (2, 6), (4, 8), (6, 8.5)]
    # tail of 1.5 s: merged into the previous window
    assert segment_windows(speech([(0, 7.5)]), cfg) == [(0, 4), (2, 6), (4, 7.5)]


def test_segment_windows_skips_tiny_regions(caplog):
    cfg = DiarizeConfig(window=4.0, shift=0.5)
    out = segment_windows(speech([(0, 0.05), (1.0, 5.0)]), cfg, min_duration=0.12)
    assert out[0] == (1.0, 5.0) and len(out) == 1
    assert "too short" in caplog.text
    with pytest.raises(ValueError):
        segment_windows(Timeline("r", []), cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        DiarizeConfig(window=1.0, shift=2.0)
    with pytest.raises(ValueError):
        KnownCount(0)
    with pytest.raises(ValueError):
        Threshold(float("nan"))


def test_min_duration_from_wpe_frames():
    d = StftConfig().min_duration(WpeConfig(), 16000)
    assert d == pytest.approx((256 + 128 * 13) / 16000)


def block_matrix():
    m = np.full((6, 6), -5.0)
    for block in ([0, 1, 4], [2, 3, 5]):
        for i in block:
            for j in block:
                m[i, j] = 5.0
    np.fill_diagonal(m, np.inf)
    return m


def test_ahc_blocks():
    m = block_matrix()
    expected = [0, 0, 1, 1, 0, 1]
    assert ahc_cluster(m, KnownCount(2)) == expected
    assert ahc_cluster(m, Threshold(0.0)) == expected


def test_ahc_hand_trace():
    s = np.array([
        [np.inf, 5, 1, 0],
        [5, np.inf, 2, -1],
        [1, 2, np.inf, 4],
        [0, -1, 4, np.inf],
    ], dtype=float)
    # {0,1} at 5; {2,3} at 4; then the pair of clusters at (1+0+2-1)/4
    assert ahc_merges(s) == [(0, 1, 5.0), (2, 3, 4.0), (0, 2, 0.5)]
    assert ahc_cluster(s, Threshold(1.0)) == [0, 0, 1, 1]
    assert ahc_cluster(s, KnownCount(3)) == [0, 0, 1, 2]


def test_ahc_tie_break_lowest_pair():
    s = np.ones((4, 4))
    assert [m[:2] for m in ahc_merges(s)] == [(0, 1), (0, 2), (0, 3)]


def test_ahc_extreme_thresholds(rng):
    a = rng.standard_normal((7, 7))
    m = a + a.T
    assert ahc_cluster(m, Threshold(np.inf)) == list(range(7))
    assert ahc_cluster(m, Threshold(-np.inf)) == [0] * 7
    assert ahc_cluster(m, KnownCount(10)) == list(range(7))
    assert ahc_cluster(np.zeros((1, 1)), KnownCount(1)) == [0]


def test_ahc_permutation_equivariance(rng):
    a = rng.standard_normal((9, 9))
    m = a + a.T
    perm = rng.permutation(9)
    base = ahc_cluster(m, KnownCount(3))
    permuted = ahc_cluster(m[np.ix_(perm, perm)], KnownCount(3))
    # same partition, possibly under different cluster names
    pairs_base = {(i, j) for i in range(9) for j in range(9) if base[i] == base[j]}
    pairs_perm = {(perm[i], perm[j]) for i in range(9) for j in range(9) if permuted[i] == permuted[j]}
    assert pairs_base == pairs_perm


def test_score_matrix_entries(rng):
    filters = [random_filter(rng, 3, 129) for _ in range(3)]
    m = score_matrix(filters, MODEL)
    assert np.all(np.isinf(np.diag(m)))
    for i in range(3):
        for j in range(3):
            if i != j:
                assert m[i, j] == pair_features(filters[i], filters[j], MODEL).fused
    off = ~np.eye(3, dtype=bool)
    assert np.max(np.abs(m[off] - m.T[off])) < 1e-9


def test_identical_filters_score_highest(rng):
    f = random_filter(rng, 3, 129)
    others = [random_filter(rng, 3, 129) for _ in range(4)]
    m = score_matrix([f, f] + others, MODEL)
    off = m[~np.eye(6, dtype=bool)]
    assert m[0, 1] == off.max()


def test_score_floor_on_failure(rng, caplog):
    f = random_filter(rng, 3, 17)
    dead = WpeFilter(np.zeros((3, 17)), f.config, f.power)
    model = ScoreModel(0.01, 0.05, 5.0, delay_bins=32, score_floor=-7.0)
    m, failures = score_matrix_with_failures([f, dead, f], model)
    assert failures == 2 and m[0, 1] == -7.0 and m[1, 2] == -7.0
    score_matrix([f, dead, f], model)
    assert "no comparable energy" in caplog.text


@pytest.fixture(scope="module")
def single_talker():
    room = RoomSpec((5.0, 4.0, 3.0), rt60=0.4)
    rir = image_rir(room, (1.5, 1.2, 1.5), (3.5, 2.5, 1.2)).taps
    x = np.convolve(speech_like(9.0, seed=4), rir)[:9 * 16000]
    return x, speech([(0.5, 4.0), (4.6, 9.0)])


def test_single_speaker_known_count_one(single_talker):
    audio, sp = single_talker
    hyp = diarize(audio, sp, DiarizeConfig(cluster_mode=KnownCount(1)), model=MODEL)
    assert hyp.labels == ["spk0"]
    ref = Timeline.from_tuples("r", [("A", 0.5, 4.0), ("A", 4.6, 9.0)])
    assert der(ref, hyp).der == 0.0


def test_hypothesis_covers_speech(single_talker):
    audio, sp = single_talker
    hyp = diarize(audio, sp, DiarizeConfig(window=2.0, shift=0.5, cluster_mode=KnownCount(2)),
                  model=MODEL)
    assert abs(hyp.speech_regions().total_duration() - sp.total_duration()) <= 128 / 16000


def test_chunk_len_of_full_duration_is_unchunked(single_talker):
    audio, sp = single_talker
    base = diarize(audio, sp, DiarizeConfig(window=2.0, cluster_mode=KnownCount(2)), model=MODEL)
    chunked = diarize(audio, sp, DiarizeConfig(window=2.0, cluster_mode=KnownCount(2),
                                               chunk_len=len(audio) / 16000), model=MODEL)
    assert chunked.entries == base.entries


def test_chunked_labels_are_namespaced(single_talker):
    audio, sp = single_talker
    hyp = diarize(audio, sp, DiarizeConfig(window=2.0, cluster_mode=KnownCount(1), chunk_len=4.5),
                  model=MODEL)
    assert hyp.labels == ["c0_spk0", "c1_spk0"]


def test_no_windows_gives_empty_hypothesis(caplog):
    hyp = diarize(np.zeros(16000), speech([(0.1, 0.15)]), DiarizeConfig(), model=MODEL)
    assert len(hyp) == 0 and "empty hypothesis" in caplog.text


def test_model_required():
    with pytest.raises(ValueError):
        diarize(np.zeros(16000), speech([(0, 1)]))
