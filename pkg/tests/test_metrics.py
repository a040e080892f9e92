import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pointmatch.core import PseudoLabel
from pointmatch.metrics import confusion_matrix, miou, pseudolabel_accuracy


def test_identity_prediction_is_diagonal():
    gt = np.array([0, 1, 2, 2, 1, 0, 0])
    conf = confusion_matrix(gt, gt, 3)
    assert np.array_equal(conf, np.diag([3, 2, 2]))
    assert conf.sum() == 7


def test_all_wrong_into_one_class():
    gt = np.array([0, 0, 2, 2])
    conf = confusion_matrix(np.ones(4, int), gt, 3)
    assert conf[:, 1].sum() == 4 and conf.sum() == 4
    assert not np.delete(conf, 1, axis=1).any()


def test_confusion_loop():
    rng = np.random.default_rng(0)
    pred, gt = rng.integers(0, 4, 50), rng.integers(0, 4, 50)
    expected = np.zeros((4, 4), int)
    for p, g in zip(pred, gt):
        expected[g, p] += 1
    assert np.array_equal(confusion_matrix(pred, gt, 4), expected)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0], 2)


def test_perfect_miou():
    gt = np.array([0, 1, 2, 0])
    assert miou(confusion_matrix(gt, gt, 3)).miou == 1.0


def test_iou_definition():
    conf = np.zeros((2, 2), int)
    conf[0, 0] = 5   # TP for class 0
    conf[1, 0] = 5   # FP for class 0
    report = miou(conf)
    assert report.per_class_iou[0] == 0.5
    assert report.per_class_iou[1] == 0.0


def test_absent_classes_excluded():
    conf = np.zeros((4, 4), int)
    conf[0, 0] = 3
    conf[1, 1] = 1
    report = miou(conf)
    assert report.per_class_iou[2] is None and report.per_class_iou[3] is None
    assert report.miou == 1.0


def test_all_undefined_rejected():
    with pytest.raises(ValueError):
        miou(np.zeros((3, 3), int))


def test_miou_loop():
    conf = np.random.default_rng(1).integers(0, 20, (5, 5))
    report = miou(conf)
    vals = []
    for c in range(5):
        tp = conf[c, c]
        fp = sum(conf[r, c] for r in range(5) if r != c)
        fn = sum(conf[c, k] for k in range(5) if k != c)
        vals.append(tp / (tp + fp + fn))
        assert report.per_class_iou[c] == pytest.approx(vals[-1], rel=1e-15)
    assert report.miou == pytest.approx(sum(vals) / 5, rel=1e-15)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_off_diagonal_count_lowers_some_iou(c, seed):
    rng = np.random.default_rng(seed)
    base = np.diag(rng.integers(1, 10, c))
    i, j = rng.choice(c, 2, replace=False)
    worse = base.copy()
    worse[i, j] += 1
    a, b = miou(base), miou(worse)
    assert a.miou == 1.0
    assert b.per_class_iou[i] < 1.0 and b.per_class_iou[j] < 1.0


def test_report_table_lists_every_class():
    report = miou(confusion_matrix([0, 1, 1], [0, 1, 0], 3))
    lines = report.table().splitlines()
    assert lines[0].startswith("class") and lines[-1].startswith("mIoU") and len(lines) == 5


class TestPseudoAccuracy:
    def test_perfect(self):
        gt = np.array([0, 1, 2])
        assert pseudolabel_accuracy(PseudoLabel(gt, np.ones(3, bool), np.ones(3)), gt) == (1.0, 1.0, 1.0)

    def test_empty_mask(self):
        gt = np.array([0, 1, 2, 2])
        masked, unmasked, rate = pseudolabel_accuracy(PseudoLabel([0, 1, 0, 0], np.zeros(4, bool), np.ones(4)), gt)
        assert masked is None and unmasked == 0.5 and rate == 0.0

    def test_loop(self):
        rng = np.random.default_rng(2)
        cls, gt, mask = rng.integers(0, 3, 40), rng.integers(0, 3, 40), rng.random(40) < 0.4
        hits = [int(c == g) for c, g in zip(cls, gt)]
        m_hits = [h for h, m in zip(hits, mask) if m]
        masked, unmasked, rate = pseudolabel_accuracy(PseudoLabel(cls, mask, np.ones(40)), gt)
        assert masked == pytest.approx(sum(m_hits) / len(m_hits))
        assert unmasked == pytest.approx(sum(hits) / 40)
        assert rate == pytest.approx(mask.sum() / 40)
