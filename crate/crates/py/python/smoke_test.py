"""Smoke test for the compiled `hoverpost` module.

Build and run from the repository root:

    cargo build -p hoverpost-py --release --features extension-module
    cp target/release/libhoverpost.so /tmp/hoverpost.so
    PYTHONPATH=/tmp python3 crates/py/python/smoke_test.py
"""

import numpy as np

import hoverpost


def two_disks(size=64):
    rr, cc = np.mgrid[:size, :size]
    inst = np.zeros((size, size), dtype=np.uint32)
    inst[(rr - 20) ** 2 + (cc - 20) ** 2 <= 64] = 1
    inst[(rr - 40) ** 2 + (cc - 44) ** 2 <= 81] = 2
    return inst


def main():
    print("hoverpost", hoverpost.__version__)
    inst = two_disks()
    classes = {1: 1, 2: 2}

    np_mask, hv, tp = hoverpost.gen_targets(inst, classes)
    assert np_mask.dtype == np.uint8 and hv.shape == inst.shape + (2,)
    assert set(np.unique(tp)) == {0, 1, 2}

    np_probs = np.where(np_mask > 0, 0.95, 0.05).astype(np.float32)
    labels = hoverpost.instance_segment(np_probs, hv)
    assert labels.dtype == np.uint32 and len(np.unique(labels)) == 3

    tp_probs = np.full(inst.shape + (3,), 0.025, dtype=np.float32)
    for k in range(3):
        tp_probs[..., k][tp == k] = 0.95
    cls, probs = hoverpost.classify_instances(labels, tp_probs)
    assert sorted(cls.values()) == [1, 2], cls

    labels2, records = hoverpost.postprocess_tile(np_probs, hv, tp_probs)
    assert np.array_equal(labels, labels2) and len(records) == 2
    assert all(len(r["contour"]) > 3 for r in records)

    pq = hoverpost.panoptic_quality(inst, labels)
    assert pq["pq"] > 0.95, pq
    mpq, per_class = hoverpost.multiclass_pq(inst, classes, labels, cls, [1, 2, 3])
    assert per_class[3] is None and mpq > 0.95
    cents = [r["centroid"] for r in records]
    assert hoverpost.detection_f1(cents, cents) == 1.0

    rng = np.random.default_rng(0)
    shape = inst.shape
    student = [rng.normal(size=shape + (c,)).astype(np.float32) for c in (2, 2, 3)]
    teacher = [rng.normal(size=shape + (c,)).astype(np.float32) for c in (2, 2, 3)]
    b = hoverpost.loss(*student, *teacher, inst, classes, alpha=0.5, temperature=3.0)
    assert abs(b["combined"] - 0.5 * (b["student_total"] + b["distill_total"])) < 1e-12
    b2, (d_np, d_hv, d_tp) = hoverpost.loss_grad(*student, *teacher, inst, classes, alpha=0.5, temperature=3.0)
    assert b2 == b and d_np.shape == shape + (2,) and d_tp.shape == shape + (3,)
    assert np.isfinite(d_hv).all()

    try:
        hoverpost.instance_segment(np.asfortranarray(np_probs), hv)
    except ValueError as e:
        assert "contiguous" in str(e)
    else:
        raise AssertionError("non-contiguous input was accepted")
    try:
        hoverpost.instance_segment(np_probs[:32], hv)
    except ValueError as e:
        assert "shape" in str(e)
    else:
        raise AssertionError("mismatched shapes were accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
