"""Smoke test for the pydpq extension module.

Build it first:

    cargo build -p dpq-python --features extension-module --release

then run `python3 python/smoke_test.py`. The script imports an installed
`pydpq` if there is one, otherwise the library under target/.
"""

import importlib.util
import math
import pathlib
import sys
import tempfile


def load_pydpq():
    try:
        import pydpq

        return pydpq
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        for name in ("libpydpq.so", "libpydpq.dylib", "pydpq.dll"):
            path = root / "target" / profile / name
            if path.exists():
                spec = importlib.util.spec_from_file_location("pydpq", path)
                module = importlib.util.module_from_spec(spec)
                spec.loader.exec_module(module)
                return module
    sys.exit("pydpq not found; build it with cargo first")


def main():
    dpq = load_pydpq()

    assert dpq.compression_ratio(128, 8, 256) == 64.0
    packed = dpq.pack_code([1, 0, 3, 2], 4)
    assert len(packed) == 1
    assert dpq.unpack_code(packed, 4, 4) == [1, 0, 3, 2]

    vectors, labels = dpq.synthetic(num_classes=3, dim=16, points_per_class=60, spread=0.2, seed=1)
    assert len(vectors) == 180 and len(vectors[0]) == 16

    pq = dpq.ProductQuantizer.train(vectors, 4, 8, seed=1)
    codes = pq.encode(vectors)
    assert all(len(c) == 4 and max(c) < 8 for c in codes)
    err = pq.quantization_error(vectors)
    assert err > 0 and math.isfinite(err)
    hits = pq.search(vectors[0], codes, 5, mode="sym")
    assert len(hits) == 5 and hits[0][1] <= hits[-1][1]

    model = dpq.DpqModel.train(vectors, labels, 2, 4, hidden=16, epochs=20, learning_rate=0.05, seed=2)
    assert model.code_bits == 4
    codes = model.encode(vectors)
    scores = model.class_scores(codes)
    direct = model.predict_scores(vectors)
    assert all(abs(a - b) < 1e-9 for s, d in zip(scores, direct) for a, b in zip(s, d))
    accuracy = sum(max(range(3), key=s.__getitem__) == y for s, y in zip(scores, labels)) / len(labels)
    assert accuracy > 0.9, accuracy

    normalized = model.intra_normalize()
    for row in normalized.soft(vectors[:5]):
        for m in range(2):
            chunk = row[m * 8 : (m + 1) * 8]
            assert abs(math.sqrt(sum(v * v for v in chunk)) - 1.0) < 1e-9

    with tempfile.TemporaryDirectory() as tmp:
        path = pathlib.Path(tmp) / "model.dpqm"
        model.save(str(path))
        again = dpq.DpqModel.load(str(path))
        assert again.encode(vectors) == codes

    try:
        dpq.ProductQuantizer.train(vectors, 4, 6)
    except ValueError as e:
        assert "power of two" in str(e)
    else:
        raise AssertionError("K = 6 accepted")

    records = dpq.run_experiment(
        "classes = 3\ndim = 8\npoints_per_class = 40\nqueries = 20\n"
        "partitions = 2\nclusters = 4\nhidden = 8\nepochs = 3\nseed = 2\n"
    )
    metrics = {(metric, mode) for metric, mode, _, _ in records}
    assert ("map", "dpq-asym") in metrics and ("map", "pq-sym") in metrics

    print(f"pydpq smoke test passed (DPQ train accuracy {accuracy:.3f})")


if __name__ == "__main__":
    main()
