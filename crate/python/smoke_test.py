"""Exercise the Python bindings end to end.

Build and install first:  maturin build --release -m crates/python/Cargo.toml
                          pip install target/wheels/flynn-*.whl
"""

import math
import sys

import flynn


def main() -> int:
    train = flynn.Dataset.synthetic(400, 6, 2, clusters_per_class=1, seed=3, class_sep=20.0)
    assert (train.n, train.d, train.num_classes) == (400, 6, 2)

    model = flynn.Model.train(train, m=400, s=3, rho=16, gamma=0.5, seed=11)
    acc = model.accuracy(train)
    label, scores = model.predict(train.row(0))
    assert label in model.labels and len(scores) == 2

    clone = flynn.Model.from_bytes(model.to_bytes())
    assert clone == model
    assert clone.predict_many(train) == model.predict_many(train)

    fed, sent = flynn.Model.train_federated(train, parties=4, m=400, s=3, rho=16, gamma=0.5, seed=11)
    assert fed == model, "federated training must reproduce pooled training"
    dp, dp_sent = flynn.Model.train_federated(
        train, parties=4, m=400, s=3, rho=16, gamma=0.5, seed=11, epsilon=1.0, samples=8
    )
    assert dp_sent < sent

    h = flynn.fly_hash(train.row(0), m=400, s=3, rho=16, seed=11)
    assert len(h) == 16 and h == sorted(h)

    assert flynn.knn_classify(train, train.row(0), 1) == train.labels()[0]

    released = flynn.privatize_counts([5, 0, 2, 9], epsilon=1.0, samples=2, seed=1)
    assert 1 <= len(released) <= 2 and all(v > 0 for _, v in released)

    draws = flynn.sample_laplace(3.0, 20000, seed=2)
    mean_abs = sum(abs(v) for v in draws) / len(draws)
    assert math.isclose(mean_abs, 3.0, rel_tol=0.05), mean_abs

    try:
        model.predict([0.0] * 5)
    except ValueError as e:
        assert "dimension" in str(e)
    else:
        raise AssertionError("wrong input width was accepted")

    print(f"flynn {flynn.__version__}: training accuracy {acc:.3f}, "
          f"federated bytes {sent}, DP bytes {dp_sent}; smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
