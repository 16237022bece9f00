"""Smoke test of the Python bindings.

Build the extension first:

    cargo build -p ehd-py --release --features extension-module
    python3 python/smoke.py

The module is imported normally when installed, else loaded from
$EHD_PY_LIB or target/release/libehd.so.
"""

import importlib.machinery
import importlib.util
import json
import os
import pathlib
import sys
import tempfile


def load_ehd():
    try:
        import ehd  # noqa: F401

        return sys.modules["ehd"]
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    path = os.environ.get("EHD_PY_LIB", str(root / "target" / "release" / "libehd.so"))
    loader = importlib.machinery.ExtensionFileLoader("ehd", path)
    spec = importlib.util.spec_from_file_location("ehd", path, loader=loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    sys.modules["ehd"] = module
    return module


def main():
    ehd = load_ehd()

    errs = ehd.grad_check(seed=2024, trials=3)
    assert len(errs) == 34 and max(e for _, e in errs) < 1e-4, errs

    seqs, planted = ehd.synth_planted(40, horizon=40.0, seed=1)
    assert len(seqs) == len(planted) == 40
    assert all(len(s) == len(p) for s, p in zip(seqs, planted))
    gaps = [b[1] - a[1] for s in seqs for a, b in zip(s.events, s.events[1:])]
    scale = sum(gaps) / len(gaps)

    toy = ehd.Sequence([(0, 1.0), (1, 2.0), (0, 3.5), (2, 4.0), (1, 6.0), (0, 7.5)], 0.0, 8.0)
    assert len(ehd.sliding_windows([toy], 1, 2)) == 4

    mtpp = ehd.Mtpp(3, scale, layers=1, history=8, intensity=8, seed=0)
    losses = mtpp.train(seqs[:30], steps=120, batch=8, warmup=10)
    head, tail = sum(losses[:10]) / 10, sum(losses[-10:]) / 10
    assert tail < head, (head, tail)

    insts = ehd.sliding_windows(seqs, 4, 10)
    inst = insts[0]
    assert mtpp.dppl(inst.history, inst.history, inst.future, inst.origin()) == 0.0
    lp = mtpp.log_perplexity(inst.future, inst.history, inst.origin())

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "mtpp.ckpt")
        mtpp.save(path)
        again = ehd.Mtpp.load(path)
        assert again.log_perplexity(inst.future, inst.history, inst.origin()) == lp

    span = 14 * scale
    distiller = ehd.Distiller(3, span, seed=0, input=8, hidden=16, qkv=8, heads=2, depth=1, ffn=16)
    trace = distiller.train(mtpp, insts[:200], steps=30, batch=8, warmup=5, log_every=10)
    assert [s for s, _ in trace] == [10, 20, 30]
    assert all(0.0 <= f <= 1.0 for _, f in trace)

    out = distiller.distill(mtpp, inst)
    assert out.card_d == sum(out.y) and len(out.y) == len(inst.history)
    assert abs(out.metric - (out.dppl_d - out.dppl_l)) < 1e-12

    mask, (d, l) = ehd.greedy_search(mtpp, inst, 3)
    assert sum(mask) == 3
    ehd.random_deletion(mtpp, inst, 3, samples=4, seed=0)

    report = json.loads(ehd.evaluate(mtpp, distiller, insts[:8], task="dppl"))
    assert [m["method"] for m in report["methods"]] == ["chd", "gs", "rd"]
    assert report["methods"][0]["summary"]["count"] == 8

    try:
        ehd.Mtpp(0, 1.0)
    except ehd.EhdError as e:
        assert str(e).startswith("[E_CONFIG]"), e
    else:
        raise AssertionError("zero marks accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
