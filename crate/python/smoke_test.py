"""Quick end-to-end check of the Python bindings."""

import os
import tempfile

import pyssdcnn as s


def main():
    assert s.variants() == ["imdcnn", "ssdcnn8", "nn8", "ssdcnn"]

    text, shapes = s.parse_architecture("28*32*32 -100C3ReLU -MP2 -100C2ReLU -MP2")
    assert shapes[-1] == [100, 7, 7], shapes
    assert s.parse_architecture(text)[0] == text

    dot = s.eight_direction([[[3.0, 4.0]]])
    assert len(dot) == 512 and not any(dot)

    train, test = s.synth_dataset(5, 12, 4, seed=7)
    assert len(train) == 60 and len(test) == 20
    assert train.alphabet()[:2] == ["cross-hv", "cross-vh"]

    model, losses = s.train(train, "nn8", phase1_epochs=6, phase2_epochs=2, batch_size=10)
    assert len(losses) == 2 and len(losses[0]) == 6
    print("losses", [round(l, 3) for l in losses[0] + losses[1]])

    p = model.evaluate(test, [1, 3, 5])
    assert p[5] == 1.0 and p[1] <= p[3] <= p[5], p
    print("P@k", p)

    ink = train.strokes(0)
    cands = model.recognize(ink, k=3)
    assert len(cands) == 3
    assert cands[0][2] >= cands[1][2] >= cands[2][2]
    print("top-3", cands)

    maps = model.feature_maps(ink)
    assert (maps["depth"], maps["size"], len(maps["dir"])) == (28, 32, 512)
    populated = sum(1 for m in maps["stack"] if any(m))
    assert populated == len(ink), populated

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.ssdc")
        model.save(path)
        back = s.Recognizer.load(path)
        assert back.recognize(ink, k=3) == cands
        assert back.info() == model.info()
        test.save(os.path.join(d, "t.ink"))
        assert len(s.Dataset.load(os.path.join(d, "t.ink"))) == 20

    try:
        s.Recognizer.from_bytes(b"nope")
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("bad checkpoint accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
