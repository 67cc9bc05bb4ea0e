"""Smoke test for the emoprobe extension module.

Build and run:
    maturin develop --release   (or: pip install target/wheels/emoprobe-*.whl)
    python python/smoke_test.py
"""

import os
import tempfile

import emoprobe

FILLERS = ["today", "again", "at work", "with my friend", "last night", "honestly"]


def write_corpus(path, per_split=(6, 3, 2)):
    lines = ["id\tsplit\tlabel\ttext"]
    n = 0
    for split, count in zip(("train", "dev", "test"), per_split):
        for emotion in emoprobe.EMOTIONS:
            for k in range(count):
                n += 1
                filler = FILLERS[(n * 7 + k) % len(FILLERS)]
                lines.append(f"d{n:05}\t{split}\t{emotion}\tfeeling {emotion} {filler}, so {emotion}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        corpus_path = os.path.join(tmp, "corpus.tsv")
        write_corpus(corpus_path)
        corpus = emoprobe.Corpus.load(corpus_path)
        assert len(corpus) == 32 * 11
        assert corpus.labels == sorted(emoprobe.EMOTIONS)
        count, mean, std = corpus.stats("dev")
        assert count == 96 and mean > 0 and std >= 0

        trn = corpus.hash_encode("trn", dim=128, seed=0)
        dev = corpus.hash_encode("dev", dim=128, seed=0)
        assert trn.dim == 128 and len(trn) == 192

        emb_path = os.path.join(tmp, "dev.emb1")
        dev.write(emb_path)
        again = emoprobe.Embeddings.read(emb_path)
        assert again.ids == dev.ids and again.rows() == dev.rows()

        net = emoprobe.ProbingNetwork(
            corpus.labels, layer_dims=emoprobe.parse_preset("32:16"), heads=2,
            input_dim=128, learning_rate=0.01, epochs=30, seed=0,
        )
        history = net.fit(trn, corpus.gold("trn"), dev, corpus.gold("dev"))
        assert len(history) == 30
        accuracy, confusion, _ = net.evaluate(dev, corpus.gold("dev"))
        assert accuracy > 0.5, accuracy
        assert sum(map(sum, confusion)) == len(dev)

        probs = net.predict_proba(dev.rows()[0])
        assert abs(sum(probs) - 1.0) < 1e-9

        model_path = os.path.join(tmp, "m.prb1")
        net.save(model_path)
        loaded = emoprobe.ProbingNetwork.load(model_path)
        assert loaded.labels == net.labels and loaded.predict_proba(dev.rows()[0]) == probs

        tiny = emoprobe.ProbingNetwork(["a", "b", "c"], layer_dims=[4], heads=2, input_dim=6, seed=1)
        assert tiny.grad_check([0.3, -0.1, 0.8, 0.0, 0.5, -0.7], 2) <= 1e-4

        embeddings = net.emotion_embeddings(dev, corpus.gold("dev"))
        assert len(embeddings) == 32
        wheel = emoprobe.emotion_wheel(embeddings, list(emoprobe.DEFAULT_BASICS), min_cos=0.1)
        assert all(0.1 <= w <= 0.9 and cos >= 0.1 for _, _, _, w, cos in wheel)

        pad = emoprobe.augment_pad(embeddings, corpus.labels, max_epochs=300)
        predicted = sorted(row[0] for row in pad if row[4] == "predicted")
        assert predicted == [
            "anticipating", "apprehensive", "confident", "disappointed", "faithful",
            "jealous", "nostalgic", "prepared", "sentimental", "trusting",
        ], predicted
        assert all(-1 < v < 1 for row in pad if row[4] == "predicted" for v in row[1:4])

        try:
            emoprobe.Embeddings.read(corpus_path)
        except emoprobe.EmoprobeError:
            pass
        else:
            raise AssertionError("reading a TSV as EMB1 should fail")

    print("smoke test passed")


if __name__ == "__main__":
    main()
