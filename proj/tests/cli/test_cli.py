#!/usr/bin/env python3
"""End-to-end checks of the amimic executable: exit codes, error lines,
config precedence, manifests, determinism, and report values recomputed with
numpy."""
import hashlib
import os
import random
import subprocess
import sys
import tempfile
import unittest

import numpy as np

CLI = None
HERE = os.path.dirname(os.path.abspath(__file__))


def amimic(*args, check=True):
    proc = subprocess.run([CLI, *map(str, args)], capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"amimic {' '.join(map(str, args))} failed:\n{proc.stderr}")
    return proc


def words(n):
    return [f"w{chr(97 + i // 26)}{chr(97 + i % 26)}" for i in range(n)]


def write_space(path, vectors):
    dim = len(next(iter(vectors.values())))
    with open(path, "w") as fh:
        fh.write(f"{len(vectors)} {dim}\n")
        for w, v in vectors.items():
            fh.write(w + " " + " ".join(f"{x:.9g}" for x in v) + "\n")


def read_space(path):
    out = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            parts = line.split()
            out[parts[0]] = np.array([float(x) for x in parts[1:]])
    return out


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        d = cls.dir = cls.tmp.name
        rng = random.Random(0)
        vocab = words(60)
        with open(os.path.join(d, "corpus.txt"), "w") as fh:
            for _ in range(4000):
                fh.write(" ".join(rng.choice(vocab) for _ in range(10)) + "\n")
        write_space(os.path.join(d, "emb.txt"), {w: [rng.gauss(0, 1) for _ in range(6)] for w in vocab})

    def path(self, name):
        return os.path.join(self.dir, name)

    def test_missing_input_is_one_error_line(self):
        p = amimic("train", "--corpus", self.path("absent.txt"), "--embeddings", self.path("emb.txt"),
                   "--out", self.path("x.ck"), check=False)
        self.assertEqual(p.returncode, 1)
        lines = p.stderr.strip().split("\n")
        self.assertEqual(len(lines), 1)
        self.assertTrue(lines[0].startswith("error\tio\t"), lines[0])
        self.assertFalse(os.path.exists(self.path("x.ck")))

    def test_usage_errors(self):
        p = amimic("train", "--corpus", self.path("corpus.txt"), check=False)
        self.assertEqual(p.returncode, 2)
        self.assertTrue(p.stderr.startswith("error\tusage\t"))
        p = amimic("nonsense", check=False)
        self.assertEqual(p.returncode, 2)

    def test_unknown_config_key_is_rejected(self):
        with open(self.path("bad.cfg"), "w") as fh:
            fh.write("# comment\nepochs = 1\nlearning_rat = 0.1\n")
        p = amimic("train", "--config", self.path("bad.cfg"), "--corpus", self.path("corpus.txt"),
                   "--embeddings", self.path("emb.txt"), "--out", self.path("bad.ck"), check=False)
        self.assertEqual(p.returncode, 2)
        self.assertIn("learning_rat", p.stderr)

    def test_flags_override_config(self):
        with open(self.path("t.cfg"), "w") as fh:
            fh.write("epochs = 1\nseed = 4\nmin-frequency = 50\n")
        amimic("train", "--config", self.path("t.cfg"), "--epochs", 2, "--corpus", self.path("corpus.txt"),
               "--embeddings", self.path("emb.txt"), "--out", self.path("cfg.ck"), "--log", self.path("cfg.log"))
        with open(self.path("cfg.log")) as fh:
            self.assertEqual([l.split("\t")[0] for l in fh.read().split("\n") if l], ["1", "2"])
        with open(self.path("cfg.ck.manifest")) as fh:
            self.assertIn("setting\tseed\t4\n", fh.read())

    def test_training_is_deterministic_and_manifested(self):
        outs = []
        for name in ("a.ck", "b.ck"):
            amimic("train", "--corpus", self.path("corpus.txt"), "--embeddings", self.path("emb.txt"),
                   "--out", self.path(name), "--epochs", 2, "--seed", 9, "--min-frequency", 50,
                   "--log", self.path(name + ".log"))
            with open(self.path(name), "rb") as fh:
                outs.append(fh.read())
        self.assertEqual(outs[0], outs[1])
        with open(self.path("a.ck.manifest")) as fh:
            rows = [l.split("\t") for l in fh.read().split("\n") if l]
        inputs = {r[1]: r[3] for r in rows if r[0] == "input"}
        with open(self.path("corpus.txt"), "rb") as fh:
            self.assertEqual(inputs["corpus"], hashlib.sha256(fh.read()).hexdigest())
        self.assertIn(["output", self.path("a.ck"), hashlib.sha256(outs[0]).hexdigest()], rows)

    def test_downsample_leaves_exact_counts(self):
        out = self.path("ds")
        amimic("downsample", "--corpus", self.path("corpus.txt"), "--out-dir", out, "--buckets", 3,
               "--words-per-bucket", 4, "--min-occurrences", 100)
        counts = {}
        with open(os.path.join(out, "corpus.txt")) as fh:
            for line in fh:
                for t in line.split():
                    counts[t] = counts.get(t, 0) + 1
        with open(os.path.join(out, "plan.tsv")) as fh:
            plan = [l.split("\t") for l in fh.read().split("\n") if l]
        self.assertEqual(len(plan), 12)
        for word, bucket, kept in plan:
            self.assertEqual(counts.get(word, 0), 2 ** int(bucket), word)
            self.assertEqual(len(kept.split(",")), 2 ** int(bucket))
        # Reusing the plan reproduces the corpus byte for byte.
        again = self.path("ds2")
        amimic("downsample", "--corpus", self.path("corpus.txt"), "--out-dir", again,
               "--plan", os.path.join(out, "plan.tsv"))
        with open(os.path.join(out, "corpus.txt"), "rb") as a, open(os.path.join(again, "corpus.txt"), "rb") as b:
            self.assertEqual(a.read(), b.read())

    def test_vecmap_scores_match_numpy(self):
        rng = np.random.default_rng(5)
        vocab = words(80)
        gold = {w: rng.normal(size=5) for w in vocab}
        q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        test = {w: q @ v + 0.3 * rng.normal(size=5) for w, v in gold.items()}
        model = {w: rng.normal(size=5) for w in vocab[:6]}
        write_space(self.path("g.txt"), gold)
        write_space(self.path("s.txt"), test)
        write_space(self.path("m.txt"), model)
        plan_words = vocab[:6]
        with open(self.path("plan.tsv"), "w") as fh:
            for i, w in enumerate(plan_words):
                b = i // 3
                fh.write(f"{w}\t{b}\t{','.join(str(k) for k in range(2 ** b))}\n")
        p = amimic("eval-vecmap", "--space", self.path("s.txt"), "--gold", self.path("g.txt"),
                   "--plan", self.path("plan.tsv"), "--model", f"sg={self.path('s.txt')}",
                   "--model", f"m={self.path('m.txt')}")
        rows = {l.split()[0]: [float(x) for x in l.split()[1:]] for l in p.stdout.split("\n")[1:] if l}

        g, s = read_space(self.path("g.txt")), read_space(self.path("s.txt"))
        dictionary = [w for w in vocab if w not in plan_words]
        X = np.array([s[w] for w in dictionary])
        Y = np.array([g[w] for w in dictionary])
        u, _, vt = np.linalg.svd(Y.T @ X)
        W = u @ vt
        for label, space in (("sg", s), ("m", read_space(self.path("m.txt")))):
            for b in range(2):
                cos = [np.dot(W @ space[w], g[w]) / np.linalg.norm(W @ space[w]) / np.linalg.norm(g[w])
                       for w in plan_words[3 * b:3 * b + 3]]
                self.assertAlmostEqual(rows[label][b], 100 * np.mean(cos), delta=0.051)

    def test_vecmap_golden_report(self):
        data = os.path.join(HERE, "data")
        p = amimic("eval-vecmap", "--space", os.path.join(data, "space.txt"), "--gold",
                   os.path.join(data, "gold.txt"), "--plan", os.path.join(data, "plan.tsv"),
                   "--model", f"inferred={os.path.join(data, 'inferred.txt')}")
        with open(os.path.join(data, "vecmap.golden")) as fh:
            self.assertEqual(p.stdout, fh.read())

    def test_single_word_inference_and_trace(self):
        amimic("train", "--corpus", self.path("corpus.txt"), "--embeddings", self.path("emb.txt"),
               "--out", self.path("t.ck"), "--epochs", 1, "--min-frequency", 50, "--log", self.path("t.log"))
        with open(self.path("ctx.txt"), "w") as fh:
            fh.write("waa wab wac novel\nwad novel wae\nnovel waf\n")
        p = amimic("infer", "--checkpoint", self.path("t.ck"), "--embeddings", self.path("emb.txt"),
                   "--word", "novel", "--contexts", self.path("ctx.txt"), "--trace", self.path("trace.tsv"))
        fields = p.stdout.split()
        self.assertEqual(fields[0], "novel")
        self.assertEqual(len(fields), 7)
        with open(self.path("trace.tsv")) as fh:
            weights = [float(l.split("\t")[1]) for l in fh if l.strip()]
        self.assertEqual(len(weights), 3)
        self.assertAlmostEqual(sum(weights), 1.0, places=8)
        p = amimic("infer", "--checkpoint", self.path("t.ck"), "--embeddings", self.path("emb.txt"),
                   "--word", "novel", "--mode", "sideways", check=False)
        self.assertEqual(p.returncode, 2)

    def test_probe_and_similarity_reports(self):
        with open(self.path("probe.tsv"), "w") as fh:
            for i, w in enumerate(words(60)):
                fh.write(f"{w}\t{'pos' if read_space(self.path('emb.txt'))[w][0] > 0 else 'neg'}\n")
        p = amimic("probe", "--train", self.path("probe.tsv"), "--test", self.path("probe.tsv"),
                   "--embeddings", self.path("emb.txt"), "--epochs", 200)
        header, overall = p.stdout.split("\n")[:2]
        self.assertEqual(header, "subset\tcount\taccuracy\tmicro_f1")
        self.assertEqual(overall.split("\t")[:2], ["all", "60"])
        self.assertGreater(float(overall.split("\t")[2]), 0.9)

        emb = read_space(self.path("emb.txt"))
        with open(self.path("sim.tsv"), "w") as fh:
            for a, b in zip(words(30), words(60)[30:]):
                fh.write(f"{a}\t{b}\t{np.dot(emb[a], emb[b]) / np.linalg.norm(emb[a]) / np.linalg.norm(emb[b]):.6f}\n")
        p = amimic("eval-sim", "--benchmark", self.path("sim.tsv"), "--embeddings", self.path("emb.txt"))
        self.assertEqual(p.stdout, "spearman\t1.000000\npairs\t30\n")


if __name__ == "__main__":
    CLI = sys.argv.pop(1)
    unittest.main(verbosity=2)
