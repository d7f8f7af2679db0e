"""Smoke test for the qagen extension module.

Build the module first, for example with `maturin develop -m crates/python/Cargo.toml`,
or copy target/debug/libqagen.so to qagen.so somewhere on PYTHONPATH.
"""

import json
import pathlib
import sys
import tempfile

import qagen

ROOT = pathlib.Path(__file__).resolve().parents[3]
EXAMPLES_DIR = ROOT / "crates" / "core" / "fixtures" / "worked_examples"


def main():
    assert qagen.normalize_answer("The  Denver Broncos!") == "denver broncos"
    assert qagen.exact_match("the bison", "Bison") == 1
    assert abs(qagen.token_f1("large bovid", "a large bovid mammal") - 0.8) < 1e-9
    assert qagen.score_prediction("1729", ["in 1729", "1729"]) == (1, 1.0)
    assert qagen.clip_context("a  b\nc d", 3) == "a b c"
    assert qagen.build_prompt(" Why? ").endswith("question: Why?")
    assert qagen.align_answer_span("Café au lait", "au") == ("au", 5)
    assert qagen.align_answer_span("abc", "zz") is None

    seed = qagen.Dataset.load(EXAMPLES_DIR / "seed.json")
    assert len(seed) == 4 and seed.issues() == []
    assert seed.stats()["num_contexts"] == 4
    report = seed.evaluate({"seed-3": "1729"}, "NYT")
    assert report["em"] == 25.0 and len(report["missing_predictions"]) == 3

    with tempfile.TemporaryDirectory() as tmp:
        config = json.loads((EXAMPLES_DIR / "config.json").read_text())
        for key in ("input", "replay"):
            config[key] = str(EXAMPLES_DIR / config[key])
        config["run_root"] = tmp
        path = pathlib.Path(tmp) / "config.json"
        path.write_text(json.dumps(config))
        manifest = qagen.generate(path)
        assert manifest["counts"]["kept"] == 8, manifest
        generated = qagen.Dataset.load(pathlib.Path(manifest["run_dir"]) / "generated.json")

    mixed, sampled = qagen.mix(seed, generated, 1.0, 7)
    assert len(mixed) == 8 and len(sampled) == 4
    assert qagen.mix(seed, generated, 1.0, 7)[1] == sampled

    try:
        qagen.mix(seed, generated, 3.0, 7)
    except qagen.QagenError as e:
        assert "too small" in str(e)
    else:
        raise AssertionError("undersized pool accepted")

    print("qagen smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
