"""Regenerate tests/fixtures/reference_metrics.json from the reference runs.

Runs the colored-shapes separation config and the attribute-supervised
sprites config at acceptance scale and freezes the achieved metrics. Takes
around 20 CPU-minutes; run from the repo root:

    python scripts/make_reference_fixture.py
"""

import json
import time
from pathlib import Path

from sepclr import datagen, encoders, evaluate, losses, train

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "reference_metrics.json"

ATTR_WEIGHTS = dict(beta=1.0, lambda_ind=0.5, sigma_attr=0.1)
ATTR_COUNTS = dict(n_bg=4000, n_tg=4000)


def colored_shapes_reference():
    ds = datagen.gen_colored_shapes(8000, 8000, seed=0)
    enc = encoders.EncoderPair.build(input_dim=ds.input_dim, init_seed=0)
    cfg = train.TrainConfig(epochs=50, seed=0)
    started = time.perf_counter()
    enc, history = train.train(ds, enc, cfg)
    runtime = time.perf_counter() - started
    out = {}
    for space in ("proj", "repr"):
        report = evaluate.evaluate(enc, ds, space=space)
        cells = {
            "hue_from_salient": report.cell("hue", "salient").value,
            "hue_from_common": report.cell("hue", "common").value,
            "shape_from_common": report.cell("shape", "common").value,
            "shape_from_salient": report.cell("shape", "salient").value,
        }
        out["cells" if space == "proj" else "cells_prehead"] = cells
    out["component_drop"] = {
        key: history[0][key] / max(history[-1][key], 1e-12)
        for key in ("align", "infoless")
    }
    out["train_runtime_s"] = runtime
    out["config"] = {"n_bg": 8000, "n_tg": 8000, "epochs": 50, "seed": 0,
                     "batch_size": train.TrainConfig().batch_size,
                     "weights": "spec defaults"}
    return out


def attr_sprites_reference():
    ds = datagen.gen_attr_sprites(seed=0, **ATTR_COUNTS)
    held_out = datagen.gen_attr_sprites(1000, 1000, seed=100)
    enc = encoders.EncoderPair.build(input_dim=ds.input_dim, salient_dim=5, init_seed=0)
    weights = losses.LossWeights(**ATTR_WEIGHTS)
    cfg = train.TrainConfig(epochs=50, seed=0, mode="attribute_supervised", weights=weights)
    started = time.perf_counter()
    enc, _ = train.train(ds, enc, cfg)
    runtime = time.perf_counter() - started
    tg = held_out.indices(1)
    emb = enc.embed(held_out.inputs[tg])
    per_dim, avg = evaluate.mig_score(emb["s_proj"], held_out.attributes[tg])
    return {
        "mig_average": avg,
        "mig_per_attribute": dict(zip(held_out.attribute_names, per_dim)),
        "train_runtime_s": runtime,
        "weights": ATTR_WEIGHTS,
        **ATTR_COUNTS,
    }


def main():
    doc = {
        "colored_shapes_reference": colored_shapes_reference(),
        "attr_sprites_reference": attr_sprites_reference(),
    }
    FIXTURE.parent.mkdir(parents=True, exist_ok=True)
    FIXTURE.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(json.dumps(doc, indent=2, sort_keys=True))
    print(f"\nwrote {FIXTURE}")


if __name__ == "__main__":
    main()
