"""Model serialization: manifest schema, weight blob layout, round-trips."""

import json

import numpy as np
import pytest

from faststyle import (
    GraphBuilder,
    ModelFormatError,
    count_params,
    execute,
    load_model,
    load_model_dir,
    save_model,
    save_model_dir,
)
from builders import random_images, synthetic_googlenet


def small_graph(rng):
    gb = GraphBuilder(input_shape=(1, 3, 8, 8))
    c = gb.conv2d("c", "image", rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
                  bias=rng.standard_normal(4).astype(np.float32), padding=1)
    r = gb.relu("r", c)
    return gb.graph([r])


class TestRoundTrip:
    def test_execution_matches_after_roundtrip(self, rng):
        g = small_graph(rng)
        manifest, weights = save_model(g)
        g2 = load_model(manifest, weights)
        for x in random_images(rng, 5, shape=(1, 3, 8, 8)):
            a = execute(g, x)["r"].data
            b = execute(g2, x)["r"].data
            assert np.array_equal(a, b)

    def test_weights_roundtrip_byte_identical(self, rng):
        g, _ = synthetic_googlenet(rng)
        manifest, weights = save_model(g)
        manifest2, weights2 = save_model(load_model(manifest, weights))
        assert weights == weights2
        assert manifest == manifest2

    def test_param_count_invariant(self, rng):
        g, _ = synthetic_googlenet(rng)
        g2 = load_model(*save_model(g))
        assert count_params(g2) == count_params(g)

    def test_dir_roundtrip(self, rng, tmp_path):
        g = small_graph(rng)
        save_model_dir(g, tmp_path / "m")
        g2 = load_model_dir(tmp_path / "m")
        x = random_images(rng, 1, shape=(1, 3, 8, 8))[0]
        assert np.array_equal(execute(g, x)["r"].data, execute(g2, x)["r"].data)

    def test_pruned_graph_roundtrip_preserves_counts(self, rng):
        from faststyle import count_flops, prune_graph

        g, _ = synthetic_googlenet(rng)
        pruned, report = prune_graph(g, random_images(rng, 4))
        reloaded = load_model(*save_model(pruned))
        assert count_params(reloaded) == report.params_after
        assert count_flops(reloaded) == report.flops_after

    def test_preprocessing_survives(self, rng):
        from faststyle import Preprocessing

        gb = GraphBuilder(
            input_shape=(1, 3, 8, 8),
            preprocessing=Preprocessing(np.array([0.485, 0.456, 0.406]), np.array([0.229, 0.224, 0.225])),
        )
        c = gb.conv2d("c", "image", np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1))
        g = gb.graph([c])
        g2 = load_model(*save_model(g))
        x = random_images(rng, 1, shape=(1, 3, 8, 8))[0]
        assert np.array_equal(execute(g, x)["c"].data, execute(g2, x)["c"].data)


class TestFormatErrors:
    def test_blob_past_eof_names_the_blob(self, rng):
        g = small_graph(rng)
        manifest, weights = save_model(g)
        with pytest.raises(ModelFormatError, match=r"blob 'weight'"):
            load_model(manifest, weights[:-8])

    def test_overlapping_blobs_rejected(self, rng):
        g = small_graph(rng)
        manifest, weights = save_model(g)
        doc = json.loads(manifest)
        doc["nodes"][0]["params"]["weight"]["offset"] = 0  # collide with bias
        with pytest.raises(ModelFormatError, match="overlap"):
            load_model(json.dumps(doc).encode(), weights)

    def test_total_bytes_must_tile_file(self, rng):
        g = small_graph(rng)
        manifest, weights = save_model(g)
        with pytest.raises(ModelFormatError, match="cover"):
            load_model(manifest, weights + b"\x00\x00\x00\x00")

    def test_unknown_top_level_field_rejected(self, rng):
        manifest, weights = save_model(small_graph(rng))
        doc = json.loads(manifest)
        doc["license"] = "mit"
        with pytest.raises(ModelFormatError, match="unknown fields"):
            load_model(json.dumps(doc).encode(), weights)

    def test_unknown_node_field_rejected(self, rng):
        manifest, weights = save_model(small_graph(rng))
        doc = json.loads(manifest)
        doc["nodes"][0]["comment"] = "hi"
        with pytest.raises(ModelFormatError, match="unknown fields"):
            load_model(json.dumps(doc).encode(), weights)

    def test_wrong_version_rejected(self, rng):
        manifest, weights = save_model(small_graph(rng))
        doc = json.loads(manifest)
        doc["format_version"] = 99
        with pytest.raises(ModelFormatError, match="format_version"):
            load_model(json.dumps(doc).encode(), weights)

    def test_not_json(self):
        with pytest.raises(ModelFormatError, match="JSON"):
            load_model(b"not json at all", b"")

    def test_invalid_graph_reported(self, rng):
        manifest, weights = save_model(small_graph(rng))
        doc = json.loads(manifest)
        doc["outputs"] = ["ghost"]
        with pytest.raises(ModelFormatError, match="invalid graph"):
            load_model(json.dumps(doc).encode(), weights)
