import numpy as np
import pytest

from patchrbm import (ClassRbmParams, RbmParams, StructureSpec, build_structure,
                      dense_structure, load_checkpoint, save_checkpoint)
from patchrbm.checkpoint import CheckpointError, describe_checkpoint
from patchrbm.training import init_params


def as_f4(x):
    return np.asarray(x, dtype="<f4").astype(np.float64)


class TestGenerativeRoundTrip:
    def test_patch_model(self, tmp_path):
        s = build_structure(StructureSpec(blocks=((3, 2), (4, 2)), grid=(28, 28)))
        p = init_params(s, seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(p, path)
        q = load_checkpoint(path)
        assert isinstance(q, RbmParams)
        assert q.structure.spec_string() == "M(3,2;4,2)"
        assert (q.n_v, q.n_h, q.structure.nnz) == (784, 265, 16493)
        np.testing.assert_array_equal(q.w, as_f4(p.w))
        np.testing.assert_array_equal(q.a, as_f4(p.a))
        np.testing.assert_array_equal(q.b, as_f4(p.b))

    def test_dense_model_without_grid(self, tmp_path):
        p = init_params(dense_structure(50, 7), seed=1)
        path = tmp_path / "dense.ckpt"
        save_checkpoint(p, path)
        q = load_checkpoint(path)
        assert (q.n_v, q.n_h) == (50, 7)
        np.testing.assert_array_equal(q.w, as_f4(p.w))

    def test_resave_is_byte_identical(self, tmp_path):
        s = build_structure(StructureSpec(blocks=((2, 2),), grid=(10, 10)))
        p = init_params(s, seed=2)
        first = tmp_path / "a.ckpt"
        second = tmp_path / "b.ckpt"
        save_checkpoint(p, first)
        save_checkpoint(load_checkpoint(first), second)
        assert first.read_bytes() == second.read_bytes()


class TestClassifierRoundTrip:
    def test_version_distinguishes_kinds(self, tmp_path):
        s = build_structure(StructureSpec(blocks=((1, 1),), grid=(4, 4)))
        pc = init_params(s, seed=3, n_classes=5)
        path = tmp_path / "clf.ckpt"
        save_checkpoint(pc, path)
        q = load_checkpoint(path)
        assert isinstance(q, ClassRbmParams)
        assert q.n_classes == 5
        np.testing.assert_array_equal(q.u, as_f4(pc.u))
        np.testing.assert_array_equal(q.c, as_f4(pc.c))
        np.testing.assert_array_equal(q.base.w, as_f4(pc.base.w))

    def test_describe(self, tmp_path):
        s = build_structure(StructureSpec(blocks=((4, 2),), grid=(28, 28)))
        path = tmp_path / "m.ckpt"
        save_checkpoint(init_params(s, seed=0, n_classes=10), path)
        info = describe_checkpoint(path)
        assert info["kind"] == "classifier"
        assert info["n_h"] == 121
        assert info["nnz"] == 9604
        assert info["n_weights"] == 9604 + 10 * 121
        assert info["n_biases"] == 784 + 121 + 10


class TestCorruptFiles:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        s = dense_structure(6, 3)
        p = init_params(s, seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(p, path)
        clipped = tmp_path / "clipped.ckpt"
        clipped.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(clipped)
