import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import softmax2
from traitdistill.augmenter import LabelDescriptionSet, load_label_descriptions
from traitdistill.contrastive import ASPECTS, ZeroVectorError
from traitdistill.encoder import TinyEncoder
from traitdistill.labelspace import embed_labels, soft_label, soft_labels

D = torch.float64


class TableEncoder:
    """Encoder stub returning fixed vectors per text."""

    def __init__(self, table):
        self.table = table

    def encode(self, texts):
        return torch.stack([torch.as_tensor(self.table[t], dtype=D) for t in texts])


def _descs(fn):
    return LabelDescriptionSet([[{a: fn(t, j, a) for a in ASPECTS} for j in range(2)] for t in range(4)])


def test_embed_labels_shape_and_mean():
    descs = load_label_descriptions()
    enc = TinyEncoder(dim=5, seed=1, dtype=D)
    V = embed_labels(descs, enc)
    assert V.shape == (4, 2, 5)
    expected = enc.encode([descs.entries[2][1][a] for a in ASPECTS]).mean(0)
    torch.testing.assert_close(V[2, 1], expected)
    assert not V.requires_grad


def test_embed_labels_identical_aspects():
    descs = _descs(lambda t, j, a: f"pole {t} {j}")
    enc = TinyEncoder(dim=4, seed=0, dtype=D)
    V = embed_labels(descs, enc)
    torch.testing.assert_close(V[1, 0], enc.encode(["pole 1 0"])[0])


def test_zero_label_embedding_is_caught_downstream(caplog):
    e = [1.0, 2.0]
    table = {}
    for t in range(4):
        for j in range(2):
            for k, a in enumerate(ASPECTS):
                table[f"{t}{j}{a}"] = [[1.0, 0.5], [0.2, 1.0], [0.3, 0.3]][k] if (t, j) != (0, 0) else [e, [-x for x in e], [0.0, 0.0]][k]
    with caplog.at_level("WARNING"):
        V = embed_labels(_descs(lambda t, j, a: f"{t}{j}{a}"), TableEncoder(table))
    assert torch.equal(V[0, 0], torch.zeros(2, dtype=D))
    assert "zero vector" in caplog.text
    with pytest.raises(ZeroVectorError):
        soft_label(torch.tensor([1.0, 1.0], dtype=D), V[0], torch.tensor([1.0, 0.0]), 4.0)


def test_missing_description_rejected():
    with pytest.raises(ValueError):
        LabelDescriptionSet([[{"semantic": "x", "sentiment": "", "linguistic": "z"}] * 2] * 4)


def test_soft_label_equal_similarity_alpha4():
    u = torch.tensor([1.0, 1.0], dtype=D)
    V_t = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=D)
    y_s, y_c = soft_label(u, V_t, torch.tensor([1.0, 0.0]), 4.0)
    torch.testing.assert_close(y_s, torch.tensor([0.5, 0.5], dtype=D))
    # softmax(4.5, 0.5) = (1/(1+e^-4), ...)
    assert y_c[0].item() == pytest.approx(1 / (1 + math.exp(-4)), abs=1e-12)
    assert y_c[0].item() == pytest.approx(0.98201, abs=1e-5)
    assert y_c[1].item() == pytest.approx(0.01799, abs=1e-5)


def test_soft_label_alpha0_is_uniform_for_equal_similarity():
    u = torch.tensor([1.0, 1.0], dtype=D)
    V_t = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=D)
    _, y_c = soft_label(u, V_t, torch.tensor([0.0, 1.0]), 0.0)
    torch.testing.assert_close(y_c, torch.tensor([0.5, 0.5], dtype=D))


def test_soft_label_orthogonal_poles():
    V_t = torch.tensor([[2.0, 0.0], [0.0, 3.0]], dtype=D)
    y_s, _ = soft_label(torch.tensor([1.0, 0.0], dtype=D), V_t, torch.tensor([1.0, 0.0]), 4.0)
    assert y_s[0].item() == pytest.approx(softmax2(1.0, 0.0)[0], abs=1e-12)
    assert y_s[0].item() == pytest.approx(0.73106, abs=1e-5)
    assert y_s[1].item() == pytest.approx(0.26894, abs=1e-5)


def test_soft_label_infinite_alpha_is_onehot():
    U = torch.randn(3, 4, dtype=D)
    V = torch.randn(4, 2, 4, dtype=D)
    Y = torch.nn.functional.one_hot(torch.randint(0, 2, (3, 4)), 2).to(D)
    _, y_c = soft_labels(U, V, Y, float("inf"))
    assert torch.equal(y_c, Y)


def test_soft_labels_are_detached():
    U = torch.randn(2, 3, dtype=D, requires_grad=True)
    V = torch.randn(4, 2, 3, dtype=D)
    Y = torch.tensor([[[1.0, 0.0]] * 4] * 2, dtype=D)
    y_s, y_c = soft_labels(U, V, Y, 4.0)
    assert not y_s.requires_grad and not y_c.requires_grad


vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).filter(lambda v: sum(x * x for x in v) > 1e-4)


@settings(max_examples=100, deadline=None)
@given(vec, vec, vec, st.integers(0, 1), st.floats(0, 20))
def test_simplex_and_limits(u, v0, v1, pole, alpha):
    y_t = torch.tensor([1.0 - pole, float(pole)])
    V_t = torch.tensor([v0, v1], dtype=D)
    y_s, y_c = soft_label(torch.tensor(u, dtype=D), V_t, y_t, alpha)
    assert y_s.sum().item() == pytest.approx(1.0, abs=1e-9)
    assert y_c.sum().item() == pytest.approx(1.0, abs=1e-9)
    assert ((y_s > 0) & (y_s < 1)).all()
    _, y10 = soft_label(torch.tensor(u, dtype=D), V_t, y_t, 10.0)
    assert y10[pole].item() > 0.99
    # swapping the poles swaps the outputs
    y_s2, y_c2 = soft_label(torch.tensor(u, dtype=D), V_t.flip(0), y_t.flip(0), alpha)
    torch.testing.assert_close(y_s2, y_s.flip(0))
    torch.testing.assert_close(y_c2, y_c.flip(0))


def test_monotone_in_pole0_similarity():
    # unit u = (x, 0.3, rest): cos with v0 = x rises while cos with v1 stays 0.3
    V_t = torch.tensor([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=D)
    values = []
    for x in torch.linspace(-0.9, 0.9, 25, dtype=D).tolist():
        u = torch.tensor([x, 0.3, math.sqrt(1 - x * x - 0.09)], dtype=D)
        _, y_c = soft_label(u, V_t, torch.tensor([0.0, 1.0]), 4.0)
        values.append(y_c[0].item())
    assert all(b > a for a, b in zip(values, values[1:]))
