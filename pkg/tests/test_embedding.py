import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pose_eval.embedding import (
    EmbeddingVector, Source, cosine_similarity, index_embeddings, read_embedding_set,
    read_external_scores, signclip_score_pp, signclip_score_pt, write_embedding_set,
)
from pose_eval.errors import (
    DimensionMismatch, DuplicateSegment, InconsistentDimension, MalformedFile, SourceMismatch,
    ZeroVector,
)
from pose_eval.stats import Polarity

DATA = Path(__file__).parent / "data"


def pose(*v):
    return EmbeddingVector("x", v, Source.POSE)


def text(*v):
    return EmbeddingVector("x", v, Source.TEXT)


def test_pp_examples():
    assert signclip_score_pp(pose(1, 0), pose(1, 0)) == 1.0
    assert signclip_score_pp(pose(1, 0), pose(0, 1)) == 0.0
    assert signclip_score_pp(pose(1, 2, 3), pose(4, -5, 6)) == 12.0


def test_pt_examples():
    assert signclip_score_pt(text(1, 2, 2), pose(1, 2, 2)) == 9.0
    assert signclip_score_pt(text(0, 0), pose(3, 4)) == 0.0
    with pytest.raises(SourceMismatch):
        signclip_score_pt(pose(1, 0), pose(1, 0))
    with pytest.raises(SourceMismatch):
        signclip_score_pp(text(1, 0), pose(1, 0))


def test_cosine_examples():
    assert cosine_similarity(pose(1, 2), pose(1, 2)) == pytest.approx(1.0)
    assert cosine_similarity(pose(1, 2), pose(-1, -2)) == pytest.approx(-1.0)
    assert cosine_similarity(pose(1, 0), pose(1, 1)) == pytest.approx(math.sqrt(2) / 2)
    with pytest.raises(ZeroVector):
        cosine_similarity(pose(0, 0), pose(1, 1))
    with pytest.raises(DimensionMismatch):
        signclip_score_pp(pose(1, 0), pose(1, 0, 0))


vecs = st.lists(st.floats(-10, 10), min_size=3, max_size=3)


@settings(max_examples=100, deadline=None)
@given(vecs, vecs, st.floats(-5, 5))
def test_bilinear(a, b, alpha):
    lhs = signclip_score_pp(pose(*(alpha * x for x in a)), pose(*b))
    assert lhs == pytest.approx(alpha * signclip_score_pp(pose(*a), pose(*b)), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(vecs, vecs, st.floats(0.01, 100), st.floats(0.01, 100))
def test_cosine_scale_invariant(a, b, alpha, beta):
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    base = cosine_similarity(pose(*a), pose(*b))
    scaled = cosine_similarity(pose(*(alpha * x for x in a)), pose(*(beta * x for x in b)))
    assert scaled == pytest.approx(base, abs=1e-9)


def test_fixture_round_trip(tmp_path):
    vectors = read_embedding_set(DATA / "embeddings_3.csv")
    assert len(vectors) == 3
    write_embedding_set(tmp_path / "e.csv", vectors)
    assert (tmp_path / "e.csv").read_bytes() == (DATA / "embeddings_3.csv").read_bytes()
    assert read_embedding_set(tmp_path / "e.csv") == vectors
    pp = index_embeddings(vectors, "POSE")
    assert set(pp) == {"seg1", "seg2"}
    tt = index_embeddings(vectors, Source.TEXT)
    assert signclip_score_pt(tt["seg1"], pp["seg1"]) == pytest.approx(0.125 - 0.0625 + 0.75)


def test_header_only_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("id,source,v0,v1\n")
    assert read_embedding_set(p) == []


def test_mixed_dims(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("id,source,v0,v1,v2,v3\na,POSE,1,2,3,4\nb,POSE,1,2,3,4,5\n")
    with pytest.raises(InconsistentDimension) as exc:
        read_embedding_set(p)
    assert exc.value.location == "line 3"


def test_embedding_duplicates_and_bad_source(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("id,source,v0\na,POSE,1\na,POSE,2\n")
    with pytest.raises(DuplicateSegment):
        read_embedding_set(p)
    p.write_text("id,source,v0\na,AUDIO,1\n")
    with pytest.raises(MalformedFile):
        read_embedding_set(p)


def test_external_scores(tmp_path):
    p = tmp_path / "lik.csv"
    p.write_text("id,score\nsys1:s1,-12.5\nsys1:s2,-3.0\n")
    ext = read_external_scores(p, "higher")
    assert ext.metric_name == "lik" and ext.polarity is Polarity.HIGHER_BETTER
    assert ext.scores == {"sys1:s1": -12.5, "sys1:s2": -3.0}
    p.write_text("id,score\na,1\na,2\n")
    with pytest.raises(DuplicateSegment):
        read_external_scores(p)
    p.write_text("id,score\n")
    assert read_external_scores(p, Polarity.LOWER_BETTER).empty
    p.write_text("")
    assert read_external_scores(p).empty
    p.write_text("id,score\na,nan\n")
    with pytest.raises(MalformedFile):
        read_external_scores(p)
