"""Regenerate the binary/CSV fixtures in this directory.

    python tests/data/make_fixtures.py

The files are committed; this script documents how they were made.
"""

from pathlib import Path

import numpy as np

from pose_eval.embedding import EmbeddingVector, Source, write_embedding_set
from pose_eval.pose import PoseSequence, write_pose_file
from pose_eval.selections import holistic_header

HERE = Path(__file__).parent


def two_hands_25fps() -> PoseSequence:
    rng = np.random.default_rng(25)
    header = holistic_header(fps=25.0)
    coords = rng.uniform(-1, 1, (10, header.total_points, 2)).astype(np.float32)
    conf = rng.uniform(0.05, 1, (10, header.total_points)).astype(np.float32)
    conf[:2, 501:543] = 0.0  # hands not yet visible
    conf[-1, 522:543] = 0.0
    return PoseSequence(header, coords.astype(np.float64), conf.astype(np.float64))


def main() -> None:
    write_pose_file(two_hands_25fps(), HERE / "two_hands_25fps.posec")
    write_embedding_set(HERE / "embeddings_3.csv", [
        EmbeddingVector("seg1", [0.5, -0.25, 1.0, 0.0], Source.POSE),
        EmbeddingVector("seg1", [0.25, 0.25, 0.75, -0.5], Source.TEXT),
        EmbeddingVector("seg2", [1.0, 2.0, 3.0, 4.0], Source.POSE),
    ])


if __name__ == "__main__":
    main()
