import numpy as np
import pytest

from rankqp import build_qp_instance
from rankqp.barrier import BlockDomain


def random_lowrank_instance(rng, n=30, k=3, m=2, c_scale=1.0, box=(0.0, 1.0)):
    """Random PSD low-rank box QP with a strictly feasible interior point."""
    G = rng.normal(size=(n, k))
    A = rng.normal(size=(m, n)) if m else None
    z = rng.uniform(box[0] + 0.3 * (box[1] - box[0]),
                    box[0] + 0.7 * (box[1] - box[0]), size=n)
    b = A @ z if m else []
    c = c_scale * rng.normal(size=n)
    blocks = [BlockDomain.box(*box)] * n
    return build_qp_instance(c=c, A=A, b=b, blocks=blocks, U=G, V=G)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
