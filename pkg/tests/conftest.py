from __future__ import annotations

import random

import pytest
from hypothesis import strategies as st

from vmlab.cfg import build_cfg
from vmlab.ir import builtin_programs
from vmlab.roles import KINDS
from vmlab.virtualizer import optimize, virtualize


def random_cfg(rng: random.Random, n_blocks: int, max_out: int = 8, name: str = "g"):
    """Random graph with dense ids 0..n-1, each block naming up to ``max_out`` distinct successors."""
    blocks = []
    for bid in range(n_blocks):
        k = rng.randint(0, min(max_out, n_blocks))
        succs = rng.sample(range(n_blocks), k)
        instrs = [f"mov r{rng.randrange(16)}, {rng.randrange(-50, 50)}" for _ in range(rng.randint(0, 4))]
        blocks.append((bid, instrs, succs))
    return build_cfg(name, blocks)


@st.composite
def cfgs(draw, max_blocks: int = 50, min_blocks: int = 1):
    n = draw(st.integers(min_blocks, max_blocks))
    seed = draw(st.integers(0, 2**32 - 1))
    max_out = draw(st.integers(0, 8))
    return random_cfg(random.Random(seed), n, max_out)


@pytest.fixture(scope="session")
def bench_artifacts():
    """All 18 builtin artifacts keyed by (program, kind, opt)."""
    out = {}
    for prog in builtin_programs():
        for kind in KINDS:
            base = virtualize(prog, kind, 0, 0)
            out[(prog.name, kind, 0)] = base
            out[(prog.name, kind, 1)] = optimize(base)
    return out
