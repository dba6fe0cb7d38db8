"""Counter-based random numbers for reproducible Monte Carlo.

Every Gaussian increment consumed by a simulation is addressed by
(path seed, step index, component), never by draw order.  A path owns a
Philox stream keyed by two words derived from its 64-bit seed, and step
``s`` reads from counter block ``s * blocks_per_step`` onward.  Because the
mapping is positional, an ensemble can be cut into arbitrary path blocks
and time chunks, on any number of workers, and still produce bitwise
identical numbers.

Seed derivation uses the splitmix64 output function, which gives a stable,
well-mixed 64-bit hash independent of numpy's internal seeding helpers.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Philox-4x64 emits 4 words of 64 bits per counter increment.
_WORDS_PER_BLOCK = 4
_INV_2_53 = float(2.0**-53)


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 output function on uint64 arrays (wraparound arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def splitmix64(seed: int, index) -> np.ndarray | np.uint64:
    """Return output(s) of the splitmix64 stream seeded with ``seed``.

    ``index`` may be an integer or an integer array; entry ``k`` is the
    (k+1)-th output of the stream, i.e. mix(seed + (k+1)*gamma).
    """
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + (idx + np.uint64(1)) * _GAMMA
    out = _mix64(state)
    return out if out.ndim else np.uint64(out)


def derive_path_seed(master_seed: int, path_index) -> np.ndarray | np.uint64:
    """Per-path 64-bit seed: the (i+1)-th splitmix64 output of the master."""
    return splitmix64(master_seed, path_index)


def derive_stream_seed(master_seed: int, tag: int) -> int:
    """Sub-master seed for a named ensemble (reference vs penalized runs).

    Tags must be distinct within one experiment; the runner assigns them.
    """
    return int(splitmix64(master_seed, 0x5EED0000 + tag))


def words_per_step(dim: int) -> int:
    """Uniform words one step consumes: an even count, two per Box-Muller pair."""
    return 2 * ((dim + 1) // 2)


def blocks_per_step(dim: int) -> int:
    return -(-words_per_step(dim) // _WORDS_PER_BLOCK)


def _philox_raw(path_seed: np.uint64, block0: int, n_words: int) -> np.ndarray:
    """Raw uint64 words from the path's Philox stream starting at ``block0``."""
    key = np.array([splitmix64(int(path_seed), 0), splitmix64(int(path_seed), 1)],
                   dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    state = bitgen.state
    state["state"]["counter"] = np.array([block0, 0, 0, 0], dtype=np.uint64)
    bitgen.state = state
    return bitgen.random_raw(n_words)


def _box_muller(words: np.ndarray, dim: int) -> np.ndarray:
    """Map uint64 words (..., words_per_step) to N(0,1) draws (..., dim)."""
    w = words_per_step(dim)
    u1 = ((words[..., 0::2] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV_2_53
    u2 = (words[..., 1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(words.shape[:-1] + (w,), dtype=np.float64)
    out[..., 0::2] = radius * np.cos(angle)
    out[..., 1::2] = radius * np.sin(angle)
    return out[..., :dim]


def normal_increments(path_seed: int, step_lo: int, step_hi: int, dim: int) -> np.ndarray:
    """Standard-normal draws for steps [step_lo, step_hi) of one path.

    Returns shape (step_hi - step_lo, dim).  Draws depend only on
    (path_seed, step index, component): cutting the range differently
    yields the same numbers.
    """
    if step_hi <= step_lo:
        return np.empty((0, dim), dtype=np.float64)
    bps = blocks_per_step(dim)
    steps = step_hi - step_lo
    raw = _philox_raw(np.uint64(path_seed), step_lo * bps, steps * bps * _WORDS_PER_BLOCK)
    raw = raw.reshape(steps, bps * _WORDS_PER_BLOCK)[:, : words_per_step(dim)]
    return _box_muller(raw, dim)


def normal_increments_block(path_seeds: np.ndarray, step_lo: int, step_hi: int,
                            dim: int) -> np.ndarray:
    """Draws for a block of paths at once: shape (paths, steps, dim).

    Row ``j`` equals ``normal_increments(path_seeds[j], step_lo, step_hi, dim)``.
    """
    n_paths = len(path_seeds)
    steps = step_hi - step_lo
    if steps <= 0 or n_paths == 0:
        return np.empty((n_paths, max(steps, 0), dim), dtype=np.float64)
    bps = blocks_per_step(dim)
    n_words = steps * bps * _WORDS_PER_BLOCK
    raw = np.empty((n_paths, n_words), dtype=np.uint64)
    for j in range(n_paths):
        raw[j] = _philox_raw(np.uint64(path_seeds[j]), step_lo * bps, n_words)
    raw = raw.reshape(n_paths, steps, bps * _WORDS_PER_BLOCK)[:, :, : words_per_step(dim)]
    return _box_muller(raw, dim)


def uniforms(seed: int, count: int) -> np.ndarray:
    """Deterministic uniforms in [0, 1) for sampling tasks (certifiers)."""
    n_blocks = -(-count // _WORDS_PER_BLOCK)
    raw = _philox_raw(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), 0,
                      n_blocks * _WORDS_PER_BLOCK)[:count]
    return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53
