"""Episodic planning agent: transition memory, iterated self-attention, policy.

Each acting step reads the episodic store (one slot per observed
transition), augments every slot with the current goal embedding, runs a
fixed number of shared-parameter attention iterations over the result,
appends the current state embedding to every row, and max-pools a single
plan vector that feeds the policy head alongside a state-goal skip
connection.

Two planner variants share this file: ``a2a`` lets all slots attend to
all slots (quadratic in store size); ``nxk`` keeps a belief of the k most
recent slots that cross-attends to the full store before self-attending
(linear in store size).

Stored slots are constants: gradients reach the embedders only through
the current step's goal/state embeddings, never back through the store.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .diffmath import (
    EmptyInputError,
    MhaParams,
    ParameterSet,
    Tensor,
    add,
    concat,
    embedding,
    expand_leading,
    feature_max_pool,
    layer_norm,
    linear,
    multi_head_attention,
    relu,
    repeat_rows,
    reshape,
    slice_rows,
    uniform_fan_in,
)

A2A = "a2a"
NXK = "nxk"


@dataclass
class EpnConfig:
    d: int = 64
    n_heads: int = 1
    n_iterations: int = 4
    variant: str = A2A
    k: int = 50
    obs_vocab: int = 100
    n_actions: int = 5
    action_embed_width: int = 16
    use_bootstrap: bool = True
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} not divisible by n_heads={self.n_heads}")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.variant not in (A2A, NXK):
            raise ValueError(f"unknown variant {self.variant!r}")

    def to_json(self) -> str:
        return json.dumps({"kind": "epn", **asdict(self)}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EpnConfig":
        blob = json.loads(text)
        blob.pop("kind", None)
        return cls(**blob)


def _add_mha_block(params: ParameterSet, rng, prefix: str, d: int) -> None:
    for name in ("wq", "wk", "wv", "wo"):
        params.add(f"{prefix}_attn_{name}", uniform_fan_in(rng, (d, d)))
    for name in ("bq", "bk", "bv", "bo"):
        params.add(f"{prefix}_attn_{name}", np.zeros(d, dtype=np.float32))
    params.add(f"{prefix}_ln_gain", np.ones(d, dtype=np.float32))
    params.add(f"{prefix}_ln_bias", np.zeros(d, dtype=np.float32))
    params.add(f"{prefix}_mlp_w1", uniform_fan_in(rng, (d, d)))
    params.add(f"{prefix}_mlp_b1", np.zeros(d, dtype=np.float32))
    params.add(f"{prefix}_mlp_w2", uniform_fan_in(rng, (d, d)))
    params.add(f"{prefix}_mlp_b2", np.zeros(d, dtype=np.float32))


def init_epn_params(rng: np.random.Generator, config: EpnConfig) -> ParameterSet:
    d, aw = config.d, config.action_embed_width
    params = ParameterSet()
    params.add("obs_embed", uniform_fan_in(rng, (config.obs_vocab, d)))
    params.add("goal_embed", uniform_fan_in(rng, (config.obs_vocab, d)))
    params.add("act_embed", uniform_fan_in(rng, (config.n_actions, aw)))
    params.add("slot_w", uniform_fan_in(rng, (2 * d + aw, d)))
    params.add("slot_b", np.zeros(d, dtype=np.float32))
    params.add("goal_aug_w", uniform_fan_in(rng, (2 * d, d)))
    params.add("goal_aug_b", np.zeros(d, dtype=np.float32))
    _add_mha_block(params, rng, "plan", d)
    if config.variant == NXK:
        _add_mha_block(params, rng, "cross", d)
    params.add("read_w1", uniform_fan_in(rng, (2 * d, d)))
    params.add("read_b1", np.zeros(d, dtype=np.float32))
    params.add("read_w2", uniform_fan_in(rng, (d, d)))
    params.add("read_b2", np.zeros(d, dtype=np.float32))
    params.add("pol_w1", uniform_fan_in(rng, (3 * d, d)))
    params.add("pol_b1", np.zeros(d, dtype=np.float32))
    params.add("pol_w2", uniform_fan_in(rng, (d, d)))
    params.add("pol_b2", np.zeros(d, dtype=np.float32))
    params.add("pol_logits_w", uniform_fan_in(rng, (d, config.n_actions)))
    params.add("pol_logits_b", np.zeros(config.n_actions, dtype=np.float32))
    params.add("pol_value_w", uniform_fan_in(rng, (d, 1)))
    params.add("pol_value_b", np.zeros(1, dtype=np.float32))
    params.add("bootstrap_slot", uniform_fan_in(rng, (d,)))
    return params


# ------------------------------------------------------------------- memory


class EpisodicStore:
    """Append-only per-episode slot memory, cleared at episode boundaries."""

    def __init__(self, d: int, capacity: int):
        self.capacity = capacity
        self._buf = np.zeros((capacity, d), dtype=np.float32)
        self.size = 0

    def append(self, slot: np.ndarray) -> None:
        if self.size >= self.capacity:
            raise OverflowError(f"episodic store capacity {self.capacity} exceeded")
        self._buf[self.size] = slot
        self.size += 1

    def as_array(self) -> np.ndarray:
        return self._buf[: self.size]

    def snapshot(self) -> np.ndarray:
        return self._buf[: self.size].copy()

    def clear(self) -> None:
        self.size = 0


class BatchedStore:
    """Lock-step stores for B parallel episodes sharing one step clock."""

    def __init__(self, batch: int, d: int, capacity: int):
        self.capacity = capacity
        self._buf = np.zeros((batch, capacity, d), dtype=np.float32)
        self.size = 0

    def append(self, slots: np.ndarray) -> None:
        if self.size >= self.capacity:
            raise OverflowError(f"episodic store capacity {self.capacity} exceeded")
        self._buf[:, self.size] = slots
        self.size += 1

    def as_array(self) -> np.ndarray:
        return self._buf[:, : self.size]

    def snapshot(self) -> np.ndarray:
        return self._buf[:, : self.size].copy()

    def clear(self) -> None:
        self.size = 0


def embed_slot(params: ParameterSet, cur_obs, prev_action, prev_obs) -> np.ndarray:
    """Slot values for one transition (batched when ids are arrays).

    Computed outside the tape: slots live in memory as constants.
    """
    cur = np.atleast_1d(np.asarray(cur_obs, dtype=np.int64))
    act = np.atleast_1d(np.asarray(prev_action, dtype=np.int64))
    prev = np.atleast_1d(np.asarray(prev_obs, dtype=np.int64))
    obs_tbl = params["obs_embed"].data
    feats = np.concatenate(
        [obs_tbl[cur], params["act_embed"].data[act], obs_tbl[prev]], axis=-1)
    slots = feats @ params["slot_w"].data + params["slot_b"].data
    return slots if np.ndim(cur_obs) else slots[0]


def memory_append(store: EpisodicStore, prev_obs: int, prev_action: int,
                  cur_obs: int, params: ParameterSet) -> EpisodicStore:
    """Record one observed transition; existing slots are untouched."""
    store.append(embed_slot(params, cur_obs, prev_action, prev_obs))
    return store


def reset_episode(store: EpisodicStore) -> EpisodicStore:
    store.clear()
    return store


# ------------------------------------------------------------------ planner


def _attention_update(params: ParameterSet, prefix: str, x: Tensor,
                      config: EpnConfig, kv: Tensor | None = None) -> Tensor:
    """One residual update: f(x + MHA(LN(x))), row-shared 2-layer MLP f."""
    mha = MhaParams(
        wq=params[f"{prefix}_attn_wq"], wk=params[f"{prefix}_attn_wk"],
        wv=params[f"{prefix}_attn_wv"], wo=params[f"{prefix}_attn_wo"],
        bq=params[f"{prefix}_attn_bq"], bk=params[f"{prefix}_attn_bk"],
        bv=params[f"{prefix}_attn_bv"], bo=params[f"{prefix}_attn_bo"],
    )
    gain = params[f"{prefix}_ln_gain"]
    bias = params[f"{prefix}_ln_bias"]
    q = layer_norm(x, gain, bias, config.layer_norm_eps)
    k = q if kv is None else layer_norm(kv, gain, bias, config.layer_norm_eps)
    attended = multi_head_attention(q, k, mha, config.n_heads)
    y = relu(add(x, attended))
    h = relu(linear(y, params[f"{prefix}_mlp_w1"], params[f"{prefix}_mlp_b1"]))
    return linear(h, params[f"{prefix}_mlp_w2"], params[f"{prefix}_mlp_b2"])


def _slot_rows(params: ParameterSet, config: EpnConfig, slots: np.ndarray) -> Tensor:
    """[B, N, d] constant slots, with the learned bootstrap row prepended."""
    batch = slots.shape[0]
    rows = []
    if config.use_bootstrap:
        boot = reshape(params["bootstrap_slot"], (1, config.d))
        rows.append(expand_leading(boot, batch))
    if slots.shape[1] > 0:
        rows.append(Tensor(slots))
    if not rows:
        raise EmptyInputError("episodic store is empty and the bootstrap slot is disabled")
    return rows[0] if len(rows) == 1 else concat(rows, axis=-2)


def _goal_augment(params: ParameterSet, rows: Tensor, goal_embed: Tensor) -> Tensor:
    n = rows.shape[-2]
    goal_rows = repeat_rows(goal_embed, n)
    return linear(concat([rows, goal_rows], axis=-1),
                  params["goal_aug_w"], params["goal_aug_b"])


def planner_iterations(params: ParameterSet, config: EpnConfig, m_aug: Tensor,
                       n_iterations: int | None = None) -> Tensor:
    """Run the belief updates; returns the final belief matrix [B, R, d]."""
    iters = config.n_iterations if n_iterations is None else n_iterations
    if config.variant == A2A:
        belief = m_aug
        for _ in range(iters):
            belief = _attention_update(params, "plan", belief, config)
        return belief
    # nxk: belief = k most recent rows; cross-attend to memory, then self-attend
    n_rows = m_aug.shape[-2]
    belief = m_aug if n_rows <= config.k else slice_rows(m_aug, n_rows - config.k, n_rows)
    for _ in range(iters):
        belief = _attention_update(params, "cross", belief, config, kv=m_aug)
        belief = _attention_update(params, "plan", belief, config)
    return belief


def planner_forward(params: ParameterSet, config: EpnConfig, slots: np.ndarray,
                    goal_embed: Tensor, state_embed: Tensor,
                    n_iterations: int | None = None) -> Tensor:
    """Batched planner: slots [B, N, d] constants -> plan vectors [B, d]."""
    rows = _slot_rows(params, config, slots)
    m_aug = _goal_augment(params, rows, goal_embed)
    belief = planner_iterations(params, config, m_aug, n_iterations)
    state_rows = repeat_rows(state_embed, belief.shape[-2])
    h = relu(linear(concat([belief, state_rows], axis=-1),
                    params["read_w1"], params["read_b1"]))
    h = linear(h, params["read_w2"], params["read_b2"])
    return feature_max_pool(h)


def planner_apply(store: EpisodicStore, goal_embed: Tensor, state_embed: Tensor,
                  config: EpnConfig, params: ParameterSet,
                  n_iterations: int | None = None) -> Tensor:
    """Single-instance planner: returns the pooled plan vector [d]."""
    slots = store.as_array()[None, :, :]
    goal_b = reshape(goal_embed, (1, config.d))
    state_b = reshape(state_embed, (1, config.d))
    out = planner_forward(params, config, slots, goal_b, state_b, n_iterations)
    return reshape(out, (config.d,))


# ------------------------------------------------------------------- policy


def forward_batch(params: ParameterSet, config: EpnConfig, slots: np.ndarray,
                  obs_ids: np.ndarray, goal_ids: np.ndarray,
                  n_iterations: int | None = None) -> tuple[Tensor, Tensor]:
    """Batched policy pass: (logits [B, n_actions], values [B])."""
    obs_e = embedding(params["obs_embed"], obs_ids)
    goal_e = embedding(params["goal_embed"], goal_ids)
    plan = planner_forward(params, config, slots, goal_e, obs_e, n_iterations)
    trunk = concat([plan, obs_e, goal_e], axis=-1)
    h = relu(linear(trunk, params["pol_w1"], params["pol_b1"]))
    h = relu(linear(h, params["pol_w2"], params["pol_b2"]))
    logits = linear(h, params["pol_logits_w"], params["pol_logits_b"])
    values = reshape(linear(h, params["pol_value_w"], params["pol_value_b"]),
                     (obs_e.shape[0],))
    return logits, values


def act(store: EpisodicStore, observation: int, goal: int,
        config: EpnConfig, params: ParameterSet,
        n_iterations: int | None = None) -> tuple[Tensor, float]:
    """Policy logits and value for one observation/goal id pair."""
    slots = store.as_array()[None, :, :]
    logits, values = forward_batch(
        params, config, slots,
        np.array([observation], dtype=np.int64),
        np.array([goal], dtype=np.int64),
        n_iterations,
    )
    return reshape(logits, (config.n_actions,)), float(values.data[0])
