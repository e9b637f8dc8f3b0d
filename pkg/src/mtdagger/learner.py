"""Shared multitask policy trained by behavior cloning.

The network conditions on task identity through a learned embedding:
observations pass through an affine encoder, the task embedding is
concatenated onto the encoding, and a head maps the fused vector to an
action. Two head variants exist: a purely affine one (closed-form checkable,
the library default) and a one-hidden-layer tanh head that can represent
per-task gain differences and is used by the experiment presets.

Everything is plain numpy with hand-written gradients so the finite
-difference check in the tests covers the exact code that trains.
"""

from __future__ import annotations

import numpy as np

from .data import AggregatedDataset, EmptyDatasetError

LEARNER_KINDS = ("linear", "mlp")


class UnknownTaskError(ValueError):
    """A task id outside the embedding table was queried."""


class MultitaskLearner:
    def __init__(
        self,
        kind: str,
        obs_dim: int,
        act_dim: int,
        num_tasks: int,
        encoder_dim: int = 16,
        embedding_dim: int = 8,
        hidden_dim: int = 64,
        rng: np.random.Generator | None = None,
    ):
        if kind not in LEARNER_KINDS:
            raise ValueError(f"kind must be one of {LEARNER_KINDS}, got {kind!r}")
        self.kind = kind
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.num_tasks = num_tasks
        self.encoder_dim = encoder_dim
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim

        fused = encoder_dim + embedding_dim
        self.params: dict[str, np.ndarray] = {
            "enc_w": np.zeros((obs_dim, encoder_dim)),
            "enc_b": np.zeros(encoder_dim),
            "emb": np.zeros((num_tasks, embedding_dim)),
        }
        if kind == "linear":
            # an all-zero encoder+head is a bilinear saddle (no gradient can
            # reach the encoder), so the encoder starts as an identity block;
            # the head stays zero and the initial policy still acts as zero
            block = min(obs_dim, encoder_dim)
            self.params["enc_w"][:block, :block] = np.eye(block)
            self.params["head_w"] = np.zeros((fused, act_dim))
            self.params["head_b"] = np.zeros(act_dim)
        else:
            self.params["h1_w"] = np.zeros((fused, hidden_dim))
            self.params["h1_b"] = np.zeros(hidden_dim)
            self.params["h2_w"] = np.zeros((hidden_dim, act_dim))
            self.params["h2_b"] = np.zeros(act_dim)
        if kind == "mlp":
            if rng is None:
                raise ValueError("the mlp variant needs an rng for weight initialization")
            self._random_init(rng)

    def _random_init(self, rng: np.random.Generator) -> None:
        # tanh units die under all-zero weights, so break symmetry at init;
        # the output layer stays zero so the untrained policy acts as zero
        # and runs do not inherit luck from the initial head draw
        p = self.params
        p["enc_w"] = rng.normal(0.0, 1.0 / np.sqrt(self.obs_dim), p["enc_w"].shape)
        p["emb"] = rng.normal(0.0, 0.1, p["emb"].shape)
        p["h1_w"] = rng.normal(0.0, 1.0 / np.sqrt(p["h1_w"].shape[0]), p["h1_w"].shape)

    def forward(self, obs: np.ndarray, task_ids: np.ndarray) -> np.ndarray:
        actions, _ = self._forward_cached(obs, task_ids)
        return actions

    def _forward_cached(self, obs: np.ndarray, task_ids: np.ndarray):
        p = self.params
        enc = obs @ p["enc_w"] + p["enc_b"]
        fused = np.concatenate([enc, p["emb"][task_ids]], axis=1)
        if self.kind == "linear":
            actions = fused @ p["head_w"] + p["head_b"]
            return actions, (enc, fused, None)
        hidden = np.tanh(fused @ p["h1_w"] + p["h1_b"])
        actions = hidden @ p["h2_w"] + p["h2_b"]
        return actions, (enc, fused, hidden)

    def act(self, observation: np.ndarray, task_id: int) -> np.ndarray:
        if not 0 <= task_id < self.num_tasks:
            raise UnknownTaskError(f"task_id {task_id} outside [0, {self.num_tasks})")
        obs = np.asarray(observation, dtype=float).reshape(1, -1)
        return self.forward(obs, np.array([task_id]))[0]

    def act_batch(self, observations: np.ndarray, task_id: int) -> np.ndarray:
        if not 0 <= task_id < self.num_tasks:
            raise UnknownTaskError(f"task_id {task_id} outside [0, {self.num_tasks})")
        tids = np.full(len(observations), task_id, dtype=int)
        return self.forward(np.asarray(observations, dtype=float), tids)

    def loss(self, obs: np.ndarray, actions: np.ndarray, task_ids: np.ndarray) -> float:
        pred = self.forward(obs, task_ids)
        return float(np.mean((pred - actions) ** 2))

    def loss_and_grads(
        self, obs: np.ndarray, actions: np.ndarray, task_ids: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean-squared imitation loss and its gradient for every block."""
        p = self.params
        pred, (enc, fused, hidden) = self._forward_cached(obs, task_ids)
        diff = pred - actions
        loss = float(np.mean(diff**2))
        d_out = 2.0 * diff / diff.size

        grads: dict[str, np.ndarray] = {}
        if self.kind == "linear":
            grads["head_w"] = fused.T @ d_out
            grads["head_b"] = d_out.sum(axis=0)
            d_fused = d_out @ p["head_w"].T
        else:
            grads["h2_w"] = hidden.T @ d_out
            grads["h2_b"] = d_out.sum(axis=0)
            d_hidden = (d_out @ p["h2_w"].T) * (1.0 - hidden**2)
            grads["h1_w"] = fused.T @ d_hidden
            grads["h1_b"] = d_hidden.sum(axis=0)
            d_fused = d_hidden @ p["h1_w"].T

        d_enc = d_fused[:, : self.encoder_dim]
        d_emb_rows = d_fused[:, self.encoder_dim :]
        grads["enc_w"] = obs.T @ d_enc
        grads["enc_b"] = d_enc.sum(axis=0)
        g_emb = np.zeros_like(p["emb"])
        np.add.at(g_emb, task_ids, d_emb_rows)
        grads["emb"] = g_emb
        return loss, grads

    def sgd_step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, g in grads.items():
            self.params[name] -= lr * g


class AdamState:
    """Adam moment buffers for one training phase."""

    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            params[name] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def per_task_losses(learner: MultitaskLearner, dataset: AggregatedDataset) -> np.ndarray:
    """Mean imitation loss of each task over its own samples (nan if none)."""
    losses = np.full(dataset.num_tasks, np.nan)
    for tid in range(dataset.num_tasks):
        if dataset.per_task_counts[tid] == 0:
            continue
        obs, act = dataset.task_arrays(tid)
        losses[tid] = learner.loss(obs, act, np.full(len(obs), tid, dtype=int))
    return losses


def train_steps(
    learner: MultitaskLearner,
    dataset: AggregatedDataset,
    steps: int,
    batch_size: int | None,
    lr: float,
    rng: np.random.Generator,
    optimizer: str = "adam",
    adam_state: AdamState | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one training phase on uniformly sampled minibatches.

    Returns per-task loss endpoints: full per-task passes taken before the
    first and after the last step, which is what the gain metric consumes.
    ``batch_size=None`` uses the full dataset every step; with
    ``optimizer="sgd"`` that is plain deterministic gradient descent.
    Passing an ``adam_state`` carries optimizer moments across phases, so a
    policy continuing to train does not get kicked out of its minimum by
    fresh bias-corrected steps at every phase start.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    if optimizer not in ("adam", "sgd"):
        raise ValueError(f"optimizer must be 'adam' or 'sgd', got {optimizer!r}")
    obs, act, tids = dataset.arrays()
    n = len(obs)
    adam = None
    if optimizer == "adam":
        adam = adam_state if adam_state is not None else AdamState(learner.params)

    loss_start = per_task_losses(learner, dataset)
    for _ in range(steps):
        if batch_size is None or batch_size >= n:
            bx, by, bt = obs, act, tids
        else:
            idx = rng.integers(0, n, size=batch_size)
            bx, by, bt = obs[idx], act[idx], tids[idx]
        _, grads = learner.loss_and_grads(bx, by, bt)
        if adam is None:
            learner.sgd_step(grads, lr)
        else:
            adam.step(learner.params, grads, lr)
    loss_end = per_task_losses(learner, dataset)
    return loss_start, loss_end
