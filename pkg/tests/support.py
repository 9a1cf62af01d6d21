"""Shared builders for the test suites."""

from __future__ import annotations

import numpy as np

from dferc.cfm import CfmConfig
from dferc.crm import CrmConfig, PrototypeStore
from dferc.dataio import Dialogue, SynthConfig, Utterance, generate_splits
from dferc.ddm import DdmConfig
from dferc.trainer import Batch, DFERCNetwork, ModelConfig, TrainConfig
from dferc.trainer.loop import stream

TINY_DIMS = (8, 6, 5)


def tiny_model_config(beta=0.02) -> ModelConfig:
    return ModelConfig(DdmConfig(proj_dim=6), CfmConfig(fusion_dim=6),
                       CrmConfig(align_dim=6, beta=beta, context_hidden=3), mlp_hidden=6)


def tiny_dialogue(n=2, seed=0, K=3) -> Dialogue:
    rng = np.random.default_rng(seed)
    return Dialogue("g0", [Utterance(f"g0_u{j}", int(j % K), *(rng.standard_normal(d) for d in TINY_DIMS))
                           for j in range(n)])


def tiny_instance(variant="full", seed=0, K=3):
    """Gradient-check instance: one synthetic 2-utterance dialogue, K classes, raw dims (8, 6, 5).

    The prototype store takes one update from the dialogue itself (as a
    training step would) and the TCP targets of that pass are returned so
    callers can hold both constant.
    """
    cfg = SynthConfig(K=K, d_t=TINY_DIMS[0], d_a=TINY_DIMS[1], d_v=TINY_DIMS[2], n_train=1,
                      mean_length=50, max_length=2, latent_scale=1.0, seed=seed)
    dialogue = generate_splits(cfg)["train"].dialogues[0]
    net = DFERCNetwork(TINY_DIMS, K, tiny_model_config(), variant, np.random.default_rng(stream(seed, "init")))
    batch = Batch.from_dialogues([dialogue])
    store = PrototypeStore.empty(K, net.cfg.crm.align_dim)
    fwd = net.forward(batch, store, update_store=True)
    return net, batch, store, fwd.tcp


def small_synth(seed=0, **kw) -> dict:
    base = dict(n_train=10, n_valid=4, n_test=4, mean_length=4, seed=seed)
    base.update(kw)
    return generate_splits(SynthConfig(**base))


def small_train_config(**kw) -> TrainConfig:
    base = dict(epochs=2, batch_size=4, warmup_steps=5)
    base.update(kw)
    return TrainConfig(**base)
