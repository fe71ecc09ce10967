"""
Case-study builders: the five-voter mix network and the square-and-multiply timing loop.
"""
import json
import logging
from dataclasses import dataclass, field

from channels import (TAU, Prior, ProbDist, Trace, deterministic_channel, diagonal_prior, out,
                      parallel_compose, product_prior, uniform_prior)
from interleave import interleave_n
from measures import Measure, observed
from minimize import min_capacity_scheduler_n, min_leakage_slot
from model_io import channel_to_json
from observers import make_observer, per_action_confusion_observer
from schedulers import Leaf, Node, compose_tree, make_scheduler, scheduled_compose, tree_prior

logger = logging.getLogger(__name__)


# --- VOTING ---

NODES = ("A", "B", "S1", "S2")
# left/right path of each server in the mix network
NODE_PATHS = {"S2": (), "S1": ("left",), "A": ("left", "left"), "B": ("right",)}


def _all(kind):
    return {node: kind for node in NODES}


@dataclass(frozen=True)
class VotingModel:
    voters: int = 5
    vote_prior: tuple = (0.5, 0.5)
    schedulers: dict = field(default_factory=lambda: _all("fs"))
    tau_prefix: tuple = ()
    observer: str = "perfect"

    @classmethod
    def uniform(cls, kind, **kwargs):
        return cls(schedulers=_all(kind), **kwargs)

    @classmethod
    def mixed(cls, **kwargs):
        """S_FS at A and B, S_FI at S2, S1 synthesized by LP."""
        return cls(schedulers={"A": "fs", "B": "fs", "S1": "min", "S2": "fi"}, **kwargs)


def voter_channel(voter, tau_prefix=False):
    """Voter k outputs its ballot as m<k>, optionally after one silent step."""
    def emit(vote):
        return Trace(([TAU] if tau_prefix else []) + [out("m", vote)])

    return deterministic_channel((0, 1), emit, name=f"v{voter}")


def _voter_leaf(model, voter):
    prior = Prior((0, 1), model.vote_prior)
    return Leaf(voter_channel(voter, voter in model.tau_prefix), prior, name=f"v{voter}")


def voting_tree(model):
    """S2(S1(A(v1, v2), v3), B(v4, v5))."""
    if model.voters != 5:
        raise ValueError("the mix-network wiring is fixed to five voters")
    v = {k: _voter_leaf(model, k) for k in range(1, 6)}
    s = model.schedulers
    a = Node(s["A"], v[1], v[2], name="A")
    b = Node(s["B"], v[4], v[5], name="B")
    s1 = Node(s["S1"], a, v[3], name="S1")
    return Node(s["S2"], s1, b, name="S2")


def resolve_voting_tree(model):
    """Fill in the node marked "min" with its LP-synthesized scheduler."""
    tree = voting_tree(model)
    pending = [node for node in NODES if model.schedulers[node] == "min"]
    if not pending:
        return tree
    if len(pending) > 1:
        raise ValueError(f"only one node can be synthesized at a time, got {pending}")
    path = NODE_PATHS[pending[0]]
    tree, _, mel = min_leakage_slot(tree_prior(tree), tree, path, model.observer)
    logger.info(f"✅ Synthesized scheduler for {pending[0]}: observed MEL {mel:.4f}")
    return tree


def build_voting(model):
    tree = resolve_voting_tree(model)
    return compose_tree(tree), tree_prior(tree)


def voting_leakage(model):
    logger.info(f"🚀 Voting: schedulers {model.schedulers}, tau prefix {model.tau_prefix}, observer {model.observer}")
    channel, prior = build_voting(model)
    o = make_observer(model.observer, channel.outputs)
    return {
        "mel": observed(Measure.MEL, prior, channel, o),
        "mi": observed(Measure.MI, prior, channel, o),
    }


def voting_single_scheduler_min_capacity(model):
    """One scheduler receiving every ballot at once; returns (scheduler, minimised min-capacity)."""
    voters = [voter_channel(k, k in model.tau_prefix) for k in range(1, model.voters + 1)]
    outputs = interleave_n(*(c.outputs for c in voters)).traces
    o = make_observer(model.observer, outputs)
    return min_capacity_scheduler_n(voters, o)


# --- SIDE CHANNEL ---

SIDE_CHANNEL_CONFUSION = {
    TAU: ProbDist((TAU, out("m", 1), None), (0.8, 0.1, 0.1)),
    out("m", 1): ProbDist((TAU, out("m", 1), None), (0.05, 0.9, 0.05)),
}


@dataclass(frozen=True)
class SideChannelModel:
    key_bits: int = 3
    shared: bool = False
    scheduler: str = "fi"      # ds | fs | fi | parallel
    observer: str = "perfect"  # any observer kind, or "confusion"

    def __post_init__(self):
        if self.key_bits < 1:
            raise ValueError("key_bits must be at least 1")


def sidechannel_component(bits=3):
    """Per bit: m<1> when the bit is set, a silent step otherwise."""
    keys = tuple(format(k, f"0{bits}b") for k in range(2 ** bits))

    def run(key):
        return Trace(out("m", 1) if bit == "1" else TAU for bit in key)

    return deterministic_channel(keys, run, name=f"loop{bits}")


def build_sidechannel(model):
    k = sidechannel_component(model.key_bits)
    if model.scheduler == "parallel":
        channel = parallel_compose(k, k)
    else:
        channel = scheduled_compose(k, k, make_scheduler(model.scheduler, k.outputs, k.outputs))
    single = uniform_prior(k.secrets)
    prior = diagonal_prior(single) if model.shared else product_prior(single, single)
    return channel, prior


def sidechannel_observer(model, outputs):
    if model.observer == "confusion":
        return per_action_confusion_observer(outputs, SIDE_CHANNEL_CONFUSION, name="confusion")
    return make_observer(model.observer, outputs)


def sidechannel_leakage(model):
    logger.info(f"🚀 Side channel: {model.key_bits} bits, shared={model.shared}, "
                f"scheduler {model.scheduler}, observer {model.observer}")
    channel, prior = build_sidechannel(model)
    o = sidechannel_observer(model, channel.outputs)
    return {
        "mel": observed(Measure.MEL, prior, channel, o),
        "mi": observed(Measure.MI, prior, channel, o),
    }


def export_channel(channel, path):
    """Write a composed channel in the model-document format."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"channels": {channel.name or "channel": channel_to_json(channel)}}, f, indent=2)
        f.write("\n")
    logger.info(f"✅ Wrote {len(channel.secrets)}x{len(channel.outputs)} channel to {path}")
