"""
JSON model documents: named channels, priors, schedulers, observers, composition trees
and the analysis requests to run on them.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from channels import (TAU, Channel, Prior, Trace, diagonal_prior, out, parse_action,
                      product_prior, uniform_prior)
from errors import ModelReferenceError, ParseError
from observers import Observer, make_observer
from schedulers import KINDS, Leaf, Node, Scheduler, compose_tree, explicit_scheduler, tree_secrets

logger = logging.getLogger(__name__)


# --- ACTIONS, TRACES, SECRETS ---

def action_from_json(obj):
    if obj == "tau":
        return TAU
    if isinstance(obj, str):
        return parse_action(obj)
    if isinstance(obj, dict) and "out" in obj:
        return out(obj["out"]["name"], obj["out"]["value"])
    raise ParseError(f"cannot read action {obj!r}")


def action_to_json(a):
    return "tau" if a.is_tau else {"out": {"name": a.name, "value": a.value}}


def trace_from_json(obj):
    if isinstance(obj, str):
        return Trace.parse(obj)
    if not isinstance(obj, list):
        raise ParseError(f"a trace is a list of actions, got {obj!r}")
    return Trace(action_from_json(a) for a in obj)


def trace_to_json(y):
    return [action_to_json(a) for a in y]


def secret_from_json(obj):
    if isinstance(obj, list):
        return tuple(secret_from_json(part) for part in obj)
    return obj


def secret_to_json(x):
    if isinstance(x, tuple):
        return [secret_to_json(part) for part in x]
    if isinstance(x, Trace):
        return trace_to_json(x)
    return x


# --- CHANNELS & PRIORS ---

def channel_from_json(obj, name="", strict=True):
    try:
        secrets = tuple(secret_from_json(x) for x in obj["secrets"])
        traces = tuple(trace_from_json(y) for y in obj["traces"])
        matrix = obj["matrix"]
    except (KeyError, TypeError) as e:
        raise ParseError(f"channel {name!r} needs secrets, traces and matrix ({e})")
    if strict:
        return Channel(secrets, traces, matrix, name=name)
    return Channel.raw(secrets, traces, matrix, name=name)


def channel_to_json(c):
    return {
        "secrets": [secret_to_json(x) for x in c.secrets],
        "traces": [trace_to_json(y) for y in c.outputs],
        "matrix": c.matrix.tolist(),
    }


def prior_to_json(p):
    return {"secrets": [secret_to_json(x) for x in p.secrets], "mass": [float(m) for m in p.mass]}


# --- OBSERVERS ---

@dataclass(frozen=True)
class ObserverSpec:
    """Observer recipe; built against a trace set only when it is applied."""
    kind: str
    params: dict = field(default_factory=dict)
    fixed: Observer = None

    def resolve(self, outputs):
        if self.fixed is not None:
            return self.fixed.aligned(outputs)
        return make_observer(self.kind, outputs, **self.params)


def _confusion_from_json(rows):
    conf = {}
    for row in rows:
        a = action_from_json(row["action"])
        conf[a] = [(None if b is None else action_from_json(b), float(p)) for b, p in row["to"]]
    return conf


def observer_from_json(obj, name=""):
    kind = obj.get("kind") if isinstance(obj, dict) else obj
    if kind == "explicit":
        fixed = Observer(tuple(trace_from_json(y) for y in obj["traces"]),
                         tuple(trace_from_json(z) if isinstance(z, list) else z for z in obj["views"]),
                         obj["matrix"], name=name)
        return ObserverSpec("explicit", fixed=fixed)
    if kind == "per-action":
        return ObserverSpec(kind, {"confusion": _confusion_from_json(obj["confusion"])})
    if kind == "tau-misplacement":
        return ObserverSpec(kind, {"correct": float(obj.get("correct", 0.7))})
    if kind in ("perfect", "strong", "weak", "name-blind", "unit", "universal"):
        return ObserverSpec(kind)
    raise ParseError(f"observer {name!r}: unknown kind {kind!r}")


def observer_to_json(spec):
    if spec.fixed is not None:
        o = spec.fixed
        return {"kind": "explicit",
                "traces": [trace_to_json(y) for y in o.outputs],
                "views": [trace_to_json(z) if isinstance(z, Trace) else z for z in o.views],
                "matrix": o.matrix.tolist()}
    if spec.kind == "per-action":
        return {"kind": spec.kind, "confusion": [
            {"action": action_to_json(a), "to": [[None if b is None else action_to_json(b), p] for b, p in rows]}
            for a, rows in spec.params["confusion"].items()]}
    return {"kind": spec.kind, **spec.params}


# --- SCHEDULERS ---

def scheduler_from_json(obj, name=""):
    if isinstance(obj, str):
        return obj
    kind = obj.get("kind")
    if kind in KINDS or kind == "min":
        return kind
    if kind != "explicit":
        raise ParseError(f"scheduler {name!r}: unknown kind {kind!r}")
    domain = tuple(tuple(trace_from_json(y) for y in Y) for Y in obj["domain"])
    rows = {}
    for row in obj["rows"]:
        src = tuple(trace_from_json(y) for y in row["sources"])
        rows[src] = {trace_from_json(y): float(p) for y, p in row["mass"]}
    return explicit_scheduler(domain, rows, name=name or "explicit")


def scheduler_to_json(s):
    if isinstance(s, str):
        return {"kind": s}
    return {
        "kind": "explicit",
        "domain": [[trace_to_json(y) for y in Y] for Y in s.domain],
        "rows": [{"sources": [trace_to_json(y) for y in src],
                  "mass": [[trace_to_json(y), p] for y, p in dist.items()]}
                 for src, dist in s.rows.items()],
    }


# --- DOCUMENT ---

@dataclass
class ModelDocument:
    channels: dict = field(default_factory=dict)
    priors: dict = field(default_factory=dict)
    schedulers: dict = field(default_factory=dict)
    observers: dict = field(default_factory=dict)
    trees: dict = field(default_factory=dict)
    requests: list = field(default_factory=list)
    source: str = ""

    def channel(self, name):
        """A named channel, or the composition of a named tree."""
        if name in self.channels:
            return self.channels[name]
        if name in self.trees:
            return compose_tree(self.trees[name])
        raise ModelReferenceError(f"no channel or tree named {name!r}")

    def prior(self, name):
        if name not in self.priors:
            raise ModelReferenceError(f"no prior named {name!r}")
        return self.priors[name]

    def observer(self, name, outputs):
        """A named observer, or a built-in kind, built on the given trace set."""
        if name in self.observers:
            return self.observers[name].resolve(outputs)
        try:
            return make_observer(name, outputs)
        except (ValueError, KeyError):
            raise ModelReferenceError(f"no observer named {name!r}")

    def scheduler(self, ref):
        if isinstance(ref, Scheduler):
            return ref
        if ref in self.schedulers:
            return self.schedulers[ref]
        if ref in KINDS or ref == "min":
            return ref
        raise ModelReferenceError(f"no scheduler named {ref!r}")


def _tree_from_json(obj, doc, name):
    if "leaf" in obj:
        ref = obj["leaf"]
        if ref not in doc.channels:
            raise ModelReferenceError(f"tree {name!r}: no channel named {ref!r}")
        prior = doc.prior(obj["prior"]) if "prior" in obj else None
        return Leaf(doc.channels[ref], prior, name=ref)
    if "node" in obj:
        node = obj["node"]
        spec = node["scheduler"]
        scheduler = doc.scheduler(spec) if isinstance(spec, str) else scheduler_from_json(spec, name)
        return Node(scheduler,
                    _tree_from_json(node["left"], doc, name),
                    _tree_from_json(node["right"], doc, name),
                    name=node.get("name", ""))
    raise ParseError(f"tree {name!r}: expected a 'leaf' or a 'node'")


def _tree_to_json(tree, doc):
    if isinstance(tree, Leaf):
        obj = {"leaf": tree.name}
        for pname, p in doc.priors.items():
            if p is tree.prior:
                obj["prior"] = pname
        return obj
    s = tree.scheduler
    if isinstance(s, Scheduler):
        named = [k for k, v in doc.schedulers.items() if v is s]
        spec = named[0] if named else scheduler_to_json(s)
    else:
        spec = s
    node = {"scheduler": spec, "left": _tree_to_json(tree.left, doc), "right": _tree_to_json(tree.right, doc)}
    if tree.name:
        node["name"] = tree.name
    return {"node": node}


def _secrets_of(doc, ref):
    if isinstance(ref, list):
        return tuple(secret_from_json(x) for x in ref)
    if ref in doc.channels:
        return doc.channels[ref].secrets
    if ref in doc.trees:
        return tree_secrets(doc.trees[ref])
    raise ModelReferenceError(f"no channel or tree named {ref!r}")


def _prior_from_json(obj, doc, name):
    if "uniform" in obj:
        return uniform_prior(_secrets_of(doc, obj["uniform"]))
    if "product" in obj:
        first, second = (doc.prior(n) for n in obj["product"])
        return product_prior(first, second)
    if "diagonal" in obj:
        return diagonal_prior(doc.prior(obj["diagonal"]))
    if "secrets" in obj and "mass" in obj:
        return Prior(tuple(secret_from_json(x) for x in obj["secrets"]), obj["mass"])
    raise ParseError(f"prior {name!r}: expected secrets/mass, uniform, product or diagonal")


def parse_document(text, source="<string>", strict=True):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{source}: {e.msg}", e.lineno, e.colno)
    if not isinstance(raw, dict):
        raise ParseError(f"{source}: the document must be a JSON object")

    doc = ModelDocument(source=source)
    try:
        for name, obj in raw.get("channels", {}).items():
            doc.channels[name] = channel_from_json(obj, name, strict=strict)
        # priors may refer to earlier priors and to trees, so trees come first
        pending_trees = dict(raw.get("trees", {}))
        for name, obj in raw.get("schedulers", {}).items():
            doc.schedulers[name] = scheduler_from_json(obj, name)
        for name, obj in raw.get("priors", {}).items():
            if "uniform" in obj and obj["uniform"] in pending_trees and obj["uniform"] not in doc.trees:
                doc.trees[obj["uniform"]] = _tree_from_json(pending_trees[obj["uniform"]], doc, obj["uniform"])
            doc.priors[name] = _prior_from_json(obj, doc, name)
        for name, obj in pending_trees.items():
            if name not in doc.trees:
                doc.trees[name] = _tree_from_json(obj, doc, name)
        for name, obj in raw.get("observers", {}).items():
            doc.observers[name] = observer_from_json(obj, name)
    except (KeyError, TypeError, AttributeError) as e:
        raise ParseError(f"{source}: malformed document ({type(e).__name__}: {e})")
    except ValueError as e:
        raise ParseError(f"{source}: {e}")

    doc.requests = list(raw.get("requests", []))
    logger.debug(f"Parsed {source}: {len(doc.channels)} channels, {len(doc.priors)} priors, "
                 f"{len(doc.trees)} trees, {len(doc.requests)} requests")
    return doc


def parse_model(path, strict=True):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror}")
    return parse_document(text, source=str(path), strict=strict)


def dump_document(doc):
    return {
        "channels": {name: channel_to_json(c) for name, c in doc.channels.items()},
        "priors": {name: prior_to_json(p) for name, p in doc.priors.items()},
        "schedulers": {name: scheduler_to_json(s) for name, s in doc.schedulers.items()},
        "observers": {name: observer_to_json(spec) for name, spec in doc.observers.items()},
        "trees": {name: _tree_to_json(t, doc) for name, t in doc.trees.items()},
        "requests": doc.requests,
    }
