import argparse
import json
import logging
import sys
from pathlib import Path

from tabulate import tabulate

from channels import parallel_compose, validate_channel
from config import setup_logging
from errors import QIFError
from interleave import can_alter_leakage, disjoint_actions, independence_certificate, interleave_sets
from measures import Measure, leakage_report
from minimize import build_min_leakage_lp, min_capacity_scheduler, min_leakage_scheduler
from model_io import channel_to_json, parse_model, scheduler_to_json, trace_from_json
from observers import EQUIVALENCES
from scenarios import (SideChannelModel, VotingModel, build_sidechannel, export_channel,
                       resolve_voting_tree, sidechannel_leakage, voting_leakage,
                       voting_single_scheduler_min_capacity)
from schedulers import compose_tree, is_sim_blind, make_scheduler, scheduled_compose
from simplex import export_lp

logger = logging.getLogger(__name__)

DECIMALS = 4


# --- REQUEST HANDLERS ---

def _pair(doc, request):
    names = list(doc.channels)
    left = request.get("left") or (names[0] if names else None)
    right = request.get("right") or (names[1] if len(names) > 1 else None)
    if left is None or right is None:
        raise ValueError("two channels are needed (give --left and --right)")
    return doc.channel(left), doc.channel(right)


def _composed_outputs(c1, c2):
    return interleave_sets(c1.outputs, c2.outputs).traces


def do_validate(doc, request):
    report = {name: validate_channel(c) for name, c in doc.channels.items()}
    return {"valid": not any(report.values()), "violations": report}


def do_interleave(doc, request):
    Y1 = [trace_from_json(y) for y in request["y1"]]
    Y2 = [trace_from_json(y) for y in request["y2"]]
    traces = interleave_sets(Y1, Y2).traces
    return {"count": len(traces), "traces": [str(y) for y in traces]}


def do_compose(doc, request):
    if "tree" in request:
        c = doc.channel(request["tree"])
    else:
        c1, c2 = _pair(doc, request)
        kind = request.get("scheduler", "ds")
        if kind == "parallel":
            c = parallel_compose(c1, c2)
        else:
            s = doc.scheduler(kind)
            if isinstance(s, str):
                s = make_scheduler(s, c1.outputs, c2.outputs)
            c = scheduled_compose(c1, c2, s)
    return {"channel": channel_to_json(c), "_frame": c.to_frame()}


def do_measure(doc, request):
    c = doc.channel(request["channel"])
    p = doc.prior(request["prior"]) if request.get("prior") else None
    measure = Measure(request.get("measure", "mel"))
    if p is None and measure not in (Measure.SC, Measure.MC):
        raise ValueError(f"measure {measure.value} needs a prior")
    o = doc.observer(request["observer"], c.outputs) if request.get("observer") else None
    report = leakage_report(measure, p, c, o)
    return {"measure": report.measure.value, "value": report.value, "digest": report.digest}


def do_min_scheduler(doc, request):
    c1, c2 = _pair(doc, request)
    o = doc.observer(request.get("observer", "perfect"), _composed_outputs(c1, c2))
    if request.get("capacity"):
        s, value = min_capacity_scheduler(c1, c2, o)
        key = "mc"
    else:
        if not request.get("prior"):
            raise ValueError("min-scheduler needs a prior (or --capacity)")
        s, value = min_leakage_scheduler(doc.prior(request["prior"]), c1, c2, o)
        key = "mel"
    return {key: value, "scheduler": scheduler_to_json(s), "_frame": s.to_frame()}


def do_certificate(doc, request):
    c1, c2 = _pair(doc, request)
    cert = independence_certificate(c1.outputs, c2.outputs)
    result = {
        "independent": cert.holds,
        "witness": None if cert.witness is None else [str(y) for y in cert.witness],
        "disjoint_actions": disjoint_actions(c1.outputs, c2.outputs),
        "can_alter_leakage": can_alter_leakage(c1.outputs, c2.outputs),
    }
    if request.get("scheduler"):
        s = doc.scheduler(request["scheduler"])
        if isinstance(s, str):
            s = make_scheduler(s, c1.outputs, c2.outputs)
        eq = EQUIVALENCES[request.get("equivalence", "weak")]
        result["sim_blind"] = is_sim_blind(s, eq)
    return result


def _voting_model(request):
    kind = request.get("schedulers", "fs")
    extra = {"observer": request.get("observer", "perfect"),
             "tau_prefix": (1, 2) if request.get("tau_prefix") else ()}
    return VotingModel.mixed(**extra) if kind == "mixed" else VotingModel.uniform(kind, **extra)


def do_case_study(doc, request):
    study = request["study"]
    if study == "voting":
        model = _voting_model(request)
        if request.get("single_scheduler"):
            _, mc = voting_single_scheduler_min_capacity(model)
            return {"study": study, "mc": mc}
        result = {"study": study, **voting_leakage(model)}
        if request.get("emit"):
            channel = compose_tree(resolve_voting_tree(model))
            export_channel(channel, request["emit"])
        return result
    if study == "side-channel":
        model = SideChannelModel(key_bits=int(request.get("bits", 3)),
                                 shared=bool(request.get("shared", False)),
                                 scheduler=request.get("scheduler", "fi"),
                                 observer=request.get("observer", "perfect"))
        result = {"study": study, **sidechannel_leakage(model)}
        if request.get("emit"):
            export_channel(build_sidechannel(model)[0], request["emit"])
        return result
    raise ValueError(f"unknown case study {study!r}")


def do_lp_export(doc, request):
    c1, c2 = _pair(doc, request)
    o = doc.observer(request.get("observer", "perfect"), _composed_outputs(c1, c2))
    lp = build_min_leakage_lp(doc.prior(request["prior"]), c1, c2, o)
    text = export_lp(lp)
    if request.get("output"):
        Path(request["output"]).write_text(text, encoding="utf-8")
        logger.info(f"✅ Wrote LP to {request['output']}")
    return {"variables": lp.n_variables,
            "inequalities": lp.n_inequalities,
            "equalities": lp.n_equalities,
            "output": request.get("output"),
            "_text": text}


HANDLERS = {
    "validate": do_validate,
    "interleave": do_interleave,
    "compose": do_compose,
    "measure": do_measure,
    "min-scheduler": do_min_scheduler,
    "certificate": do_certificate,
    "case-study": do_case_study,
    "lp-export": do_lp_export,
}


def run_request(doc, request):
    command = request.get("command")
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    logger.debug(f"Running {command}")
    return {"command": command, **HANDLERS[command](doc, request)}


def run_batch(doc):
    results = []
    for i, request in enumerate(doc.requests):
        logger.info(f"🚀 Request {i + 1}/{len(doc.requests)}: {request.get('command')}")
        results.append(run_request(doc, request))
    return {"command": "batch", "results": results}


# --- OUTPUT ---

def _rounded(value, full):
    if isinstance(value, float):
        return value if full else round(value, DECIMALS)
    if isinstance(value, dict):
        return {k: _rounded(v, full) for k, v in value.items() if not k.startswith("_")}
    if isinstance(value, list):
        return [_rounded(v, full) for v in value]
    return value


def render_json(result, full=False):
    return json.dumps(_rounded(result, full), indent=2, ensure_ascii=False)


def render_table(result, full=False):
    rows = [(k, v) for k, v in _rounded(result, full).items() if not isinstance(v, (dict, list))]
    parts = [tabulate(rows, headers=["field", "value"], tablefmt="github")]
    frame = result.get("_frame")
    if frame is not None:
        parts.append(tabulate(frame.round(DECIMALS) if not full else frame, headers="keys", tablefmt="github"))
    if "_text" in result:
        parts.append(result["_text"])
    return "\n\n".join(parts)


# --- CLI ---

def _add_pair(p):
    p.add_argument("--left", help="first channel (default: first in the model)")
    p.add_argument("--right", help="second channel (default: second in the model)")


def build_parser():
    parser = argparse.ArgumentParser(prog="run_analysis", description="Leakage analysis of scheduled channel compositions.")
    parser.add_argument("--full-precision", action="store_true", help="print values unrounded")
    parser.add_argument("--format", choices=("json", "table"), default="json")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check every channel of a model")
    p.add_argument("--model", required=True)

    p = sub.add_parser("interleave", help="enumerate interleavings of two trace sets")
    p.add_argument("--y1", action="append", required=True, help="trace such as 'tau,m1:0' (repeatable)")
    p.add_argument("--y2", action="append", required=True)

    p = sub.add_parser("compose", help="compose two channels or a tree")
    p.add_argument("--model", required=True)
    _add_pair(p)
    p.add_argument("--scheduler", default="ds", help="ds | fs | fi | parallel | a named scheduler")
    p.add_argument("--tree")

    p = sub.add_parser("measure", help="compute a leakage measure")
    p.add_argument("--model", required=True)
    p.add_argument("--measure", choices=[m.value for m in Measure], default="mel")
    p.add_argument("--channel", required=True, help="channel or tree name")
    p.add_argument("--prior")
    p.add_argument("--observer")

    p = sub.add_parser("min-scheduler", help="synthesize a leakage-minimizing scheduler")
    p.add_argument("--model", required=True)
    _add_pair(p)
    p.add_argument("--prior")
    p.add_argument("--observer", default="perfect")
    p.add_argument("--capacity", action="store_true", help="minimise min-capacity (uniform prior)")

    p = sub.add_parser("certificate", help="scheduling-independence checks")
    p.add_argument("--model", required=True)
    _add_pair(p)
    p.add_argument("--scheduler")
    p.add_argument("--equivalence", choices=sorted(EQUIVALENCES), default="weak")

    p = sub.add_parser("case-study", help="run the voting or side-channel case study")
    p.add_argument("study", choices=("voting", "side-channel"))
    p.add_argument("--schedulers", default="fs", help="voting: ds | fs | fi | mixed")
    p.add_argument("--tau-prefix", action="store_true", help="voting: voters 1 and 2 take a silent step first")
    p.add_argument("--single-scheduler", action="store_true", help="voting: minimise one scheduler over all ballots")
    p.add_argument("--bits", type=int, default=3, help="side-channel: key length")
    p.add_argument("--shared", action="store_true", help="side-channel: both runs use the same key")
    p.add_argument("--scheduler", default="fi", help="side-channel: ds | fs | fi | parallel")
    p.add_argument("--observer", default="perfect", help="perfect | weak | confusion (side-channel)")
    p.add_argument("--emit", help="write the composed channel to this file")

    p = sub.add_parser("lp-export", help="write the min-leakage LP in LP format")
    p.add_argument("--model", required=True)
    _add_pair(p)
    p.add_argument("--prior", required=True)
    p.add_argument("--observer", default="perfect")
    p.add_argument("--output")

    p = sub.add_parser("batch", help="run the requests listed in the model")
    p.add_argument("--model", required=True)
    return parser


def _request_from_args(args):
    skip = {"command", "model", "full_precision", "format", "log_level"}
    request = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    request["command"] = args.command
    return request


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.command == "validate":
            doc = parse_model(args.model, strict=False)
        elif getattr(args, "model", None):
            doc = parse_model(args.model)
        else:
            doc = None

        result = run_batch(doc) if args.command == "batch" else run_request(doc, _request_from_args(args))
        render = render_table if args.format == "table" else render_json
        print(render(result, full=args.full_precision))
        if result.get("valid") is False:
            logger.error("❌ Model has invalid channels")
            return 3
        return 0
    except QIFError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except (ValueError, KeyError) as e:
        logger.error(f"❌ {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
