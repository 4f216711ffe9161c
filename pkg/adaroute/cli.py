# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# CLI - Command-line entry point: train, diag, ablate, audit and config.
#
# Copyright (C) 2026  The adaroute developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

import argparse
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from .artifacts import write_frame, write_pgm, write_text
from .checkpoint import load_checkpoint, save_checkpoint
from .config import apply_env_seed, default_config, load_config
from .diagnostics import (DEFAULT_PROBES, audit_architecture, audit_graph, cka_matrix,
                          erf_of_model, expert_activation_map, probe_images)
from .errors import (AdaRouteError, ConfigurationError, IntegrityError, MigrationError,
                     NumericalError)
from .experiments import load_grid, run_ablation
from .model import build_model, make_stream, train
from .router import CHANNEL_HEADS, SPATIAL_HEADS
from .tensor import Tensor

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
DIAGNOSTICS = ("cka", "erf", "expert-map", "audit")
AUDIT_ARCHS = ("toy", "swin-b", "swin-l", "convnext-b", "convnext-l")


def cmd_train(args) -> int:
    config = apply_env_seed(load_config(args.config))
    if args.steps is not None:
        config.train.steps = args.steps
    config.validate()
    output = args.output if args.output is not None else config.output_dir
    graph = build_model(config)
    report = train(graph, config)
    report.to_csv(os.path.join(output, "report.csv"))
    write_text(os.path.join(output, "config.json"), config.to_json() + "\n")
    save_checkpoint(graph, os.path.join(output, "checkpoint"), config, report.state)
    print("final loss {:.6f}, final metric {:.6f}, trainable {}".format(
        report.final_loss, report.final_metric, graph.count_trainable()))
    return EXIT_OK


def cmd_diag(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    graph, config = ckpt.graph, ckpt.config
    output = args.output if args.output is not None else os.path.join(args.checkpoint, "diagnostics")
    n = args.probes if args.probes is not None else DEFAULT_PROBES
    if n < 1:
        raise ConfigurationError("--probes must be positive, got {}".format(n))
    size = config.task.image_size
    channels = config.backbone.in_channels

    if args.kind == "cka":
        probes = Tensor(probe_images(n, channels, size, config.seed))
        frame = cka_matrix(graph, probes).to_frame()
        write_frame(frame, os.path.join(output, "cka.csv"), index=True)
    elif args.kind == "erf":
        erf = erf_of_model(graph, probe_images(n, channels, size, config.seed), args.layer)
        write_frame(erf.to_frame(), os.path.join(output, "erf.csv"))
        write_pgm(os.path.join(output, "erf.pgm"), erf.values)
        print("erf support {} of {} pixels".format(erf.support_size(), erf.values.size))
    elif args.kind == "expert-map":
        images = make_stream(config).eval_batch(n).inputs
        amap = expert_activation_map(graph, images, args.head, args.stage)
        name = "expert_map_{}_s{}".format(amap.head, args.stage)
        write_frame(amap.to_frame(), os.path.join(output, name + ".csv"), index=True)
        write_pgm(os.path.join(output, name + ".pgm"), np.nan_to_num(amap.values))
    else:
        audit = audit_graph(graph)
        write_frame(audit.to_frame(), os.path.join(output, "audit.csv"))
        write_text(os.path.join(output, "audit.txt"), audit.to_text())
        print(audit.to_text(), end="")
    logging.info("Wrote " + args.kind + " diagnostics to " + output)
    return EXIT_OK


def cmd_ablate(args) -> int:
    grid = load_grid(args.grid)
    apply_env_seed(grid.base)
    grid.base.validate()
    frame = run_ablation(grid, args.output, args.workers)
    print("{} cells written to {}".format(len(frame), args.output))
    return EXIT_OK


def cmd_audit(args) -> int:
    acfg = toy = None
    if args.adapter is not None:
        config = load_config(args.adapter)
        acfg, toy = config.adapter, config.backbone
    audit = audit_architecture(args.arch, acfg, toy)
    if args.output is not None:
        write_frame(audit.to_frame(), os.path.join(args.output, "audit_" + args.arch + ".csv"))
        write_text(os.path.join(args.output, "audit_" + args.arch + ".txt"), audit.to_text())
    print(audit.to_text(), end="")
    return EXIT_OK


def cmd_config(args) -> int:
    if not args.print_defaults:
        raise ConfigurationError("config needs --print-defaults")
    print(default_config().to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaroute",
                                     description="Dynamic parameter routing adapters on a frozen toy backbone")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging threshold")
    parser.add_argument("--log-file", default=None, help="Log to this file instead of stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="Fine-tune the adapters a config describes")
    p.add_argument("config", help="JSON run config")
    p.add_argument("--steps", type=int, default=None, help="Override train.steps")
    p.add_argument("--output", default=None, help="Artifact directory, config output_dir by default")
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("diag", help="Diagnostics of a saved checkpoint")
    p.add_argument("checkpoint", help="Checkpoint directory")
    p.add_argument("--kind", required=True, choices=DIAGNOSTICS)
    p.add_argument("--head", default="G1", choices=list(CHANNEL_HEADS + SPATIAL_HEADS),
                   help="Gate head for expert-map")
    p.add_argument("--stage", type=int, default=0, help="Stage for expert-map")
    p.add_argument("--probes", type=int, default=None, help="Number of probe images")
    p.add_argument("--layer", default=None, help="Block whose ERF is measured, the last by default")
    p.add_argument("--output", default=None, help="Output directory")
    p.set_defaults(handler=cmd_diag)

    p = commands.add_parser("ablate", help="Run a one-factor-at-a-time ablation grid")
    p.add_argument("grid", help="JSON grid with base config and axes")
    p.add_argument("--output", default="ablation.csv", help="Consolidated CSV")
    p.add_argument("--workers", type=int, default=1, help="Cells run in parallel")
    p.set_defaults(handler=cmd_ablate)

    p = commands.add_parser("audit", help="Closed-form trainable parameter audit")
    p.add_argument("--arch", required=True, choices=AUDIT_ARCHS)
    p.add_argument("--adapter", default=None, help="JSON run config whose adapter section is audited")
    p.add_argument("--output", default=None, help="Directory for the ledger CSV and text")
    p.set_defaults(handler=cmd_audit)

    p = commands.add_parser("config", help="Configuration helpers")
    p.add_argument("--print-defaults", action="store_true", help="Print the default run config")
    p.set_defaults(handler=cmd_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG
    logging.basicConfig(level=getattr(logging, args.log_level), filename=args.log_file,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.handler(args)
    except (ConfigurationError, IntegrityError, MigrationError) as e:
        print("adaroute: error: " + str(e), file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print("adaroute: numerical failure: " + str(e), file=sys.stderr)
        return EXIT_NUMERICAL
    except AdaRouteError as e:
        print("adaroute: " + str(e), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
