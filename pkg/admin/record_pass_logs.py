#!/usr/bin/env python3
"""
Optimizer log recorder

Runs a live optimizer with change reporting over every defined function of
the textual IR modules in a directory and stores one raw log per function,
named the way `analyze passes --replay-dir` looks them up.

Usage: python admin/record_pass_logs.py IR_DIR OUT_DIR [--pipeline 'default<O3>']

Environment variables required:
- IRFORGE_OPT: path to an opt compatible optimizer
"""

import argparse
import logging
import os
import sys
import tempfile

from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from errors import IrForgeError  # noqa: E402
from ir.extract import extract_function  # noqa: E402
from ir.parser import parse_module  # noqa: E402
from pass_ops import log_file_name, parse_print_changed, run_opt_trace  # noqa: E402

load_dotenv()

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def record(ir_dir: str, out_dir: str, pipeline: str, optimizer: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    written = 0
    for filename in sorted(os.listdir(ir_dir)):
        if not filename.endswith(".ll"):
            continue
        with open(os.path.join(ir_dir, filename), "r", encoding="utf-8") as f:
            text = f.read()
        try:
            module = parse_module(text)
        except IrForgeError as e:
            logger.warning(f"Skipping {filename}: {e}")
            continue
        for fn in module.defined_functions():
            target = f"{filename}::{fn.name}"
            with tempfile.NamedTemporaryFile("w", suffix=".ll", delete=False) as tmp:
                tmp.write(extract_function(text, fn.name))
            try:
                trace = run_opt_trace(tmp.name, pipeline, optimizer)
            except IrForgeError as e:
                logger.error(f"{target}: {e}")
                continue
            finally:
                os.unlink(tmp.name)
            with open(os.path.join(out_dir, log_file_name(target)), "w", encoding="utf-8") as f:
                f.write(trace.log)
            logger.info(f"{target}: {len(parse_print_changed(trace.log))} event(s)")
            written += 1
    return written


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Record optimizer change-report logs")
    parser.add_argument("ir_dir")
    parser.add_argument("out_dir")
    parser.add_argument("--pipeline", default="default<O3>")
    args = parser.parse_args()

    optimizer = os.getenv("IRFORGE_OPT")
    if not optimizer:
        logger.error("IRFORGE_OPT is not set")
        sys.exit(1)
    count = record(args.ir_dir, args.out_dir, args.pipeline, optimizer)
    logger.info(f"Recorded {count} log(s) into {args.out_dir}")
