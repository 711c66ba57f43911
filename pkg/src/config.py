#!/usr/bin/env python3
"""
Configuration for the triple set prediction engine
Loads environment settings, configures logging and parses flat key-value run configs
"""

import os
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional

from dotenv import load_dotenv

from .errors import ConfigError

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


def thread_cap() -> int:
    """Worker cap from DIFFTSP_THREADS, then the older KGDIFF_THREADS, then the CPU count"""
    raw = os.getenv("DIFFTSP_THREADS") or os.getenv("KGDIFF_THREADS") or str(os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError as e:
        raise ConfigError("DIFFTSP_THREADS", f"not an integer: {raw!r}") from e


# Configuration Constants
KGDIFF_THREADS = thread_cap()
DEFAULT_SUBGRAPH_CAP = int(os.getenv("KGDIFF_DEFAULT_CAP", "256"))
CHECKPOINT_MAGIC = b"KGDF"
CHECKPOINT_VERSION = 1

# Config sections accepted in flat run-config files
CONFIG_SECTIONS = ("data", "model", "diffusion", "train", "sample", "eval", "run")


def parse_flat_config(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    """Parse `section.key = value` lines into a flat dict; `#` starts a comment"""
    values: Dict[str, str] = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}", "expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        section = key.split(".", 1)[0]
        if "." not in key or section not in CONFIG_SECTIONS:
            raise ConfigError(key, f"unknown config key (sections: {', '.join(CONFIG_SECTIONS)})")
        values[key] = value
    return values


def load_flat_config(path: Optional[Path], overrides: Optional[Dict[str, str]] = None) -> Dict[str, str]:
    """Read a config file (if given) and apply command-line overrides on top"""
    values: Dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise ConfigError("config", f"cannot read {path}: {e}") from e
        values.update(parse_flat_config(text.splitlines(), source=str(path)))
    for key, value in (overrides or {}).items():
        values.update(parse_flat_config([f"{key} = {value}"], source="command line"))
    logger.debug(f"Loaded {len(values)} config values from {path or 'defaults'}")
    return values


def nest_flat_config(values: Dict[str, str]) -> Dict[str, Dict[str, str]]:
    """Turn {'train.lr': '0.1'} into {'train': {'lr': '0.1'}} for pydantic validation"""
    nested: Dict[str, Dict[str, str]] = {}
    for key, value in values.items():
        section, field = key.split(".", 1)
        nested.setdefault(section, {})[field] = value
    return nested
