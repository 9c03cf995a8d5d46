"""Utility functions shared by the protocol modules."""
import json
import logging
import math
import random
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from . import config
from .errors import DomainError, ScenarioError

logger = logging.getLogger(__name__)


def byte_width(modulus_bits: int) -> int:
    """Number of bytes of a fixed-width field for an N-bit modulus."""
    return (modulus_bits + 7) // 8


def int_to_fixed(value: int, width: int) -> bytes:
    return value.to_bytes(width, 'big')


def fixed_to_int(data: bytes) -> int:
    return int.from_bytes(data, 'big')


def random_unit(rng: random.Random, n: int) -> int:
    """Sample from Z*_n by rejection over [2, n-1]."""
    while True:
        u = rng.randrange(2, n)
        if math.gcd(u, n) == 1:
            return u


def require_unit(value: int, n: int, what: str = 'value'):
    if not 1 <= value < n or math.gcd(value, n) != 1:
        raise DomainError(f"{what} is not in Z*_n")


def make_rng(seed: Optional[int] = None) -> random.Random:
    return random.Random(config.RANDOM_STATE if seed is None else seed)


def load_scenario(path: Path) -> Dict[str, Any]:
    """Load a scenario file.

    Parameters:
    -----------
    path : Path
        JSON scenario file, absolute or relative to the scenario directory

    Returns:
    --------
    dict
        Parsed scenario document
    """
    try:
        file_path = Path(path)
        if not file_path.exists():
            file_path = config.SCENARIO_DIR / file_path
        logger.info(f"Loading scenario from: {file_path}")
        with open(file_path, 'r', encoding='utf-8') as f:
            return json.load(f)

    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading scenario: {str(e)}")
        raise ScenarioError(str(e)) from e


def save_analysis_results(results: Dict[str, Any], filename: str) -> Path:
    """Save result tables to the reports directory.

    Parameters:
    -----------
    results : dict
        Tables to save; DataFrames are written directly, nested dicts one level deep
    filename : str
        Base name for the saved files
    """
    try:
        save_dir = config.REPORTS_DIR / 'summaries'
        save_dir.mkdir(parents=True, exist_ok=True)

        for key, value in results.items():
            if isinstance(value, pd.DataFrame):
                value.to_csv(save_dir / f"{filename}_{key}.csv", index=False)
            elif isinstance(value, dict):
                for sub_key, sub_value in value.items():
                    if isinstance(sub_value, pd.DataFrame):
                        save_path = save_dir / f"{filename}_{key}_{sub_key}.csv"
                        sub_value.to_csv(save_path, index=False)

        logger.info(f"Results saved to CSV files in: {save_dir}")
        return save_dir

    except Exception as e:
        logger.error(f"Error saving results: {str(e)}")
        raise
