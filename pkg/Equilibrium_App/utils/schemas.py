# utils/schemas.py - JSON document loading with schema validation
import os
import json
import logging
from functools import lru_cache

from jsonschema import Draft202012Validator

from config import Config
from errors import InvalidInstanceError
from models import PcpInstance, EncodingParams
from utils.ctmc_core import RateGraph


@lru_cache(maxsize=None)
def load_schema(name, schema_dir=None):
    path = os.path.join(schema_dir or Config.SCHEMA_DIR, f'{name}.schema.json')
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def validate_document(document, name):
    """Raise InvalidInstanceError naming the first schema violation"""
    validator = Draft202012Validator(load_schema(name))
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = '/'.join(str(p) for p in first.absolute_path) or '<root>'
        raise InvalidInstanceError(f"{name} document invalid at {where}: {first.message}")
    return document


def _read(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidInstanceError(f"{path} is not valid JSON: {e}") from None


def load_instance(path):
    instance = PcpInstance.from_dict(validate_document(_read(path), 'instance'))
    logging.info(f"Loaded instance with {instance.n} pairs from {path}")
    return instance


def load_params(path):
    return EncodingParams.from_dict(validate_document(_read(path), 'params'))


def load_rate_graph(path):
    return RateGraph.from_json(validate_document(_read(path), 'rate_graph'))
