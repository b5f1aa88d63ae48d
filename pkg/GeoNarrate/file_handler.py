"""
File I/O for features, network texts, narratives and structured config files.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Tuple

import yaml

from .calculus import RCC8, Calculus
from .events import Narrative
from .exceptions import ConfigurationError, ParseError, ValidationError
from .feature import TimedFeature
from .parser import NetworkBlock, NetworkParser

logger = logging.getLogger(__name__)


class FileHandler:
    """Reads inputs and writes result files of the pipeline."""

    @staticmethod
    def read_features(filename: str) -> Tuple[List[TimedFeature], List[dict]]:
        """
        Read newline-delimited GeoJSON features.

        Args:
            filename: Path to the NDJSON file

        Returns:
            Tuple of (valid features list, rejected records list)
        """
        features = []
        rejected = []

        try:
            with open(filename, 'r', encoding='utf-8') as f:
                for line_num, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        if not isinstance(record, dict) or record.get('type') != 'Feature':
                            raise ValidationError("record is not a GeoJSON Feature")
                        features.append(TimedFeature.from_geojson(record))

                    except (ValidationError, ValueError, TypeError) as e:
                        logger.warning(f"Line {line_num} rejected: {str(e)}")
                        rejected.append({'line_number': line_num, 'error': str(e), 'raw': line.rstrip('\n')})

            logger.info(f"Loaded {len(features)} valid features, rejected {len(rejected)} records")

        except FileNotFoundError:
            logger.error(f"File not found: {filename}")
            raise

        return features, rejected

    @staticmethod
    def write_rejected(filename: str, rejected: List[dict]):
        """Write rejected records as NDJSON."""
        if not rejected:
            logger.info("No rejected records to write")
            return
        FileHandler.write_records(filename, rejected)
        logger.info(f"Wrote {len(rejected)} rejected records to {filename}")

    @staticmethod
    def load_structured(filename: str) -> Any:
        """
        Load a YAML or JSON document; the extension decides, YAML otherwise.

        Raises:
            ConfigurationError: If the file is missing or malformed
        """
        try:
            with open(filename, 'r', encoding='utf-8') as f:
                if filename.endswith('.json'):
                    return json.load(f)
                return yaml.safe_load(f)
        except FileNotFoundError:
            raise ConfigurationError(f"File not found: {filename}")
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Malformed file {filename}: {e}")

    @staticmethod
    def read_blocks(filename: str, calculus: Calculus = RCC8) -> List[NetworkBlock]:
        """
        Read every network block of a text file.

        Raises:
            ParseError: On malformed content
        """
        try:
            with open(filename, 'r', encoding='utf-8') as f:
                text = f.read()
        except FileNotFoundError:
            raise ParseError(f"File not found: {filename}")
        blocks = NetworkParser.parse_blocks(text, calculus, source=filename)
        if not blocks:
            raise ParseError(f"{filename}: no network found")
        return blocks

    @staticmethod
    def write_text(filename: str, text: str):
        with open(filename, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info(f"Wrote {filename}")

    @staticmethod
    def write_records(filename: str, records: Iterable[Dict[str, Any]]):
        """One JSON object per line with sorted keys."""
        with open(filename, 'w', encoding='utf-8') as f:
            for record in records:
                f.write(json.dumps(record, sort_keys=True) + '\n')

    @staticmethod
    def read_records(filename: str) -> List[Dict[str, Any]]:
        try:
            with open(filename, 'r', encoding='utf-8') as f:
                return [json.loads(line) for line in f if line.strip()]
        except FileNotFoundError:
            raise ParseError(f"File not found: {filename}")
        except json.JSONDecodeError as e:
            raise ParseError(f"{filename}: malformed record: {e}")

    @staticmethod
    def write_narrative(filename: str, narrative: Narrative):
        FileHandler.write_records(filename, narrative.to_records())
        logger.info(f"Wrote narrative with {len(narrative.events)} events to {filename}")

    @staticmethod
    def read_narrative(filename: str) -> Narrative:
        return Narrative.from_records(FileHandler.read_records(filename))

    @staticmethod
    def sha256(filename: str) -> str:
        digest = hashlib.sha256()
        with open(filename, 'rb') as f:
            for chunk in iter(lambda: f.read(65536), b''):
                digest.update(chunk)
        return digest.hexdigest()

    @staticmethod
    def ensure_dir(path: str):
        os.makedirs(path, exist_ok=True)
