"""
Parser for the line-oriented network text format.

A file holds one or more blocks. Each block may start with a header such as
``[snapshot 3 2020-01-01T00:00:00+00:00]`` or ``[observation t5]``, followed by
``@var`` annotation lines and ``idA ; idB ; {rel,...}`` pair lines.
In a topology block, a pair line whose relations are all size atoms
(``smaller``, ``equal``, ``larger``) states the qualitative size of the pair.
"""

import re
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .calculus import RCC8, SIZE, Calculus, RelationSet
from .exceptions import ParseError
from .qcn import ConstraintNetwork, Variable

logger = logging.getLogger(__name__)


@dataclass
class VariableSpec:
    """Annotations collected for one variable; ``exists`` is None when unstated."""

    name: str
    object_type: Optional[str] = None
    exists: Optional[bool] = None
    coref: Optional[str] = None


@dataclass
class NetworkBlock:
    """One parsed block: its header label, variables and pair labels as written."""

    label: str
    variables: Dict[str, VariableSpec] = field(default_factory=dict)
    pairs: Dict[Tuple[str, str], RelationSet] = field(default_factory=dict)
    sizes: Dict[Tuple[str, str], RelationSet] = field(default_factory=dict)

    def mention(self, name: str) -> VariableSpec:
        if name not in self.variables:
            self.variables[name] = VariableSpec(name)
        return self.variables[name]

    def _build(self, labels: Dict[Tuple[str, str], RelationSet], calculus: Calculus) -> ConstraintNetwork:
        variables = [
            Variable(decl.name, decl.object_type, decl.exists is not False, decl.coref)
            for decl in self.variables.values()
        ]
        network = ConstraintNetwork(variables, calculus=calculus)
        for (a, b), rs in labels.items():
            network = network.constrained(a, b, rs)
        return network

    def to_network(self, calculus: Calculus = RCC8) -> ConstraintNetwork:
        """Network over the block's variables in order of first mention."""
        return self._build(self.pairs, calculus)

    def to_size_network(self) -> Optional[ConstraintNetwork]:
        """Size network over the same variables, or None when no size is stated."""
        return self._build(self.sizes, SIZE) if self.sizes else None


class NetworkParser:
    """Parse canonical network text into blocks and networks."""

    HEADER_PATTERN = re.compile(r'^\[\s*(?:observation|snapshot|network)\s+([^\]]+?)\s*\]$')
    VAR_PATTERN = re.compile(r'^@var\s+(\S+)((?:\s+\w+=\S+)*)\s*$')
    ATTRIBUTE_PATTERN = re.compile(r'(\w+)=(\S+)')
    PAIR_PATTERN = re.compile(r'^([^\s;]+)\s*;\s*([^\s;]+)\s*;\s*\{([^}]*)\}$')

    @staticmethod
    def parse_relations(text: str, calculus: Calculus = RCC8) -> RelationSet:
        """Parse ``dc,ec`` or ``{dc, ec}`` into a label."""
        body = text.strip()
        if body.startswith('{') and body.endswith('}'):
            body = body[1:-1]
        members = [m.strip().lower() for m in body.split(',') if m.strip()]
        return calculus.relation_set(members)

    @staticmethod
    def is_size_label(text: str) -> bool:
        members = {m.strip().lower() for m in text.strip().strip('{}').split(',') if m.strip()}
        return bool(members) and members <= SIZE.universal

    @staticmethod
    def parse_blocks(text: str, calculus: Calculus = RCC8, source: str = '<text>') -> List[NetworkBlock]:
        """
        Parse every block of a network text.

        Repeated statements about the same pair are conjoined.

        Raises:
            ParseError: On any malformed line
        """
        blocks: List[NetworkBlock] = []
        current: Optional[NetworkBlock] = None

        for line_num, raw in enumerate(text.splitlines(), start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue

            header = NetworkParser.HEADER_PATTERN.match(line)
            if header:
                current = NetworkBlock(header.group(1))
                blocks.append(current)
                continue
            if current is None:
                current = NetworkBlock('network')
                blocks.append(current)

            var = NetworkParser.VAR_PATTERN.match(line)
            if var:
                decl = current.mention(var.group(1))
                for key, value in NetworkParser.ATTRIBUTE_PATTERN.findall(var.group(2)):
                    if key == 'type':
                        decl.object_type = value
                    elif key == 'exists':
                        if value.lower() not in ('true', 'false'):
                            raise ParseError(f"{source}:{line_num}: exists must be true or false")
                        decl.exists = value.lower() == 'true'
                    elif key == 'coref':
                        decl.coref = value
                    else:
                        raise ParseError(f"{source}:{line_num}: unknown attribute '{key}'")
                continue

            pair = NetworkParser.PAIR_PATTERN.match(line)
            if not pair:
                raise ParseError(f"{source}:{line_num}: expected 'idA ; idB ; {{rel,...}}', got '{line}'")
            a, b = pair.group(1), pair.group(2)
            if a == b:
                raise ParseError(f"{source}:{line_num}: pair relates '{a}' to itself")
            store, pair_calculus = current.pairs, calculus
            if calculus is RCC8 and NetworkParser.is_size_label(pair.group(3)):
                store, pair_calculus = current.sizes, SIZE
            relations = NetworkParser.parse_relations(pair.group(3), pair_calculus)
            current.mention(a)
            current.mention(b)
            if (b, a) in store:
                store[(b, a)] &= pair_calculus.converse(relations)
            elif (a, b) in store:
                store[(a, b)] &= relations
            else:
                store[(a, b)] = relations

        logger.debug(f"Parsed {len(blocks)} network blocks from {source}")
        return blocks

    @staticmethod
    def parse_network(text: str, calculus: Calculus = RCC8, source: str = '<text>') -> ConstraintNetwork:
        """Parse text holding exactly one network."""
        blocks = NetworkParser.parse_blocks(text, calculus, source)
        if len(blocks) > 1:
            raise ParseError(f"{source}: expected one network, found {len(blocks)} blocks")
        return blocks[0].to_network(calculus) if blocks else ConstraintNetwork(calculus=calculus)

    @staticmethod
    def format_blocks(blocks: Iterable[Tuple[str, ConstraintNetwork]], kind: str = 'snapshot') -> str:
        """Render labelled networks as consecutive headed blocks."""
        parts = [f"[{kind} {label}]\n{network.to_text()}" for label, network in blocks]
        return '\n'.join(parts)
