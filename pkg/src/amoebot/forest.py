"""Parent-pointer forests, the output format of the shortest-path programs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .triangular_grid import Direction, Node


@dataclass
class ParentForest:
    """Per-amoebot membership and optional parent direction.

    Roots are members without a parent. Non-members never have a parent.
    """

    members: set = field(default_factory=set)
    parent: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, nodes, member: np.ndarray, parent: np.ndarray) -> "ParentForest":
        f = cls()
        for i, u in enumerate(nodes):
            if member[i]:
                f.members.add(u)
                if parent[i] >= 0:
                    f.parent[u] = Direction(int(parent[i]))
        return f

    @property
    def roots(self) -> set:
        return {u for u in self.members if u not in self.parent}

    def parent_node(self, u) -> Node | None:
        d = self.parent.get(u)
        return None if d is None else Node(*u).step(d)

    def edges(self) -> list[tuple[Node, Node]]:
        return sorted((u, u.step(d)) for u, d in self.parent.items())

    def status(self, u) -> str:
        if u not in self.members:
            return "NONE"
        d = self.parent.get(u)
        return "ROOT" if d is None else d.name

    def format(self, nodes) -> str:
        return "".join(f"{u.a} {u.b} {self.status(u)}\n" for u in sorted(nodes))

    @classmethod
    def parse(cls, text: str) -> "ParentForest":
        f = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            body = raw.split("#", 1)[0].split()
            if not body:
                continue
            if len(body) != 3:
                raise ValueError(f"line {lineno}: expected 'a b parent_dir|ROOT|NONE'")
            u = Node(int(body[0]), int(body[1]))
            tag = body[2]
            if tag == "NONE":
                continue
            f.members.add(u)
            if tag != "ROOT":
                try:
                    f.parent[u] = Direction[tag]
                except KeyError:
                    raise ValueError(f"line {lineno}: unknown direction {tag!r}") from None
        return f

    def __eq__(self, other) -> bool:
        return isinstance(other, ParentForest) and self.members == other.members and self.parent == other.parent
