"""Record of every simulated client/server message, counted in scalars."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Message:
    sender: str  # "server" or "client<i>"
    receiver: str
    kind: str  # e.g. "upload", "incentive", "params"
    scalars: int
    round: int = 0


@dataclass
class Transcript:
    messages: list[Message] = field(default_factory=list)

    def send(self, sender: str, receiver: str, kind: str, scalars: int, round: int = 0) -> None:
        self.messages.append(Message(sender, receiver, kind, int(scalars), round))

    def select(self, sender: str | None = None, receiver: str | None = None,
               kind: str | None = None) -> list[Message]:
        return [m for m in self.messages
                if (sender is None or m.sender == sender)
                and (receiver is None or m.receiver == receiver)
                and (kind is None or m.kind == kind)]

    def total(self, **filters) -> int:
        return sum(m.scalars for m in self.select(**filters))

    def uplinks(self) -> list[Message]:
        return [m for m in self.messages if m.receiver == "server"]

    def downlinks(self) -> list[Message]:
        return [m for m in self.messages if m.sender == "server"]


def client_name(i: int) -> str:
    return f"client{i}"
