"""Template command protocol between the human and the robots.

Commands are structured template ids with slot values; the rendered strings
are presentation only.  Every message doubles as a relational event whose
type is the template's family: status_query, instruct, obey_reply,
refuse_reply, or info_or_explain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# event-type vocabulary for the rate-model layer
EV_STATUS_QUERY = 0
EV_INSTRUCT = 1
EV_OBEY = 2
EV_REFUSE = 3
EV_INFO = 4
EVENT_TYPE_COUNT = 5

EVENT_TYPE_NAMES = (
    "status_query",
    "instruct",
    "obey_reply",
    "refuse_reply",
    "info_or_explain",
)

TEMPLATE_EVENT_TYPES = {
    "status_query": EV_STATUS_QUERY,
    "instruct_goto": EV_INSTRUCT,
    "status_reply": EV_INFO,
    "obey_reply": EV_OBEY,
    "refuse_reply": EV_REFUSE,
    "info_share": EV_INFO,
    "explain_decision": EV_INFO,
}

TEMPLATE_STRINGS = {
    "status_query": "What are you doing?",
    "instruct_goto": "Go to Building {building}.",
    "status_reply_idle": "I am standing by.",
    "status_reply": "I am going to Building {building} to {activity}.",
    "obey_reply": "Sure, I am going there.",
    "refuse_reply": "Sorry, but I have to prioritize going to Building {building}.",
    "info_share": "My priority has been adjusted due to an observed dangerous condition in Building {building}.",
}

ACTIVITY_TEXT = {
    "search_assess": "search the building",
    "extinguish_fire": "put down the fire",
    "carry_to_shelter": "carry a victim to the shelter",
    "shut_gas": "shut down the leak",
    "goto": "check the area",
}


class ProtocolError(ValueError):
    """Malformed or out-of-grammar command message."""


@dataclass(frozen=True)
class CommandMessage:
    template_id: str
    sender: str
    receiver: str
    tick: int
    slots: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.template_id not in TEMPLATE_EVENT_TYPES:
            raise ProtocolError(f"unknown template {self.template_id!r}")

    @property
    def event_type(self) -> int:
        return TEMPLATE_EVENT_TYPES[self.template_id]

    def render(self) -> str:
        if self.template_id == "status_reply" and "building" not in self.slots:
            return TEMPLATE_STRINGS["status_reply_idle"]
        if self.template_id == "explain_decision":
            return self.slots.get("text", "")
        return TEMPLATE_STRINGS[self.template_id].format(**self.slots)

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "sender": self.sender,
            "receiver": self.receiver,
            "tick": self.tick,
            "slots": self.slots,
            "text": self.render(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommandMessage":
        try:
            return cls(
                template_id=d["template_id"],
                sender=d["sender"],
                receiver=d["receiver"],
                tick=int(d["tick"]),
                slots=dict(d.get("slots", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed command message: {exc}") from exc
