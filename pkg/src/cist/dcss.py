"""Double-compare single-swap over single-word CAS.

The main address is a slot ``slots[index]`` of a child list, the auxiliary
address is the ``status`` word of an object (an inner node).  The write is
announced by parking a :class:`DcssDescriptor` in the main slot; whoever finds
it there reads the auxiliary word once, fixes the outcome with a CAS and swings
the slot to the final value.  A slot's logical value is therefore always a
plain node, never a descriptor.
"""

import enum

from . import hooks
from ._atomic import cas_item, cas_outcome

UNDECIDED, SUCCEEDED, FAILED_AUX = 0, 1, 2


class DcssResult(enum.Enum):
    SUCCESS = "success"
    FAILED_MAIN_ADDRESS = "failed_main_address"
    FAILED_AUX_ADDRESS = "failed_aux_address"


SUCCESS = DcssResult.SUCCESS
FAILED_MAIN_ADDRESS = DcssResult.FAILED_MAIN_ADDRESS
FAILED_AUX_ADDRESS = DcssResult.FAILED_AUX_ADDRESS


class DcssDescriptor:
    __slots__ = ("slots", "index", "expected", "new", "aux", "expected_aux",
                 "outcome", "_rc")

    def __init__(self, slots, index, expected, new, aux, expected_aux):
        self.slots = slots
        self.index = index
        self.expected = expected
        self.new = new
        self.aux = aux
        self.expected_aux = expected_aux
        self.outcome = UNDECIDED
        self._rc = 0

    def _poison(self):
        self.slots = self.expected = self.new = self.aux = None

    def __repr__(self):
        state = ("undecided", "succeeded", "failed_aux")[self.outcome]
        return f"<DcssDescriptor {state} slot={self.index}>"


def _complete(desc):
    if desc.outcome == UNDECIDED:
        # The auxiliary word is read once per help attempt.  A successful
        # outcome CAS is the logical write; the slot swing below only makes
        # it physical.
        seen = desc.aux.status
        decided = SUCCEEDED if seen == desc.expected_aux else FAILED_AUX
        if (cas_outcome(desc, UNDECIDED, decided) and decided == SUCCEEDED
                and hooks.enabled):
            hooks.fire("slot_write", desc.aux, desc.index, desc.new, seen)
    if desc.outcome == SUCCEEDED:
        cas_item(desc.slots, desc.index, desc, desc.new)
    else:
        cas_item(desc.slots, desc.index, desc, desc.expected)


def dcss(slots, index, expected, new, aux, expected_aux, reclaim=None):
    """Set ``slots[index]`` from ``expected`` to ``new`` iff ``aux.status``
    equals ``expected_aux`` at the decision point.

    ``expected`` must not be a descriptor.  When ``reclaim`` is given, the
    descriptor is retired through it once it has left the slot.
    """
    desc = DcssDescriptor(slots, index, expected, new, aux, expected_aux)
    while True:
        if cas_item(slots, index, expected, desc):
            break
        cur = slots[index]
        if cur.__class__ is DcssDescriptor:
            _complete(cur)
            continue
        if cur is expected:
            continue
        # Never installed; nobody else can hold a reference to it.
        desc._rc = 2
        return FAILED_MAIN_ADDRESS
    if hooks.enabled:
        hooks.fire("dcss_installed", desc)
    _complete(desc)
    result = SUCCESS if desc.outcome == SUCCEEDED else FAILED_AUX_ADDRESS
    if reclaim is not None:
        reclaim.retire(desc)
    return result


def dcss_read(slots, index):
    """Read ``slots[index]``, helping any descriptor parked there.

    Wait-free: at most one descriptor is helped, and its decided logical value
    is returned directly instead of re-reading the slot.
    """
    value = slots[index]
    if value.__class__ is DcssDescriptor:
        _complete(value)
        return value.new if value.outcome == SUCCEEDED else value.expected
    return value
