import pytest

from cke.core import ChainState, crt_complete, crt_offer, crt_respond
from cke.groups import DomainParams, builtin_group

# Root-of-trust group for test6 chains: differs from (47, 5) in both p and g.
CRT_SMALL = DomainParams.make(23, 7)


def small_chains(along_secret: int = 2, busu_secret: int = 7) -> tuple[ChainState, ChainState]:
    """Both peers' chains after root-of-trust setup; defaults give a root key of 2."""
    sa, offer = crt_offer(None, params=CRT_SMALL, secret=along_secret)
    reply, sb = crt_respond(offer, None, secret=busu_secret, strong=False)
    crt_complete(sa, reply, strong=False)
    return ChainState.from_crt(sa), ChainState.from_crt(sb)


@pytest.fixture
def test6():
    return builtin_group("test6")


@pytest.fixture
def chains():
    return small_chains()
