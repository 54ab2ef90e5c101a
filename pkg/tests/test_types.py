import pytest
from hypothesis import given, settings, strategies as st

from lspdsim.types import (MK, CacheGeometry, Coord, Flit, IncompletePacketError, Packet,
                           SimConfig, emission_class, flit_count_for, fragment, reassemble)

CFG = SimConfig()


@pytest.mark.parametrize("kind,n", [
    (MK.DIRECTORY_ACCESS, 1), (MK.DIRECTORY_REPLY, 1), (MK.REQUEST_REDIRECTION, 1),
    (MK.L2_BLOCK_WRITEBACK, 16), (MK.L2_BLOCK_MIGRATION, 16), (MK.REMOTE_L2_ACCESS, 4),
])
def test_fixed_flit_counts(kind, n):
    assert flit_count_for(kind, CFG) == n


def test_data_replies_carry_one_l1_line():
    # 32 B L1 line over 4 B flits
    assert flit_count_for(MK.REMOTE_L2_REPLY, CFG) == 8
    assert flit_count_for(MK.MEMORY_FETCH_REPLY, CFG) == 8
    assert flit_count_for(MK.NEGATIVE_DIRECTORY_REPLY, CFG) == 1
    assert flit_count_for(MK.TRAP_REPLY, CFG) == 1


def test_flit_count_override():
    cfg = SimConfig(flit_counts={MK.REMOTE_L2_ACCESS: 2})
    assert flit_count_for(MK.REMOTE_L2_ACCESS, cfg) == 2
    with pytest.raises(ValueError):
        SimConfig(flit_counts={MK.REMOTE_L2_ACCESS: 0})


def test_config_defaults_and_validation():
    assert CFG.directory_node == Coord(2, 2)
    assert CFG.memory_node == CFG.directory_node
    assert CFG.flit_payload_bytes == 4
    with pytest.raises(ValueError):
        SimConfig(mesh_rows=1, mesh_cols=1)
    with pytest.raises(ValueError):
        SimConfig(l1=CacheGeometry(4, 2, 128))
    with pytest.raises(ValueError):
        SimConfig(directory_node=Coord(9, 9))
    with pytest.raises(ValueError):
        CacheGeometry(0, 4, 64)


@given(st.integers(0, (1 << 30) - 1))
def test_address_decomposition_roundtrip(addr):
    g = CFG.l2
    tag, index, offset = g.decompose(addr)
    assert 0 <= index < g.sets and 0 <= offset < g.line_size
    assert g.compose(tag, index, offset) == addr


def test_emission_classes_order_directory_first():
    assert emission_class(MK.DIRECTORY_ACCESS) < emission_class(MK.REMOTE_L2_REPLY)
    assert emission_class(MK.REMOTE_L2_REPLY) < emission_class(MK.L2_BLOCK_MIGRATION)
    assert emission_class(MK.L2_BLOCK_MIGRATION) < emission_class(MK.L2_BLOCK_WRITEBACK)


def test_priority_key_orders_by_age_then_ids():
    a = Flit(3, 10, 4, Coord(0, 0), Coord(1, 1), MK.REMOTE_L2_ACCESS)
    b = Flit(0, 11, 4, Coord(0, 0), Coord(1, 1), MK.REMOTE_L2_ACCESS)
    c = Flit(1, 10, 4, Coord(0, 0), Coord(1, 1), MK.REMOTE_L2_ACCESS)
    b.set_age(2)
    flits = sorted([a, b, c], key=lambda f: f.key)
    assert flits == sorted([a, b, c], key=Flit.priority)
    assert [f.packet_id for f in flits] == [11, 10, 10]
    assert [f.flit_id for f in flits[1:]] == [1, 3]


kinds = st.sampled_from(list(MK))


@settings(max_examples=200)
@given(kinds, st.data())
def test_fragment_reassemble_roundtrip(kind, data):
    n = flit_count_for(kind, CFG)
    body = data.draw(st.binary(max_size=n * CFG.flit_payload_bytes))
    order = data.draw(st.permutations(range(n)))
    p = Packet(kind, Coord(0, 1), Coord(3, 2), tag=77, aux=Coord(1, 1), flags=1,
               data=body, packet_id=5, created=9)
    flits = fragment(p, CFG)
    assert len(flits) == n
    assert all(f.total_flits == n and f.packet_id == 5 for f in flits)
    assert reassemble(flits[i] for i in order) == p


def test_fragment_rejects_oversized_body():
    p = Packet(MK.DIRECTORY_ACCESS, Coord(0, 0), Coord(0, 1), data=bytes(5))
    with pytest.raises(ValueError):
        fragment(p, CFG)


def test_reassemble_errors():
    p = Packet(MK.REMOTE_L2_ACCESS, Coord(0, 0), Coord(0, 1), packet_id=1)
    q = Packet(MK.REMOTE_L2_ACCESS, Coord(0, 0), Coord(0, 1), packet_id=2)
    fp, fq = fragment(p, CFG), fragment(q, CFG)
    with pytest.raises(IncompletePacketError):
        reassemble(fp[:3])
    with pytest.raises(IncompletePacketError):
        reassemble(fp[:3] + fp[:1])
    with pytest.raises(IncompletePacketError):
        reassemble(fp[:3] + fq[3:])
    with pytest.raises(IncompletePacketError):
        reassemble([])
